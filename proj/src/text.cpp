#include "gpas/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "gpas/errors.hpp"

namespace gpas {

using json = nlohmann::json;

Vocabulary::Vocabulary() {
    for (std::string_view name : token::names) add(std::string(name), 0);
}

void Vocabulary::add(std::string token, std::size_t count) {
    const auto id = static_cast<TokenId>(id_to_token_.size());
    if (!token_to_id_.emplace(token, id).second) throw SchemaError("vocabulary: duplicate token '" + token + "'");
    id_to_token_.push_back(std::move(token));
    counts_.push_back(count);
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> sentences, std::size_t min_count) {
    std::map<std::string, std::size_t> counts;
    for (const auto &sentence : sentences)
        for (const auto &tok : sentence) ++counts[tok];

    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto &[tok, n] : counts) {
        if (n < min_count) continue;
        if (std::find(std::begin(token::names), std::end(token::names), tok) != std::end(token::names)) continue;
        kept.emplace_back(tok, n);
    }
    std::stable_sort(kept.begin(), kept.end(), [](const auto &a, const auto &b) { return a.second > b.second; });

    Vocabulary vocab;
    for (auto &[tok, n] : kept) vocab.add(tok, n);
    return vocab;
}

Vocabulary Vocabulary::load(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open vocabulary file " + path.string());
    Vocabulary vocab;
    vocab.token_to_id_.clear();
    vocab.id_to_token_.clear();
    vocab.counts_.clear();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError("expected token<TAB>count", lineno);
        std::string tok = line.substr(0, tab);
        std::size_t count = 0;
        try {
            std::size_t used = 0;
            count = std::stoull(line.substr(tab + 1), &used);
            if (used != line.size() - tab - 1) throw std::invalid_argument("trailing");
        } catch (const std::exception &) {
            throw ParseError("bad count in vocabulary line", lineno);
        }
        const std::size_t id = vocab.id_to_token_.size();
        if (id < token::reserved_count && tok != token::names[id]) {
            throw SchemaError("vocabulary: reserved token " + std::string(token::names[id]) + " expected at line " +
                              std::to_string(lineno));
        }
        vocab.add(std::move(tok), count);
    }
    if (vocab.size() < token::reserved_count) throw SchemaError("vocabulary: missing reserved tokens");
    return vocab;
}

void Vocabulary::save(const std::filesystem::path &path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write vocabulary file " + path.string());
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) out << id_to_token_[i] << '\t' << counts_[i] << '\n';
}

TokenId Vocabulary::id(std::string_view tok) const { return find(tok).value_or(token::unk); }

std::optional<TokenId> Vocabulary::find(std::string_view tok) const {
    auto it = token_to_id_.find(std::string(tok));
    if (it == token_to_id_.end()) return std::nullopt;
    return it->second;
}

const std::string &Vocabulary::token(TokenId id) const {
    if (id >= id_to_token_.size()) throw LookupError("token id " + std::to_string(id) + " outside vocabulary");
    return id_to_token_[id];
}

std::size_t Vocabulary::count(TokenId id) const {
    if (id >= counts_.size()) throw LookupError("token id " + std::to_string(id) + " outside vocabulary");
    return counts_[id];
}

std::vector<std::string> normalize_text(std::string_view raw) {
    std::string cleaned;
    cleaned.reserve(raw.size());
    for (char ch : raw) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            cleaned.push_back(' ');
        } else if (c < 0x80 && std::isalpha(c)) {
            cleaned.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    std::vector<std::string> tokens;
    std::istringstream words(cleaned);
    for (std::string w; words >> w;) tokens.push_back(std::move(w));
    return tokens;
}

std::vector<TokenId> encode_fixed(std::span<const std::string> tokens, const Vocabulary &vocab, std::size_t length) {
    if (length == 0) throw ConfigError("encode_fixed: length must be at least 1");
    std::vector<TokenId> ids;
    ids.reserve(std::max(length, tokens.size() + 1));
    for (const auto &tok : tokens) ids.push_back(vocab.id(tok));
    ids.push_back(token::eos);
    if (ids.size() > length) {
        ids.resize(length);
        ids.back() = token::eos;
    }
    ids.resize(length, token::blank);
    return ids;
}

std::vector<std::string> decode_tokens(std::span<const TokenId> ids, const Vocabulary &vocab) {
    std::vector<std::string> out;
    for (TokenId id : ids) {
        if (id == token::eos) break;
        if (id == token::pad || id == token::blank || id == token::bos) continue;
        out.push_back(vocab.token(id));
    }
    return out;
}

std::vector<double> loss_mask(std::span<const TokenId> reference, bool mask_padding) {
    std::vector<double> mask(reference.size(), 1.0);
    if (!mask_padding) return mask;
    auto eos = std::find(reference.begin(), reference.end(), token::eos);
    if (eos == reference.end()) return mask;
    for (auto i = static_cast<std::size_t>(eos - reference.begin()) + 1; i < mask.size(); ++i) mask[i] = 0.0;
    return mask;
}

// ---------------------------------------------------------------- corpus I/O

namespace {

RawRecord parse_record(const std::string &line, std::size_t lineno) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error &e) {
        throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
    }
    if (!j.is_object()) throw ParseError("record must be a JSON object", lineno);
    auto field = [&](const char *name) -> const json & {
        auto it = j.find(name);
        if (it == j.end()) throw ParseError(std::string("missing field '") + name + "'", lineno);
        return *it;
    };

    RawRecord rec;
    const json &id = field("id");
    if (!id.is_string()) throw ParseError("'id' must be a string", lineno);
    rec.id = id.get<std::string>();
    const json &ref = field("reference");
    if (!ref.is_string()) throw ParseError("'reference' must be a string", lineno);
    rec.reference = ref.get<std::string>();

    const json &segs = field("segments");
    if (!segs.is_array()) throw ParseError("'segments' must be an array", lineno);
    for (const json &s : segs) {
        if (!s.is_object()) throw ParseError("segment must be an object", lineno);
        RawSegment seg;
        auto sentence = s.find("sentence");
        if (sentence == s.end() || !sentence->is_string()) throw ParseError("segment needs a string 'sentence'", lineno);
        seg.sentence = sentence->get<std::string>();
        auto visual = s.find("visual");
        if (visual == s.end() || !visual->is_array()) throw ParseError("segment needs a 'visual' array", lineno);
        for (const json &v : *visual) {
            if (!v.is_number()) throw ParseError("non-numeric visual entry", lineno);
            seg.visual.push_back(v.get<double>());
        }
        if (auto conf = s.find("confidence"); conf != s.end()) {
            if (!conf->is_number()) throw ParseError("'confidence' must be numeric", lineno);
            seg.confidence = conf->get<double>();
        }
        rec.segments.push_back(std::move(seg));
    }
    return rec;
}

} // namespace

std::vector<RawRecord> read_raw_corpus(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open corpus file " + path.string());
    std::vector<RawRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        records.push_back(parse_record(line, lineno));
    }
    return records;
}

std::string to_json_line(const RawRecord &record) {
    json segs = json::array();
    for (const auto &s : record.segments) {
        json seg = {{"sentence", s.sentence}, {"visual", s.visual}};
        if (s.confidence) seg["confidence"] = *s.confidence;
        segs.push_back(std::move(seg));
    }
    json j = {{"id", record.id}, {"segments", std::move(segs)}, {"reference", record.reference}};
    return j.dump();
}

void write_raw_corpus(const std::filesystem::path &path, std::span<const RawRecord> records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write corpus file " + path.string());
    for (const auto &r : records) out << to_json_line(r) << '\n';
}

Vocabulary build_vocab(std::span<const RawRecord> records, std::size_t min_count) {
    std::vector<std::vector<std::string>> sentences;
    for (const auto &r : records) {
        for (const auto &s : r.segments) sentences.push_back(normalize_text(s.sentence));
        sentences.push_back(normalize_text(r.reference));
    }
    return Vocabulary::build(sentences, min_count);
}

CorpusSplit encode_corpus(std::span<const RawRecord> records, const Vocabulary &vocab, const CorpusLayout &layout,
                          SplitRole role) {
    if (layout.segments == 0 || layout.words == 0) throw ConfigError("corpus layout needs positive L_m and L_k");
    CorpusSplit split;
    split.role = role;
    std::size_t visual_dim = layout.visual_dim;
    std::unordered_set<std::string> seen;
    for (const auto &raw : records) {
        if (!seen.insert(raw.id).second) throw SchemaError("duplicate record id '" + raw.id + "'");
        if (raw.segments.size() != layout.segments) {
            throw SchemaError("record '" + raw.id + "' has " + std::to_string(raw.segments.size()) +
                              " segments, expected " + std::to_string(layout.segments));
        }
        ProposalRecord rec;
        rec.id = raw.id;
        for (const auto &s : raw.segments) {
            if (visual_dim == 0) visual_dim = s.visual.size();
            if (s.visual.size() != visual_dim || visual_dim == 0) {
                throw SchemaError("record '" + raw.id + "' has a visual vector of dimension " +
                                  std::to_string(s.visual.size()) + ", expected " + std::to_string(visual_dim));
            }
            const auto toks = normalize_text(s.sentence);
            rec.segments.push_back({encode_fixed(toks, vocab, layout.words), s.visual, s.confidence});
        }
        const auto ref = normalize_text(raw.reference);
        rec.reference = encode_fixed(ref, vocab, layout.words);
        split.records.push_back(std::move(rec));
    }
    return split;
}

CorpusSplit load_corpus(const std::filesystem::path &path, const Vocabulary &vocab, const CorpusLayout &layout,
                        SplitRole role) {
    const auto raw = read_raw_corpus(path);
    return encode_corpus(raw, vocab, layout, role);
}

} // namespace gpas
