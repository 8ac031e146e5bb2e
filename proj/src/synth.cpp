#include "gpas/synth.hpp"

#include <cmath>
#include <cstdio>

#include "gpas/errors.hpp"

namespace gpas {

namespace {

constexpr std::uint64_t kCodebookKey = 0xC0DEB00C;
constexpr std::uint64_t kTrainKey = 1;
constexpr std::uint64_t kValidationKey = 2;

// 0 -> "a", 25 -> "z", 26 -> "aa", ...
std::string letters(std::size_t i) {
    std::string out;
    ++i;
    while (i > 0) {
        --i;
        out.insert(out.begin(), static_cast<char>('a' + i % 26));
        i /= 26;
    }
    return out;
}

std::vector<std::vector<double>> codebook(const SynthSpec &spec) {
    RngStream rng = RngStream(spec.seed).split(kCodebookKey);
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.visual_dim));
    std::vector<std::vector<double>> codes(spec.n_concepts, std::vector<double>(spec.visual_dim));
    for (auto &code : codes)
        for (double &v : code) v = rng.normal() * scale;
    return codes;
}

std::string make_id(const char *prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%06zu", prefix, i);
    return buf;
}

} // namespace

void SynthSpec::validate() const {
    if (vocab_size < token::reserved_count + 3) throw ConfigError("synth: vocab_size too small");
    if (n_concepts < 3 || n_concepts > vocab_size - token::reserved_count) {
        throw ConfigError("synth: n_concepts must lie in [3, vocab_size - 5]");
    }
    if (!(noise_rate >= 0.0 && noise_rate < 0.5)) throw ConfigError("synth: noise_rate must lie in [0, 0.5)");
    if (segments == 0 || words == 0 || visual_dim == 0) throw ConfigError("synth: L_m, L_k and D_v must be positive");
    if (!(visual_noise >= 0.0)) throw ConfigError("synth: visual_noise must be nonnegative");
}

SynthLexicon synth_lexicon(const SynthSpec &spec) {
    spec.validate();
    static constexpr char prefix[3] = {'s', 'v', 'o'};
    SynthLexicon lex;
    for (std::size_t c = 0; c < spec.n_concepts; ++c) {
        // roles get n/3 concepts each, remainder to the first roles
        const std::size_t base = spec.n_concepts / 3, extra = spec.n_concepts % 3;
        std::size_t role = 0, start = 0;
        for (; role < 3; ++role) {
            const std::size_t len = base + (role < extra ? 1 : 0);
            if (c < start + len) break;
            start += len;
        }
        lex.roles[role].push_back(prefix[role] + letters(c - start));
    }
    const std::size_t n_distractors = spec.vocab_size - token::reserved_count - spec.n_concepts;
    for (std::size_t d = 0; d < n_distractors; ++d) lex.distractors.push_back("x" + letters(d));
    return lex;
}

SynthRecord gen_record(const SynthSpec &spec, RngStream &rng, std::string id) {
    const SynthLexicon lex = synth_lexicon(spec);
    const auto codes = codebook(spec);

    SynthRecord out;
    std::array<std::string, 3> truth;
    std::array<std::size_t, 3> global{};
    std::size_t offset = 0;
    for (std::size_t r = 0; r < 3; ++r) {
        out.concepts[r] = rng.below(lex.roles[r].size());
        truth[r] = lex.roles[r][out.concepts[r]];
        global[r] = offset + out.concepts[r];
        offset += lex.roles[r].size();
    }

    out.record.id = std::move(id);
    out.record.reference = truth[0] + " " + truth[1] + " " + truth[2];
    for (std::size_t s = 0; s < spec.segments; ++s) {
        RawSegment seg;
        for (std::size_t r = 0; r < 3; ++r) {
            std::string tok = truth[r];
            if (rng.bernoulli(spec.noise_rate)) {
                if (!lex.distractors.empty()) {
                    tok = lex.distractors[rng.below(lex.distractors.size())];
                } else {
                    // no distractors: another concept of the same role
                    const auto &pool = lex.roles[r];
                    if (pool.size() > 1) {
                        std::size_t k = rng.below(pool.size() - 1);
                        if (k >= out.concepts[r]) ++k;
                        tok = pool[k];
                    }
                }
            }
            if (!seg.sentence.empty()) seg.sentence += ' ';
            seg.sentence += tok;
        }
        seg.visual.assign(spec.visual_dim, 0.0);
        for (std::size_t d = 0; d < spec.visual_dim; ++d) {
            for (std::size_t r = 0; r < 3; ++r) seg.visual[d] += codes[global[r]][d];
            seg.visual[d] += rng.normal(0.0, spec.visual_noise);
        }
        out.record.segments.push_back(std::move(seg));
    }
    return out;
}

SynthCorpus gen_corpus(const SynthSpec &spec, std::size_t n_train, std::size_t n_val) {
    spec.validate();
    if (n_train == 0 || n_val == 0) throw ConfigError("synth: n_train and n_val must be at least 1");
    SynthCorpus corpus;
    const RngStream root(spec.seed);
    const RngStream train = root.split(kTrainKey);
    const RngStream val = root.split(kValidationKey);
    for (std::size_t i = 0; i < n_train; ++i) {
        RngStream rng = train.split(i);
        corpus.train.push_back(gen_record(spec, rng, make_id("train", i)).record);
    }
    for (std::size_t i = 0; i < n_val; ++i) {
        RngStream rng = val.split(i);
        corpus.validation.push_back(gen_record(spec, rng, make_id("val", i)).record);
    }
    return corpus;
}

void write_synth_corpus(const std::filesystem::path &dir, const SynthCorpus &corpus) {
    std::filesystem::create_directories(dir);
    write_raw_corpus(dir / "train.jsonl", corpus.train);
    write_raw_corpus(dir / "val.jsonl", corpus.validation);
}

} // namespace gpas
