#pragma once

// Vocabulary, normalization, fixed-length encoding and corpus ingestion.
//
// Corpus files are JSON lines, one proposal per line:
//   {"id": "...", "segments": [{"sentence": "raw text", "visual": [r, ...]}, ...],
//    "reference": "raw text"}
// A segment may also carry an optional "confidence" (mean log-probability
// reported by the upstream captioner).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gpas {

using TokenId = std::uint32_t;

namespace token {
inline constexpr TokenId pad = 0;
inline constexpr TokenId blank = 1;
inline constexpr TokenId unk = 2;
inline constexpr TokenId bos = 3;
inline constexpr TokenId eos = 4;
inline constexpr std::size_t reserved_count = 5;
inline constexpr std::string_view names[reserved_count] = {"<pad>", "<blank>", "<unk>", "<bos>", "<eos>"};
} // namespace token

/// Words seen fewer times than this in training are mapped to <unk>.
inline constexpr std::size_t kMinTokenCount = 3;

class Vocabulary {
  public:
    /// Reserved tokens only.
    Vocabulary();

    /// Keeps tokens occurring at least min_count times; ids after the reserved
    /// block are assigned by (count descending, token ascending).
    static Vocabulary build(std::span<const std::vector<std::string>> sentences, std::size_t min_count = kMinTokenCount);

    /// Reads `token<TAB>count` lines; the first five must be the reserved tokens in order.
    static Vocabulary load(const std::filesystem::path &path);
    void save(const std::filesystem::path &path) const;

    std::size_t size() const { return id_to_token_.size(); }
    /// Id of token, <unk> when absent.
    TokenId id(std::string_view token) const;
    std::optional<TokenId> find(std::string_view token) const;
    const std::string &token(TokenId id) const;
    std::size_t count(TokenId id) const;
    static bool is_reserved(TokenId id) { return id < token::reserved_count; }

    bool operator==(const Vocabulary &other) const {
        return id_to_token_ == other.id_to_token_ && counts_ == other.counts_;
    }

  private:
    void add(std::string token, std::size_t count);

    std::unordered_map<std::string, TokenId> token_to_id_;
    std::vector<std::string> id_to_token_;
    std::vector<std::size_t> counts_;
};

/// Lowercases, drops every character outside [a-z] and space (whitespace
/// counts as space), then splits on spaces.
std::vector<std::string> normalize_text(std::string_view raw);

/// Maps tokens to ids (OOV -> <unk>), appends <eos>, then truncates to
/// `length` with the last slot forced to <eos>, or pads with <blank>.
std::vector<TokenId> encode_fixed(std::span<const std::string> tokens, const Vocabulary &vocab, std::size_t length);

/// Surface tokens up to (not including) the first <eos>, with <pad>, <blank>
/// and <bos> removed. <unk> is kept.
std::vector<std::string> decode_tokens(std::span<const TokenId> ids, const Vocabulary &vocab);

/// 1 for supervised positions, 0 elsewhere. With mask_padding, positions after
/// the first <eos> get weight 0; otherwise every position is supervised.
std::vector<double> loss_mask(std::span<const TokenId> reference, bool mask_padding);

// ---------------------------------------------------------------- records

struct RawSegment {
    std::string sentence;
    std::vector<double> visual;
    std::optional<double> confidence;
};

struct RawRecord {
    std::string id;
    std::vector<RawSegment> segments;
    std::string reference;
};

struct Segment {
    std::vector<TokenId> sentence;
    std::vector<double> visual;
    std::optional<double> confidence;
};

struct ProposalRecord {
    std::string id;
    std::vector<Segment> segments;
    std::vector<TokenId> reference;

    std::size_t visual_dim() const { return segments.empty() ? 0 : segments.front().visual.size(); }
};

enum class SplitRole { train, validation, test };

struct CorpusSplit {
    SplitRole role = SplitRole::train;
    std::vector<ProposalRecord> records;
};

/// Expected record layout. visual_dim == 0 accepts any dimension as long as
/// every vector in the file agrees.
struct CorpusLayout {
    std::size_t segments = 0;
    std::size_t words = 0;
    std::size_t visual_dim = 0;
};

/// Parses a JSON-lines corpus. Throws ParseError (with line number) on
/// malformed lines or non-numeric visual entries.
std::vector<RawRecord> read_raw_corpus(const std::filesystem::path &path);
std::string to_json_line(const RawRecord &record);
void write_raw_corpus(const std::filesystem::path &path, std::span<const RawRecord> records);

/// Vocabulary over the normalized segment sentences and references.
Vocabulary build_vocab(std::span<const RawRecord> records, std::size_t min_count = kMinTokenCount);

/// Encodes raw records, enforcing the layout (SchemaError on violations).
CorpusSplit encode_corpus(std::span<const RawRecord> records, const Vocabulary &vocab, const CorpusLayout &layout,
                          SplitRole role = SplitRole::train);

CorpusSplit load_corpus(const std::filesystem::path &path, const Vocabulary &vocab, const CorpusLayout &layout,
                        SplitRole role = SplitRole::train);

} // namespace gpas
