#pragma once

// Synthetic partition outputs with a known ground-truth summary.
//
// Each proposal hides a (subject, verb, object) concept triple. The reference
// is the template "subject verb object"; every segment sentence restates the
// triple with each token independently replaced by a distractor with
// probability noise_rate; each visual vector is the sum of the three concept
// codes plus Gaussian noise. Plurality voting over segments therefore
// recovers the reference, which bounds what a summarizer can learn.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gpas/rng.hpp"
#include "gpas/text.hpp"

namespace gpas {

struct SynthSpec {
    std::size_t vocab_size = 60;
    std::size_t segments = 5;
    std::size_t words = 8;
    std::size_t visual_dim = 16;
    std::size_t n_concepts = 30;
    double noise_rate = 0.2;
    std::uint64_t seed = 0;
    double visual_noise = 0.1;

    /// Throws ConfigError unless 3 <= n_concepts <= vocab_size - 5 and 0 <= noise_rate < 0.5.
    void validate() const;
};

/// Content tokens (vocab_size - 5 of them): concepts first, grouped by role, then distractors.
struct SynthLexicon {
    std::array<std::vector<std::string>, 3> roles;
    std::vector<std::string> distractors;
};

SynthLexicon synth_lexicon(const SynthSpec &spec);

struct SynthRecord {
    RawRecord record;
    /// Index of the drawn concept within each role.
    std::array<std::size_t, 3> concepts{};
};

/// One proposal drawn from rng; the concept codebook depends only on spec.seed.
SynthRecord gen_record(const SynthSpec &spec, RngStream &rng, std::string id);

struct SynthCorpus {
    std::vector<RawRecord> train;
    std::vector<RawRecord> validation;
};

/// Train and validation records come from disjoint child streams of spec.seed;
/// record i of a split depends only on (seed, split, i).
SynthCorpus gen_corpus(const SynthSpec &spec, std::size_t n_train, std::size_t n_val);

/// Writes train.jsonl and val.jsonl into dir.
void write_synth_corpus(const std::filesystem::path &dir, const SynthCorpus &corpus);

} // namespace gpas
