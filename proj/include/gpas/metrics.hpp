#pragma once

// Captioning metrics over tokenized sentences: corpus BLEU-1..4, ROUGE-L and
// CIDEr-D, plus the two training-free baselines built from the segment
// sentences themselves (PM-ave and PM-best).

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gpas {

using Tokens = std::vector<std::string>;

struct EvalPair {
    Tokens candidate;
    std::vector<Tokens> references;
};

struct BleuStats {
    std::vector<std::size_t> matches; // clipped n-gram matches per order
    std::vector<std::size_t> totals;  // candidate n-grams per order
    std::size_t candidate_length = 0;
    std::size_t reference_length = 0; // sum of closest reference lengths
};

/// Corpus sums of clipped n-gram statistics for orders 1..max_n.
BleuStats bleu_stats(std::span<const EvalPair> pairs, std::size_t max_n = 4);

/// Corpus BLEU: element n-1 is B@n, the geometric mean of the first n
/// precisions times the brevity penalty exp(1 - r/c) when c < r. No
/// smoothing; an order without matches makes that score and all higher ones 0.
std::vector<double> bleu(std::span<const EvalPair> pairs, std::size_t max_n = 4);

/// Sentence BLEU-max_n with add-one smoothing on orders above 1 (debugging aid).
double sentence_bleu_smoothed(const EvalPair &pair, std::size_t max_n = 4);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// F-measure (1 + b^2) P R / (R + b^2 P) using the best precision and the
/// best recall over the references.
double rouge_l_sentence(const EvalPair &pair, double beta = 1.2);
/// Mean sentence score over the corpus.
double rouge_l(std::span<const EvalPair> pairs, double beta = 1.2);

/// CIDEr-D over the corpus (document frequencies come from its references),
/// in [0, 10] per sentence: mean over references and over n = 1..4 of the
/// clipped tf-idf cosine times exp(-(l_c - l_r)^2 / (2 sigma^2)), times 10.
double cider_d(std::span<const EvalPair> pairs, double sigma = 6.0);
/// Per-pair CIDEr-D scores, same document frequencies as cider_d.
std::vector<double> cider_d_scores(std::span<const EvalPair> pairs, double sigma = 6.0);

struct EvalReport {
    std::array<double, 4> bleu{}; // raw fractions
    double rouge_l = 0.0;
    double cider_d = 0.0;
    std::optional<double> token_acc;

    /// {"B1","B2","B3","B4","RL","CIDErD","token_acc"} with every value times 100.
    std::string to_json() const;
};

/// Throws ConfigError on an empty corpus.
EvalReport evaluate_captions(std::span<const EvalPair> pairs);

// ---------------------------------------------------------------- segment baselines

struct PmInput {
    std::vector<Tokens> segments;
    /// One per segment; higher means more trusted.
    std::vector<double> confidences;
    Tokens reference;
};

/// Mean log of how often each token of segment j (plus the stop token, which
/// always counts as 1) occurs across the record's segment sentences.
double consensus_confidence(std::span<const Tokens> segments, std::size_t j);

/// Index of the highest confidence; ties go to the lowest index.
std::size_t pm_best_index(std::span<const double> confidences);

struct PmBaselines {
    EvalReport ave;
    EvalReport best;
    std::vector<std::size_t> best_index;
};

/// PM-ave: the report of "candidate = segment j" averaged over j.
/// PM-best: the report of the highest-confidence segment sentence per record.
PmBaselines pm_baselines(std::span<const PmInput> records);

} // namespace gpas
