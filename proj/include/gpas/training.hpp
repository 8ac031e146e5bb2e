#pragma once

// Losses, Adam, the learning-rate schedule and the epoch loop.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gpas/autodiff.hpp"
#include "gpas/kv.hpp"
#include "gpas/model.hpp"
#include "gpas/text.hpp"

namespace gpas {

struct TrainConfig {
    double lr0 = 3e-4;
    double decay_factor = 1.25;
    std::size_t decay_every = 3;
    std::size_t batch_size = 8;
    std::size_t epochs = 30;
    double lambda_d = 0.1;
    std::uint64_t seed = 0;
    bool mask_padding = true;
    /// Global gradient-norm clip; <= 0 disables clipping.
    double clip_norm = 5.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    /// Stop once validation token accuracy reaches this value; 0 disables.
    double target_val_acc = 0.0;

    void validate() const;
    kv::Pairs to_pairs() const;
    std::vector<std::string> apply(const kv::Pairs &pairs);

    bool operator==(const TrainConfig &) const = default;
};

/// lr0 / decay_factor^floor(epoch / decay_every).
double lr_at(std::size_t epoch, const TrainConfig &config);

/// Mean of -log softmax(logits)[t, ref[t]] over positions weighted by mask.
/// Throws NumericError when the mask has no weight.
ad::Var cross_entropy(ad::Var logits, std::span<const TokenId> reference, std::span<const double> mask);

/// 1 for every non-reserved token present in the reference.
std::vector<double> bag_of_words(std::span<const TokenId> reference, std::size_t vocab_size);

/// Binary cross-entropy of sigmoid(mean_t(h_t) W + b) against the reference
/// bag of words, averaged over the vocabulary.
ad::Var discriminative_loss(std::span<const ad::Var> refined_hiddens, ModelParams &params,
                            std::span<const TokenId> reference);

struct LossParts {
    ad::Var total;
    ad::Var cross_entropy;
    ad::Var discriminative;
    ForwardPass forward;
};

/// cross_entropy + lambda_d * discriminative on one record.
LossParts total_loss(ad::Tape &tape, const ProposalRecord &record, ModelParams &params, const ModelConfig &model,
                     const TrainConfig &train, const RunMode &mode);

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::size_t step = 0;

    static AdamState for_params(std::span<const ad::NamedParameter> params);
};

/// Bias-corrected Adam update of every parameter from its accumulated gradient.
void adam_step(std::span<const ad::NamedParameter> params, AdamState &state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

/// Rescales gradients so their global L2 norm is at most max_norm; returns the
/// norm before clipping. max_norm <= 0 only measures.
double clip_gradients(std::span<const ad::NamedParameter> params, double max_norm);

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_token_acc = 0.0;
    double lr = 0.0;

    std::string to_json() const;
    static EpochMetrics from_json(const std::string &line);
    bool operator==(const EpochMetrics &) const = default;
};

struct Evaluation {
    double loss = 0.0;
    double token_acc = 0.0;
    std::size_t positions = 0;
};

/// Teacher-forced evaluation-mode loss and token accuracy (argmax equals the
/// reference at supervised positions).
Evaluation evaluate(std::span<const ProposalRecord> records, ModelParams &params, const ModelConfig &model,
                    const TrainConfig &train);

struct TrainRun {
    ModelConfig model;
    TrainConfig train;
    /// When set, receives metrics.jsonl, best.ckpt and last.ckpt.
    std::optional<std::filesystem::path> out_dir;
    /// Continue from a last.ckpt written by an earlier run.
    std::optional<std::filesystem::path> resume;
    /// Stop after this many epochs of this invocation (for staged runs).
    std::optional<std::size_t> max_epochs_this_run;
};

struct TrainResult {
    std::vector<EpochMetrics> log;
    ModelParams best;
    ModelParams last;
    std::size_t best_epoch = 0;
    double best_val_acc = -1.0;
    bool stopped_early = false;
};

TrainResult train(const TrainRun &run, std::span<const ProposalRecord> train_set,
                  std::span<const ProposalRecord> val_set);

} // namespace gpas
