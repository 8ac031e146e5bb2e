#pragma once

// Command-line front end: prep-vocab, gen-synth, train, decode, eval,
// gradcheck and ablate. Every command that writes files also writes a
// manifest.json next to them (arguments, resolved config, seed and the
// git-style SHA-1 of every input file).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gpas/grad_check.hpp"
#include "gpas/model.hpp"
#include "gpas/rng.hpp"
#include "gpas/training.hpp"

namespace gpas {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct Preset {
    ModelConfig model;
    TrainConfig train;
};

/// micro (gradient checks), desk (synthetic training) or paper (published sizes).
Preset preset(std::string_view name);

/// SHA-1 of "blob <size>\0" + content, as git computes object ids.
std::string git_blob_sha1(std::string_view content);
std::string git_blob_sha1_file(const std::filesystem::path &path);

/// A record with uniformly drawn content tokens and standard-normal visual
/// features, shaped for config.
ProposalRecord random_record(const ModelConfig &config, RngStream &rng);

/// Gradient check of the full training loss on one random record; dropout
/// stays on with a mask frozen across evaluations.
ad::GradCheckReport model_grad_check(const ModelConfig &config, const TrainConfig &train, std::uint64_t seed);

/// args excludes the program name. Returns the process exit status.
int run_cli(std::span<const std::string> args, std::ostream &out, std::ostream &err);

} // namespace gpas
