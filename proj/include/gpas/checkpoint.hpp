#pragma once

// Checkpoint files.
//
//   GPAS-CHECKPOINT 1
//   key = value            model config, then any extra header entries
//   ...
//   end-header
//   block <name> <rows> <cols>\n<rows*cols little-endian fp64>
//   ...
//
// Blocks under the "optimizer/" prefix hold training state and are optional;
// every other block must match the model layout exactly.

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gpas/autodiff.hpp"
#include "gpas/kv.hpp"
#include "gpas/model.hpp"

namespace gpas {

inline constexpr const char *kCheckpointMagic = "GPAS-CHECKPOINT";
inline constexpr int kCheckpointVersion = 1;

using BlockList = std::vector<std::pair<std::string, const ad::Parameter *>>;

void save_checkpoint(const std::filesystem::path &path, const ModelConfig &config, const ModelParams &params,
                     const kv::Pairs &extra = {}, const BlockList &state_blocks = {});

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    /// Header entries that are not model settings.
    kv::Pairs extra;
    /// "optimizer/..." blocks keyed by full name.
    std::map<std::string, ad::Parameter> state;
};

/// Throws SchemaError on a bad header, a missing, extra or misshapen block,
/// or a truncated file.
Checkpoint load_checkpoint(const std::filesystem::path &path);

} // namespace gpas
