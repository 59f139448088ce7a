#pragma once

// Model checkpoints: named parameter tensors plus the metadata needed to
// rebuild and run a model (config, training ranges, static-feature sources,
// discretizer).

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "ndnet/autodiff.hpp"
#include "ndnet/core.hpp"
#include "ndnet/trace_io.hpp"

namespace ndnet {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;  // rbu, lstm-win, lstm-pkt, lstm-pkt-fifo
  nlohmann::json config;
  ParamStore store;
  GlobalRanges ranges;
  std::vector<StaticFeatures> sources;  // static features of the training traces
  Discretizer disc;
};

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws std::runtime_error on unreadable files or version mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ndnet
