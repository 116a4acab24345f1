#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cascade/nn/layers.hpp"

namespace cascade {

/// Trained model state: named float32 arrays plus a JSON metadata block
/// (config snapshot, schedule, global step, model kind).
///
/// On disk a checkpoint is one file:
///   bytes 0..7   magic "CASCKPT1"
///   bytes 8..15  uint64 LE length of the metadata JSON
///   metadata JSON, whose "params" array lists {name, shape, offset, count}
///   concatenated little-endian float32 blobs, one per parameter
struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> params;

  const Tensor& param(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint snapshot(const nn::ParamStore& ps, nlohmann::json meta);
/// Copies values by name; every store parameter must be present with the
/// same shape.
void restore(nn::ParamStore& ps, const Checkpoint& ckpt);

}  // namespace cascade
