#pragma once
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cdkit/tensor.hpp"
#include "json.hpp"

namespace cdkit::tensor {

// Flat binary container: "CKT1" magic, little-endian u32 JSON header length,
// JSON header {meta, tensors:[{name,shape,offset}]}, then little-endian
// float64 payload. Offsets are bytes from the start of the payload.

struct CheckpointEntry {
  std::vector<int> shape;
  std::vector<double> values;
};

struct Checkpoint {
  nlohmann::json meta;
  std::map<std::string, CheckpointEntry> tensors;

  const CheckpointEntry& at(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, Tensor>>& tensors);

// Nonexistent path -> MissingArtifactError; malformed content -> IoError.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cdkit::tensor
