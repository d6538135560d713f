#pragma once

#include <optional>
#include <string>

#include "treecaps/model.hpp"
#include "treecaps/optim.hpp"

namespace treecaps {

// Checkpoint file layout: magic "TCAP", u32 format version, u64 header
// length, UTF-8 JSON header (config + vocabulary + tensor directory with
// name/dtype/shape/offset), then raw little-endian f64 blobs in directory
// order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

void save_checkpoint(const Model& model, const std::string& path,
                     const OptimizerState* opt_state = nullptr);

Model load_checkpoint(const std::string& path, OptimizerState* opt_state = nullptr);

}  // namespace treecaps
