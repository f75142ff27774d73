#pragma once

#include <stdexcept>
#include <string>

#include "qcofr/config.hpp"
#include "qcofr/nn.hpp"

namespace qcofr {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Versioned binary checkpoint: a JSON header (embedded effective config plus
// a directory of array names and shapes) followed by raw little-endian
// float64 payloads. Loading restores values bit-for-bit.
void save_checkpoint(const std::string& path, const ParamStore& params, const RunConfig& cfg);

// Reads just the embedded config (to rebuild networks before loading).
RunConfig peek_checkpoint_config(const std::string& path);

// Loads values into a store with identical structure; throws
// CheckpointError naming any mismatched array or shape.
RunConfig load_checkpoint(const std::string& path, ParamStore& params);

}  // namespace qcofr
