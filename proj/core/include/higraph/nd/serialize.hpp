#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "higraph/nd/adam.hpp"
#include "higraph/nd/tensor.hpp"

namespace higraph::nd {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LoadedCheckpoint {
  std::string meta;  // key=value lines describing the model configuration
  std::vector<Parameter> params;
  std::optional<AdamState> optimizer;
};

/// Versioned binary checkpoint; byte layout documented in
/// docs/file-formats.md. All integers and 64-bit floats little-endian.
void save_checkpoint(const std::string& path, const std::string& meta,
                     const std::vector<Parameter>& params, const AdamState* optimizer);

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace higraph::nd
