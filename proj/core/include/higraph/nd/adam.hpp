#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "higraph/nd/tensor.hpp"

namespace higraph::nd {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers keyed by parameter name.
struct AdamState {
  std::uint64_t step = 0;
  std::unordered_map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments;
};

/// One bias-corrected Adam update over every parameter, consuming the
/// accumulated gradients. Gradients are left in place; callers reset
/// them between steps.
void adam_step(std::vector<Parameter>& params, AdamState& state, const AdamConfig& cfg);

void zero_grads(std::vector<Parameter>& params);

}  // namespace higraph::nd
