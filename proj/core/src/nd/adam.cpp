#include "higraph/nd/adam.hpp"

#include <cmath>

namespace higraph::nd {

void adam_step(std::vector<Parameter>& params, AdamState& state, const AdamConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& p : params) {
    if (!p.tensor.requires_grad()) continue;
    auto& g = p.tensor.grad();
    auto& [m, v] = state.moments[p.name];
    if (m.empty()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    double* d = p.tensor.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      d[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

void zero_grads(std::vector<Parameter>& params) {
  for (auto& p : params)
    if (p.tensor.requires_grad()) p.tensor.zero_grad();
}

}  // namespace higraph::nd
