#pragma once

#include "handsplat/autodiff.hpp"

#include <unordered_map>

namespace handsplat {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. State is kept per Parameter and restarts whenever the
/// parameter's shape changes (points added or pruned) or on reset().
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<ad::Parameter*>& params, double lr) {
    for (ad::Parameter* p : params) step(*p, lr);
  }

  void step(ad::Parameter& p, double lr) {
    if (p.frozen) return;
    if (!p.grad.same_shape(p.value)) return;  // never received a gradient
    State& s = state_[&p];
    if (!s.m.same_shape(p.value)) s = State{Tensor(p.value.shape()), Tensor(p.value.shape()), 0};
    ++s.t;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
      p.value[i] -= lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + cfg_.eps);
    }
  }

  void reset(const ad::Parameter& p) { state_.erase(&p); }
  std::size_t steps(const ad::Parameter& p) const {
    auto it = state_.find(&p);
    return it == state_.end() ? 0 : it->second.t;
  }

 private:
  struct State {
    Tensor m, v;
    std::size_t t = 0;
  };
  AdamConfig cfg_;
  std::unordered_map<const ad::Parameter*, State> state_;
};

}  // namespace handsplat
