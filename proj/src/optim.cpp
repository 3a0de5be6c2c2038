#include "nepadd/optim.hpp"

#include <algorithm>
#include <cmath>

#include "nepadd/errors.hpp"

namespace nepadd {

double noam_lr(std::uint64_t step, double base_lr, std::uint64_t warmup) {
  if (step == 0) throw ContractError("noam_lr: step must be >= 1");
  if (warmup == 0) throw ConfigError("noam_lr: warmup must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return base_lr * std::sqrt(w) * std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

Adam::Adam(const ParamStore& store, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : store.params()) {
    state_.m.emplace_back(p.tensor.numel(), 0.0);
    state_.v.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step(ParamStore& store, double lr, std::uint64_t step_index) {
  const auto& params = store.params();
  if (params.size() != state_.m.size()) throw ContractError("adam: parameter count changed");
  for (const auto& p : params) {
    if (p.tensor.frozen()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in " + p.name + " at step " + std::to_string(step_index));
      }
    }
  }
  ++state_.t;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(state_.t));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(state_.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor w = params[k].tensor;
    if (w.frozen()) continue;
    auto g = w.grad();
    auto& m = state_.m[k];
    auto& v = state_.v[k];
    auto data = w.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      data[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace nepadd
