#pragma once

#include <cstdint>
#include <vector>

#include "nepadd/params.hpp"

namespace nepadd {

// Noam curve scaled so that lr(warmup) == base_lr:
// base_lr * sqrt(warmup) * min(step^-0.5, step * warmup^-1.5). step >= 1.
double noam_lr(std::uint64_t step, double base_lr, std::uint64_t warmup);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

// Adam (0.9, 0.999, 1e-8) with bias correction over every param of a store.
// Frozen params are skipped entirely, moments included.
class Adam {
 public:
  explicit Adam(const ParamStore& store, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // Throws NumericError naming `step_index` if any trainable grad is not finite;
  // nothing is updated in that case.
  void step(ParamStore& store, double lr, std::uint64_t step_index);

  const AdamState& state() const { return state_; }
  AdamState& state() { return state_; }

 private:
  double beta1_, beta2_, eps_;
  AdamState state_;
};

}  // namespace nepadd
