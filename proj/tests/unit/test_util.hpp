#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "nepadd/ops.hpp"
#include "nepadd/rng.hpp"
#include "nepadd/tape.hpp"
#include "nepadd/tensor.hpp"

namespace nepadd::testing {

inline std::string near_msg(double a, double b, double tol) {
  std::ostringstream os;
  os.precision(17);
  os << a << " vs " << b << " (tol " << tol << ", diff " << std::abs(a - b) << ")";
  return os.str();
}

// Within 4 ulps of the larger magnitude, like gtest's DOUBLE_EQ.
inline bool ulp_equal(double a, double b) {
  if (a == b) return true;
  const double scale = std::max(std::abs(a), std::abs(b));
  return std::abs(a - b) <= 4 * scale * 2.220446049250313e-16;
}

}  // namespace nepadd::testing

#define CHECK_NEAR(a, b, tol)                                                                       \
  do {                                                                                              \
    const double near_a_ = (a), near_b_ = (b), near_t_ = (tol);                                     \
    CHECK_MESSAGE(std::abs(near_a_ - near_b_) <= near_t_, nepadd::testing::near_msg(near_a_, near_b_, near_t_)); \
  } while (0)

#define CHECK_DOUBLE_EQ(a, b)                                                                       \
  do {                                                                                              \
    const double deq_a_ = (a), deq_b_ = (b);                                                        \
    CHECK_MESSAGE(nepadd::testing::ulp_equal(deq_a_, deq_b_), nepadd::testing::near_msg(deq_a_, deq_b_, 0)); \
  } while (0)

namespace nepadd::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0, bool requires_grad = true) {
  Tensor t(std::move(shape), 0.0, requires_grad);
  for (auto& v : t.data()) v = rng.normal(0.0, scale);
  return t;
}

inline Tensor random_stochastic(std::size_t rows, std::size_t cols, Rng& rng, double sharpness = 1.0) {
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      t(i, j) = std::exp(sharpness * rng.normal());
      s += t(i, j);
    }
    for (std::size_t j = 0; j < cols; ++j) t(i, j) /= s;
  }
  return t;
}

struct GradReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Central differences with step h against tape gradients, for every element
// of every leaf in `wrt`. The relative error floor keeps near-zero entries
// from dividing by noise.
inline GradReport gradcheck(const std::function<Tensor(Tape&)>& loss_fn, const std::vector<Tensor>& wrt,
                            double h = 1e-5, double floor = 1e-6) {
  for (auto t : wrt) t.zero_grad();
  {
    Tape tape;
    Tensor loss = loss_fn(tape);
    tape.backward(loss);
  }
  GradReport rep;
  for (auto t : wrt) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double x0 = t[i];
      t[i] = x0 + h;
      Tape tp;
      const double lp = loss_fn(tp).item();
      t[i] = x0 - h;
      Tape tm;
      const double lm = loss_fn(tm).item();
      t[i] = x0;
      const double numeric = (lp - lm) / (2 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      rep.max_rel_error = std::max(rep.max_rel_error, std::abs(analytic[i] - numeric) / denom);
      ++rep.checked;
    }
  }
  return rep;
}

// Deterministic scalar reduction of an arbitrary-shaped output: sum(w * y)
// with fixed pseudo-random weights, so every output element matters.
inline Tensor probe_loss(Tape& tape, const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  Tensor w(y.shape());
  for (auto& v : w.data()) v = rng.uniform(-1.0, 1.0);
  return ops::sum(tape, ops::mul(tape, y, w));
}

}  // namespace nepadd::testing
