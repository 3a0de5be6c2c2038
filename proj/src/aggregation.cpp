#include "nepadd/aggregation.hpp"

#include <cmath>

#include "nepadd/errors.hpp"

namespace nepadd {

std::string_view aggregation_name(Aggregation a) {
  switch (a) {
    case Aggregation::None: return "none";
    case Aggregation::Fusion: return "af";
    case Aggregation::Transfer: return "at";
  }
  return "?";
}

Aggregation parse_aggregation(std::string_view s) {
  if (s == "none") return Aggregation::None;
  if (s == "af") return Aggregation::Fusion;
  if (s == "at") return Aggregation::Transfer;
  throw ConfigError("aggregation must be one of af|at|none, got '" + std::string(s) + "'");
}

std::string_view gate_mode_name(GateMode m) {
  return m == GateMode::PerFrameScalar ? "per-frame-scalar" : "per-dimension";
}

GateMode parse_gate_mode(std::string_view s) {
  if (s == "per-frame-scalar") return GateMode::PerFrameScalar;
  if (s == "per-dimension") return GateMode::PerDimension;
  throw ConfigError("gate mode must be per-frame-scalar|per-dimension, got '" + std::string(s) + "'");
}

std::string_view row_reduction_name(RowReduction r) {
  return r == RowReduction::MeanOverQueryRows ? "mean-over-query-rows" : "pooled-column-mean";
}

RowReduction parse_row_reduction(std::string_view s) {
  if (s == "mean-over-query-rows") return RowReduction::MeanOverQueryRows;
  if (s == "pooled-column-mean") return RowReduction::PooledColumnMean;
  throw ConfigError("row reduction must be mean-over-query-rows|pooled-column-mean, got '" + std::string(s) + "'");
}

FusionGate::FusionGate(ParamStore& store, std::size_t model_dim, GateMode m, Rng& rng) : mode(m) {
  const std::size_t out = m == GateMode::PerFrameScalar ? 1 : model_dim;
  const double bound = std::sqrt(6.0 / static_cast<double>(2 * model_dim + out));
  weight = store.uniform("gate.weight", {2 * model_dim, out}, bound, rng);
  bias = store.create("gate.bias", {out});
}

FusionOutput FusionGate::forward(Tape& tape, const Tensor& add_attended, const Tensor& ner_attended) const {
  if (add_attended.shape() != ner_attended.shape() || add_attended.rank() != 2) {
    throw DimensionError("attention_fusion: branch embeddings differ, " + shape_str(add_attended.shape()) +
                         " vs " + shape_str(ner_attended.shape()));
  }
  if (weight.dim(0) != 2 * add_attended.dim(1)) {
    throw DimensionError("attention_fusion: gate expects D=" + std::to_string(weight.dim(0) / 2) + ", got " +
                         shape_str(add_attended.shape()));
  }
  Tensor joint = ops::concat_lastdim(tape, add_attended, ner_attended);
  Tensor g = ops::sigmoid(tape, ops::add_row(tape, ops::matmul(tape, joint, weight), bias));
  Tensor keep = ops::affine(tape, g, -1.0, 1.0);
  Tensor fused;
  if (mode == GateMode::PerFrameScalar) {
    fused = ops::add(tape, ops::mul_col(tape, add_attended, g), ops::mul_col(tape, ner_attended, keep));
  } else {
    fused = ops::add(tape, ops::mul(tape, add_attended, g), ops::mul(tape, ner_attended, keep));
  }
  return {fused, g};
}

namespace {

void check_stochastic(const Tensor& a, const char* which) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double v = a(i, j);
      if (!(v >= 0.0)) throw ContractError(std::string(which) + " attention has a negative or NaN entry");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-6) {
      throw ContractError(std::string(which) + " attention row " + std::to_string(i) + " sums to " +
                          std::to_string(s));
    }
  }
}

}  // namespace

Tensor attention_transfer_loss(Tape& tape, const Tensor& teacher_attn, const Tensor& student_attn,
                               const TransferConfig& cfg) {
  if (teacher_attn.rank() != 2 || teacher_attn.shape() != student_attn.shape() ||
      teacher_attn.dim(0) != teacher_attn.dim(1)) {
    throw ContractError("attention_transfer: maps must be equal square shapes, got " +
                        shape_str(teacher_attn.shape()) + " and " + shape_str(student_attn.shape()));
  }
  if (!(cfg.epsilon_clamp > 0.0)) throw ConfigError("attention_transfer: epsilon_clamp must be positive");
  check_stochastic(teacher_attn, "teacher");
  check_stochastic(student_attn, "student");

  Tensor teacher = teacher_attn.detach();
  Tensor student = student_attn;
  if (cfg.reduction == RowReduction::PooledColumnMean) {
    teacher = ops::mean_rows(tape, teacher);
    student = ops::mean_rows(tape, student);
  }
  // Zero teacher entries contribute nothing; their log is replaced by 0.
  Tensor log_teacher(teacher.shape());
  for (std::size_t i = 0; i < teacher.numel(); ++i) log_teacher[i] = teacher[i] > 0.0 ? std::log(teacher[i]) : 0.0;
  Tensor log_student = ops::log(tape, ops::clamp_min(tape, student, cfg.epsilon_clamp));
  Tensor terms = ops::mul(tape, teacher, ops::sub(tape, log_teacher, log_student));
  return ops::affine(tape, ops::sum(tape, terms), 1.0 / static_cast<double>(teacher.rows()));
}

Tensor total_loss(Tape& tape, const Tensor& loss_ce, const Tensor& loss_kl, double lambda_kl) {
  if (!(lambda_kl >= 0.0)) throw ConfigError("lambda_kl must be non-negative");
  if (!std::isfinite(loss_ce.item()) || !std::isfinite(loss_kl.item())) {
    throw NumericError("non-finite loss term (ce=" + std::to_string(loss_ce.item()) +
                       ", kl=" + std::to_string(loss_kl.item()) + ")");
  }
  return ops::add(tape, loss_ce, ops::affine(tape, loss_kl, lambda_kl));
}

Tensor resample_attention(const Tensor& attn, std::size_t n) {
  if (attn.rank() != 2 || attn.dim(0) != attn.dim(1) || n == 0) {
    throw DimensionError("resample_attention: need a square map, got " + shape_str(attn.shape()));
  }
  const std::size_t m = attn.dim(0);
  auto coord = [m, n](std::size_t i) {
    return n == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(m - 1) / static_cast<double>(n - 1);
  };
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    const double y = coord(i);
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t y1 = std::min(y0 + 1, m - 1);
    const double wy = y - static_cast<double>(y0);
    double row_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double x = coord(j);
      const auto x0 = static_cast<std::size_t>(std::floor(x));
      const std::size_t x1 = std::min(x0 + 1, m - 1);
      const double wx = x - static_cast<double>(x0);
      const double v = (1 - wy) * ((1 - wx) * attn(y0, x0) + wx * attn(y0, x1)) +
                       wy * ((1 - wx) * attn(y1, x0) + wx * attn(y1, x1));
      out(i, j) = v;
      row_sum += v;
    }
    for (std::size_t j = 0; j < n; ++j) out(i, j) = row_sum > 0 ? out(i, j) / row_sum : 1.0 / static_cast<double>(n);
  }
  return out;
}

}  // namespace nepadd
