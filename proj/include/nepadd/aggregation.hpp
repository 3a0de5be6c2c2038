#pragma once

#include <optional>
#include <string_view>

#include "nepadd/layers.hpp"

namespace nepadd {

enum class Aggregation { None, Fusion, Transfer };
std::string_view aggregation_name(Aggregation a);  // "none" | "af" | "at"
Aggregation parse_aggregation(std::string_view s);

enum class GateMode { PerFrameScalar, PerDimension };
std::string_view gate_mode_name(GateMode m);
GateMode parse_gate_mode(std::string_view s);

struct FusionOutput {
  Tensor fused;  // [T x D]
  Tensor gate;   // [T x 1] or [T x D]
};

// g = sigmoid([H_add, H_ner] W_g + b); fused = g*H_add + (1-g)*H_ner.
// g = 1 keeps the student embedding, g = 0 the teacher embedding.
class FusionGate {
 public:
  FusionGate() = default;
  FusionGate(ParamStore& store, std::size_t model_dim, GateMode mode, Rng& rng);

  FusionOutput forward(Tape& tape, const Tensor& add_attended, const Tensor& ner_attended) const;

  GateMode mode = GateMode::PerFrameScalar;
  Tensor weight;  // [2D x 1] or [2D x D]
  Tensor bias;    // [1] or [D]
};

enum class RowReduction { MeanOverQueryRows, PooledColumnMean };
std::string_view row_reduction_name(RowReduction r);
RowReduction parse_row_reduction(std::string_view s);

struct TransferConfig {
  // Unset means "not chosen"; transfer training refuses to start without it.
  std::optional<double> lambda_kl;
  double epsilon_clamp = 1e-10;
  RowReduction reduction = RowReduction::MeanOverQueryRows;
};

// KL(teacher || student) for one utterance. The teacher map is treated as a
// constant; student entries are clamped below by epsilon inside the log.
// Throws ContractError on non-stochastic rows or mismatched sizes.
Tensor attention_transfer_loss(Tape& tape, const Tensor& teacher_attn, const Tensor& student_attn,
                               const TransferConfig& cfg);

// L = L_CE + lambda * L_KL; NaN or infinite terms raise NumericError.
Tensor total_loss(Tape& tape, const Tensor& loss_ce, const Tensor& loss_kl, double lambda_kl);

// Bilinear resampling of a [T x T] map to [n x n] with rows renormalized.
Tensor resample_attention(const Tensor& attn, std::size_t n);

}  // namespace nepadd
