#pragma once

#include "nepadd/corpus.hpp"
#include "nepadd/layers.hpp"

namespace nepadd {

// Student frontend: C(5,2,1) conv without bias, residual blocks at constant
// width, C(1,0,1) projection, then self-attention.
struct PaddBranchConfig {
  std::size_t input_dim = 16;
  std::size_t conv_channels = 32;
  std::size_t residual_blocks = 4;
  std::size_t model_dim = 16;
  std::size_t heads = 1;

  // 768 -> 512 (x12 residual) -> 128; documents the full-size topology.
  static PaddBranchConfig paper_scale();
  void validate() const;
};

struct BranchOutput {
  Tensor hidden;    // [T x D] before attention
  Tensor attn;      // [T x T]
  Tensor attended;  // [T x D] = attn * V
};

class PaddBranch {
 public:
  PaddBranch(ParamStore& store, const PaddBranchConfig& cfg, Rng& rng);

  BranchOutput forward(Tape& tape, const Tensor& features) const;
  BranchOutput forward(Tape& tape, const FrameFeatures& x) const { return forward(tape, x.features); }

  const PaddBranchConfig& config() const { return cfg_; }
  const SelfAttention& attention() const { return attention_; }

 private:
  PaddBranchConfig cfg_;
  Conv1d input_conv_;
  std::vector<ResidualBlock> blocks_;
  Conv1d projection_;
  SelfAttention attention_;
};

}  // namespace nepadd
