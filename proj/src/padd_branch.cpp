#include "nepadd/padd_branch.hpp"

#include "nepadd/errors.hpp"

namespace nepadd {

PaddBranchConfig PaddBranchConfig::paper_scale() {
  PaddBranchConfig c;
  c.input_dim = 768;
  c.conv_channels = 512;
  c.residual_blocks = 12;
  c.model_dim = 128;
  c.heads = 1;
  return c;
}

void PaddBranchConfig::validate() const {
  if (input_dim == 0 || conv_channels == 0 || model_dim == 0 || heads == 0) {
    throw ConfigError("padd: all dims must be positive");
  }
  if (model_dim % heads != 0) throw ConfigError("padd: model_dim not divisible by heads");
}

PaddBranch::PaddBranch(ParamStore& store, const PaddBranchConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  input_conv_ = Conv1d(store, "padd.conv_in", Conv1dSpec{5, 2, 1, cfg.input_dim, cfg.conv_channels, false}, rng);
  for (std::size_t i = 0; i < cfg.residual_blocks; ++i) {
    blocks_.emplace_back(store, "padd.res" + std::to_string(i), cfg.conv_channels, rng);
  }
  projection_ = Conv1d(store, "padd.proj", Conv1dSpec{1, 0, 1, cfg.conv_channels, cfg.model_dim, true}, rng);
  attention_ = SelfAttention(store, "padd.attn", SelfAttentionSpec{cfg.model_dim, cfg.heads, false}, rng);
}

BranchOutput PaddBranch::forward(Tape& tape, const Tensor& features) const {
  if (features.rank() != 2 || features.dim(1) != cfg_.input_dim) {
    throw ConfigError("padd: expected [T x " + std::to_string(cfg_.input_dim) + "] features, got " +
                      shape_str(features.shape()));
  }
  Tensor h = ops::transpose(tape, features);
  h = input_conv_.forward(tape, h);
  for (const auto& b : blocks_) h = b.forward(tape, h);
  h = projection_.forward(tape, h);
  h = ops::transpose(tape, h);
  auto att = attention_.forward(tape, h);
  return {h, att.attn, att.attended};
}

}  // namespace nepadd
