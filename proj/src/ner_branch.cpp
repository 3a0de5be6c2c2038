#include "nepadd/ner_branch.hpp"

#include "nepadd/errors.hpp"

namespace nepadd {

void NerBranchConfig::validate() const {
  if (input_dim == 0 || conv_channels == 0 || conv_kernel == 0 || lstm_layers == 0 || lstm_hidden == 0 ||
      heads == 0) {
    throw ConfigError("ner: all dims must be positive");
  }
  if (conv_kernel % 2 == 0) throw ConfigError("ner: conv kernel must be odd to preserve length");
  if (model_dim() % heads != 0) throw ConfigError("ner: model_dim not divisible by heads");
  if (tag_count != static_cast<std::size_t>(kTagCount)) throw ConfigError("ner: tag_count must be 7");
}

NerBranch::NerBranch(ParamStore& store, const NerBranchConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  conv_ = Conv1d(store, "ner.conv",
                 Conv1dSpec{cfg.conv_kernel, cfg.conv_kernel / 2, 1, cfg.input_dim, cfg.conv_channels, true}, rng);
  norm_ = LayerNorm(store, "ner.norm", cfg.conv_channels);
  lstm_ = BiLstm(store, "ner.lstm", BiLstmSpec{cfg.conv_channels, cfg.lstm_hidden, cfg.lstm_layers}, rng);
  attention_ = SelfAttention(store, "ner.attn", SelfAttentionSpec{cfg.model_dim(), cfg.heads, false}, rng);
  tag_head_ = Linear(store, "ner.tag_head", cfg.model_dim(), cfg.tag_count, true, rng);
}

NerOutput NerBranch::forward(Tape& tape, const Tensor& features) const {
  if (features.rank() != 2 || features.dim(1) != cfg_.input_dim) {
    throw ConfigError("ner: expected [T x " + std::to_string(cfg_.input_dim) + "] features, got " +
                      shape_str(features.shape()));
  }
  Tensor h = conv_.forward(tape, ops::transpose(tape, features));
  h = ops::relu(tape, norm_.forward(tape, ops::transpose(tape, h)));
  h = lstm_.forward(tape, h);
  auto att = attention_.forward(tape, h);
  Tensor logits = tag_head_.forward(tape, att.attended);
  return {h, att.attn, att.attended, logits};
}

Tensor pretrain_ner_loss(Tape& tape, const Tensor& tag_logits, std::span<const int> tag_classes) {
  if (tag_logits.rank() != 2 || tag_logits.dim(0) != tag_classes.size()) {
    throw DimensionError("ner loss: logits " + shape_str(tag_logits.shape()) + " vs " +
                         std::to_string(tag_classes.size()) + " tags");
  }
  return ops::cross_entropy_rows(tape, tag_logits, tag_classes);
}

Tensor pretrain_ner_loss(Tape& tape, const Tensor& tag_logits, const std::vector<Tag>& tags) {
  std::vector<int> classes;
  classes.reserve(tags.size());
  for (Tag t : tags) classes.push_back(static_cast<int>(t));
  return pretrain_ner_loss(tape, tag_logits, std::span<const int>(classes));
}

std::vector<Tag> decode_tags(const Tensor& tag_logits) {
  std::vector<Tag> tags;
  const std::size_t n = tag_logits.cols();
  for (std::size_t t = 0; t < tag_logits.rows(); ++t) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j) {
      if (tag_logits(t, j) > tag_logits(t, best)) best = j;
    }
    tags.push_back(static_cast<Tag>(best));
  }
  return repair_tags(std::move(tags));
}

}  // namespace nepadd
