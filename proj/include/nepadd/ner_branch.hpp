#pragma once

#include "nepadd/corpus.hpp"
#include "nepadd/entity.hpp"
#include "nepadd/layers.hpp"
#include "nepadd/padd_branch.hpp"

namespace nepadd {

// Teacher: conv + layer norm + ReLU frontend, BiLSTM stack, self-attention,
// and a linear tag head used only while pretraining.
struct NerBranchConfig {
  std::size_t input_dim = 16;
  std::size_t conv_channels = 32;
  std::size_t conv_kernel = 5;
  std::size_t lstm_layers = 1;
  std::size_t lstm_hidden = 8;
  std::size_t heads = 1;
  std::size_t tag_count = kTagCount;

  std::size_t model_dim() const { return 2 * lstm_hidden; }
  void validate() const;
};

struct NerOutput {
  Tensor hidden;      // [T x D]
  Tensor attn;        // [T x T]
  Tensor attended;    // [T x D]
  Tensor tag_logits;  // [T x 7]
};

class NerBranch {
 public:
  NerBranch(ParamStore& store, const NerBranchConfig& cfg, Rng& rng);

  NerOutput forward(Tape& tape, const Tensor& features) const;
  NerOutput forward(Tape& tape, const FrameFeatures& x) const { return forward(tape, x.features); }

  const NerBranchConfig& config() const { return cfg_; }

 private:
  NerBranchConfig cfg_;
  Conv1d conv_;
  LayerNorm norm_;
  BiLstm lstm_;
  SelfAttention attention_;
  Linear tag_head_;
};

// Mean per-frame cross-entropy over the tag classes.
Tensor pretrain_ner_loss(Tape& tape, const Tensor& tag_logits, const std::vector<Tag>& tags);
Tensor pretrain_ner_loss(Tape& tape, const Tensor& tag_logits, std::span<const int> tag_classes);

// Argmax tags after span repair; always well formed.
std::vector<Tag> decode_tags(const Tensor& tag_logits);

}  // namespace nepadd
