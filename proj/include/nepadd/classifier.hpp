#pragma once

#include "nepadd/corpus.hpp"
#include "nepadd/layers.hpp"

namespace nepadd {

// Backend: Transformer encoder -> BiLSTM -> ReLU -> FC -> ReLU -> FC -> sigmoid.
struct ClassifierConfig {
  std::size_t model_dim = 16;  // must match the aggregation output
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ff_dim = 64;
  std::size_t lstm_hidden = 16;
  std::size_t fc_dim = 32;
  bool positional_encoding = true;

  void validate() const;
};

class FrameClassifier {
 public:
  FrameClassifier(ParamStore& store, const ClassifierConfig& cfg, Rng& rng);

  // [T x D] -> [T] probabilities that each frame is authentic.
  Tensor forward(Tape& tape, const Tensor& h) const;

  const ClassifierConfig& config() const { return cfg_; }

 private:
  ClassifierConfig cfg_;
  TransformerEncoder encoder_;
  BiLstm lstm_;
  Linear fc_;
  Linear head_;
};

// Mean frame BCE with probabilities clamped to [1e-7, 1 - 1e-7].
// pos_weight scales the authentic-class term (1 = unweighted).
Tensor bce_frame_loss(Tape& tape, const Tensor& probs, std::span<const double> labels, double pos_weight = 1.0);
Tensor bce_frame_loss(Tape& tape, const Tensor& probs, const std::vector<int>& labels, double pos_weight = 1.0);

}  // namespace nepadd
