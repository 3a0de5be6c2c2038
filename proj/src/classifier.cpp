#include "nepadd/classifier.hpp"

#include "nepadd/errors.hpp"

namespace nepadd {

void ClassifierConfig::validate() const {
  if (model_dim == 0 || layers == 0 || heads == 0 || ff_dim == 0 || lstm_hidden == 0 || fc_dim == 0) {
    throw ConfigError("classifier: all dims must be positive");
  }
  if (model_dim % heads != 0) throw ConfigError("classifier: model_dim not divisible by heads");
}

FrameClassifier::FrameClassifier(ParamStore& store, const ClassifierConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  encoder_ = TransformerEncoder(store, "cls.enc", cfg.model_dim,
                                TransformerEncoderSpec{cfg.layers, cfg.heads, cfg.ff_dim}, rng);
  lstm_ = BiLstm(store, "cls.lstm", BiLstmSpec{cfg.model_dim, cfg.lstm_hidden, 1}, rng);
  fc_ = Linear(store, "cls.fc", 2 * cfg.lstm_hidden, cfg.fc_dim, true, rng);
  head_ = Linear(store, "cls.head", cfg.fc_dim, 1, true, rng);
}

Tensor FrameClassifier::forward(Tape& tape, const Tensor& h) const {
  if (h.rank() != 2 || h.dim(1) != cfg_.model_dim) {
    throw ConfigError("classifier: expected [T x " + std::to_string(cfg_.model_dim) + "] input, got " +
                      shape_str(h.shape()));
  }
  Tensor x = h;
  if (cfg_.positional_encoding) x = ops::add(tape, x, sinusoidal_positions(h.dim(0), cfg_.model_dim));
  x = encoder_.forward(tape, x);
  x = ops::relu(tape, lstm_.forward(tape, x));
  x = ops::relu(tape, fc_.forward(tape, x));
  x = ops::sigmoid(tape, head_.forward(tape, x));
  return ops::reshape(tape, x, {h.dim(0)});
}

Tensor bce_frame_loss(Tape& tape, const Tensor& probs, std::span<const double> labels, double pos_weight) {
  if (probs.rank() != 1) throw DimensionError("bce: probabilities must be rank 1, got " + shape_str(probs.shape()));
  return ops::bce_mean(tape, probs, labels, pos_weight);
}

Tensor bce_frame_loss(Tape& tape, const Tensor& probs, const std::vector<int>& labels, double pos_weight) {
  std::vector<double> y(labels.begin(), labels.end());
  return bce_frame_loss(tape, probs, std::span<const double>(y), pos_weight);
}

}  // namespace nepadd
