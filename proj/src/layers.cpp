#include "nepadd/layers.hpp"

#include <cmath>

#include "nepadd/errors.hpp"

namespace nepadd {

std::size_t Conv1dSpec::output_length(std::size_t length) const {
  return ops::conv1d_output_length(length, geometry());
}

Conv1d::Conv1d(ParamStore& store, const std::string& prefix, const Conv1dSpec& s, Rng& rng) : spec(s) {
  if (s.in_channels == 0 || s.out_channels == 0 || s.kernel == 0 || s.stride == 0) {
    throw ConfigError(prefix + ": conv extents must be positive");
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(s.in_channels * s.kernel));
  weight = store.uniform(prefix + ".weight", {s.out_channels, s.in_channels, s.kernel}, bound, rng);
  if (s.bias) bias = store.uniform(prefix + ".bias", {s.out_channels}, bound, rng);
}

Tensor Conv1d::forward(Tape& tape, const Tensor& x) const {
  return ops::conv1d(tape, x, weight, bias, spec.geometry());
}

Linear::Linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, bool with_bias,
               Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  weight = store.uniform(prefix + ".weight", {in, out}, bound, rng);
  if (with_bias) bias = store.create(prefix + ".bias", {out});
}

Tensor Linear::forward(Tape& tape, const Tensor& x) const {
  Tensor y = ops::matmul(tape, x, weight);
  if (bias.defined()) y = ops::add_row(tape, y, bias);
  return y;
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& prefix, std::size_t dim) {
  gamma = store.create(prefix + ".gamma", {dim}, 1.0);
  beta = store.create(prefix + ".beta", {dim}, 0.0);
}

Tensor LayerNorm::forward(Tape& tape, const Tensor& x) const { return ops::layer_norm(tape, x, gamma, beta); }

ResidualBlock::ResidualBlock(ParamStore& store, const std::string& prefix, std::size_t channels, Rng& rng) {
  conv = Conv1d(store, prefix + ".conv", Conv1dSpec{1, 0, 1, channels, channels, true}, rng);
  norm = LayerNorm(store, prefix + ".norm", channels);
}

Tensor ResidualBlock::forward(Tape& tape, const Tensor& x) const {
  Tensor h = conv.forward(tape, x);
  h = ops::transpose(tape, h);
  h = norm.forward(tape, h);
  h = ops::relu(tape, h);
  h = ops::transpose(tape, h);
  return ops::add(tape, x, h);
}

SelfAttention::SelfAttention(ParamStore& store, const std::string& prefix, const SelfAttentionSpec& s,
                             Rng& rng)
    : spec(s) {
  if (s.model_dim == 0 || s.heads == 0 || s.model_dim % s.heads != 0) {
    throw ConfigError(prefix + ": model_dim " + std::to_string(s.model_dim) +
                      " is not divisible by head count " + std::to_string(s.heads));
  }
  const std::size_t d = s.model_dim;
  const double bound = std::sqrt(6.0 / static_cast<double>(2 * d));
  wq = store.uniform(prefix + ".wq", {d, d}, bound, rng);
  wk = store.uniform(prefix + ".wk", {d, d}, bound, rng);
  wv = store.uniform(prefix + ".wv", {d, d}, bound, rng);
  if (s.output_projection) out = Linear(store, prefix + ".out", d, d, true, rng);
}

AttentionOutput SelfAttention::forward(Tape& tape, const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != spec.model_dim) {
    throw DimensionError("self_attention: expected [T x " + std::to_string(spec.model_dim) + "], got " +
                         shape_str(x.shape()));
  }
  const std::size_t head_dim = spec.model_dim / spec.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Tensor q = ops::matmul(tape, x, wq);
  Tensor k = ops::matmul(tape, x, wk);
  Tensor v = ops::matmul(tape, x, wv);

  Tensor attended, attn;
  for (std::size_t h = 0; h < spec.heads; ++h) {
    Tensor qh = q, kh = k, vh = v;
    if (spec.heads > 1) {
      qh = ops::slice_cols(tape, q, h * head_dim, head_dim);
      kh = ops::slice_cols(tape, k, h * head_dim, head_dim);
      vh = ops::slice_cols(tape, v, h * head_dim, head_dim);
    }
    Tensor scores = ops::affine(tape, ops::matmul(tape, qh, ops::transpose(tape, kh)), scale);
    Tensor a = ops::softmax_rows(tape, scores);
    Tensor o = ops::matmul(tape, a, vh);
    attended = h == 0 ? o : ops::concat_lastdim(tape, attended, o);
    attn = h == 0 ? a : ops::add(tape, attn, a);
  }
  if (spec.heads > 1) attn = ops::affine(tape, attn, 1.0 / static_cast<double>(spec.heads));
  if (spec.output_projection) attended = out.forward(tape, attended);
  return {attended, attn};
}

TransformerEncoderLayer::TransformerEncoderLayer(ParamStore& store, const std::string& prefix,
                                                 std::size_t model_dim, std::size_t heads,
                                                 std::size_t ff_dim, Rng& rng) {
  attention = SelfAttention(store, prefix + ".attn", SelfAttentionSpec{model_dim, heads, true}, rng);
  norm1 = LayerNorm(store, prefix + ".norm1", model_dim);
  ff1 = Linear(store, prefix + ".ff1", model_dim, ff_dim, true, rng);
  ff2 = Linear(store, prefix + ".ff2", ff_dim, model_dim, true, rng);
  norm2 = LayerNorm(store, prefix + ".norm2", model_dim);
}

Tensor TransformerEncoderLayer::forward(Tape& tape, const Tensor& x) const {
  Tensor h = norm1.forward(tape, ops::add(tape, x, attention.forward(tape, x).attended));
  Tensor f = ff2.forward(tape, ops::relu(tape, ff1.forward(tape, h)));
  return norm2.forward(tape, ops::add(tape, h, f));
}

TransformerEncoder::TransformerEncoder(ParamStore& store, const std::string& prefix, std::size_t model_dim,
                                       const TransformerEncoderSpec& spec, Rng& rng) {
  if (spec.heads == 0 || model_dim % spec.heads != 0) {
    throw ConfigError(prefix + ": model_dim " + std::to_string(model_dim) +
                      " is not divisible by head count " + std::to_string(spec.heads));
  }
  for (std::size_t i = 0; i < spec.layers; ++i) {
    layers.emplace_back(store, prefix + ".layer" + std::to_string(i), model_dim, spec.heads,
                        spec.feedforward_dim, rng);
  }
}

Tensor TransformerEncoder::forward(Tape& tape, const Tensor& x) const {
  Tensor h = x;
  for (const auto& layer : layers) h = layer.forward(tape, h);
  return h;
}

namespace {

LstmWeights make_lstm(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                      Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  LstmWeights w;
  w.w_in = store.uniform(prefix + ".w_in", {in, 4 * hidden}, bound, rng);
  w.w_rec = store.uniform(prefix + ".w_rec", {hidden, 4 * hidden}, bound, rng);
  w.bias = store.create(prefix + ".bias", {4 * hidden});
  for (std::size_t h = 0; h < hidden; ++h) w.bias[hidden + h] = 1.0;
  return w;
}

}  // namespace

BiLstm::BiLstm(ParamStore& store, const std::string& prefix, const BiLstmSpec& s, Rng& rng) : spec(s) {
  if (s.input_dim == 0 || s.hidden_dim == 0 || s.layer_count == 0) {
    throw ConfigError(prefix + ": BiLSTM dims must be positive");
  }
  for (std::size_t l = 0; l < s.layer_count; ++l) {
    const std::size_t in = l == 0 ? s.input_dim : 2 * s.hidden_dim;
    const std::string p = prefix + ".layer" + std::to_string(l);
    forward_dir.push_back(make_lstm(store, p + ".fwd", in, s.hidden_dim, rng));
    backward_dir.push_back(make_lstm(store, p + ".bwd", in, s.hidden_dim, rng));
  }
}

Tensor BiLstm::forward(Tape& tape, const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != spec.input_dim) {
    throw DimensionError("bilstm: expected [T x " + std::to_string(spec.input_dim) + "], got " +
                         shape_str(x.shape()));
  }
  Tensor h = x;
  for (std::size_t l = 0; l < spec.layer_count; ++l) {
    const auto& f = forward_dir[l];
    const auto& b = backward_dir[l];
    Tensor hf = ops::lstm_direction(tape, h, f.w_in, f.w_rec, f.bias, false);
    Tensor hb = ops::lstm_direction(tape, h, b.w_in, b.w_rec, b.bias, true);
    h = ops::concat_lastdim(tape, hf, hb);
  }
  return h;
}

Tensor sinusoidal_positions(std::size_t length, std::size_t dim) {
  Tensor pe({length, dim});
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(t) * freq;
      pe(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

}  // namespace nepadd
