#pragma once

#include <string>
#include <vector>

#include "nepadd/ops.hpp"
#include "nepadd/params.hpp"
#include "nepadd/rng.hpp"

namespace nepadd {

// C(kernel, padding, stride) in the usual notation.
struct Conv1dSpec {
  std::size_t kernel = 1;
  std::size_t padding = 0;
  std::size_t stride = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  bool bias = true;

  std::size_t output_length(std::size_t length) const;
  ops::Conv1dGeometry geometry() const { return {kernel, padding, stride}; }
};

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParamStore& store, const std::string& prefix, const Conv1dSpec& spec, Rng& rng);
  // x: [C_in x T] -> [C_out x T']
  Tensor forward(Tape& tape, const Tensor& x) const;

  Conv1dSpec spec;
  Tensor weight;
  Tensor bias;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, bool bias,
         Rng& rng);
  // x: [T x in] -> [T x out]
  Tensor forward(Tape& tape, const Tensor& x) const;

  Tensor weight;
  Tensor bias;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& prefix, std::size_t dim);
  Tensor forward(Tape& tape, const Tensor& x) const;

  Tensor gamma;
  Tensor beta;
};

// x + relu(norm(conv(x))) with a length-preserving C(1,0,1) convolution and
// layer norm across channels.
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParamStore& store, const std::string& prefix, std::size_t channels, Rng& rng);
  // x: [C x T] -> [C x T]
  Tensor forward(Tape& tape, const Tensor& x) const;

  Conv1d conv;
  LayerNorm norm;
};

struct SelfAttentionSpec {
  std::size_t model_dim = 16;
  std::size_t heads = 1;
  bool output_projection = false;
};

struct AttentionOutput {
  Tensor attended;  // [T x D]
  Tensor attn;      // [T x T], row-stochastic, averaged over heads
};

// softmax(Q K^T / sqrt(d_head)) V per head; heads concatenated. Without an
// output projection the attended embeddings are exactly attn-weighted values.
class SelfAttention {
 public:
  SelfAttention() = default;
  SelfAttention(ParamStore& store, const std::string& prefix, const SelfAttentionSpec& spec, Rng& rng);
  AttentionOutput forward(Tape& tape, const Tensor& x) const;

  SelfAttentionSpec spec;
  Tensor wq, wk, wv;
  Linear out;
};

struct TransformerEncoderSpec {
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t feedforward_dim = 64;
};

// Post-norm layer: x = LN(x + MHA(x)); x = LN(x + FF(x)).
class TransformerEncoderLayer {
 public:
  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(ParamStore& store, const std::string& prefix, std::size_t model_dim,
                          std::size_t heads, std::size_t ff_dim, Rng& rng);
  Tensor forward(Tape& tape, const Tensor& x) const;

  SelfAttention attention;
  LayerNorm norm1, norm2;
  Linear ff1, ff2;
};

class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(ParamStore& store, const std::string& prefix, std::size_t model_dim,
                     const TransformerEncoderSpec& spec, Rng& rng);
  Tensor forward(Tape& tape, const Tensor& x) const;

  std::vector<TransformerEncoderLayer> layers;
};

struct BiLstmSpec {
  std::size_t input_dim = 16;
  std::size_t hidden_dim = 8;
  std::size_t layer_count = 1;
};

struct LstmWeights {
  Tensor w_in;   // [D x 4H]
  Tensor w_rec;  // [H x 4H]
  Tensor bias;   // [4H]
};

class BiLstm {
 public:
  BiLstm() = default;
  BiLstm(ParamStore& store, const std::string& prefix, const BiLstmSpec& spec, Rng& rng);
  // x: [T x D_in] -> [T x 2H]; forward half first.
  Tensor forward(Tape& tape, const Tensor& x) const;

  BiLstmSpec spec;
  std::vector<LstmWeights> forward_dir;
  std::vector<LstmWeights> backward_dir;
};

// Standard sin/cos table, [T x D].
Tensor sinusoidal_positions(std::size_t length, std::size_t dim);

}  // namespace nepadd
