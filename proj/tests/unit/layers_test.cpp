#include "doctest.h"

#include <cmath>

#include "nepadd/errors.hpp"
#include "nepadd/layers.hpp"
#include "test_util.hpp"

using namespace nepadd;
using nepadd::testing::gradcheck;
using nepadd::testing::probe_loss;
using nepadd::testing::random_tensor;

namespace {

std::vector<Tensor> leaves(const ParamStore& store, std::vector<Tensor> extra = {}) {
  for (const auto& p : store.params()) extra.push_back(p.tensor);
  return extra;
}

// Perturb zero-initialized biases/betas so their gradients are exercised
// away from the symmetric starting point.
void jitter(ParamStore& store, Rng& rng) {
  for (const auto& p : store.params()) {
    Tensor t = p.tensor;
    for (auto& v : t.data()) v += rng.normal(0.0, 0.1);
  }
}

}  // namespace

TEST_CASE("Layers.ConvLinearNormGrad") {
  Rng rng(11);
  ParamStore store;
  Conv1d conv(store, "c", Conv1dSpec{5, 2, 1, 3, 4, true}, rng);
  LayerNorm norm(store, "n", 4);
  Linear lin(store, "l", 4, 3, true, rng);
  jitter(store, rng);
  Tensor x = random_tensor({6, 3}, rng);
  auto f = [&](Tape& t) {
    Tensor h = conv.forward(t, ops::transpose(t, x));
    h = norm.forward(t, ops::transpose(t, h));
    return probe_loss(t, lin.forward(t, h));
  };
  CHECK_LT(gradcheck(f, leaves(store, {x})).max_rel_error, 1e-4);
}

TEST_CASE("Layers.ResidualBlockGradAndShape") {
  Rng rng(12);
  ParamStore store;
  ResidualBlock block(store, "r", 4, rng);
  jitter(store, rng);
  Tensor x = random_tensor({4, 7}, rng);
  Tape tape;
  CHECK_EQ(block.forward(tape, x).shape(), (Shape{4, 7}));
  auto f = [&](Tape& t) { return probe_loss(t, block.forward(t, x)); };
  CHECK_LT(gradcheck(f, leaves(store, {x})).max_rel_error, 1e-4);
}

TEST_CASE("Layers.SelfAttentionRowsSumToOne") {
  Rng rng(13);
  ParamStore store;
  SelfAttention att(store, "a", SelfAttentionSpec{8, 2, false}, rng);
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape;
    auto out = att.forward(tape, random_tensor({6, 8}, rng, 3.0));
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK_GE(out.attn(i, j), 0.0);
        s += out.attn(i, j);
      }
      CHECK_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST_CASE("Layers.SelfAttentionSingleFrameIsIdentityMap") {
  Rng rng(14);
  ParamStore store;
  SelfAttention att(store, "a", SelfAttentionSpec{4, 1, false}, rng);
  Tape tape;
  auto out = att.forward(tape, random_tensor({1, 4}, rng));
  CHECK_EQ(out.attn.shape(), (Shape{1, 1}));
  CHECK_DOUBLE_EQ(out.attn(0, 0), 1.0);
}

TEST_CASE("Layers.AttendedIsAttentionTimesValues") {
  Rng rng(15);
  ParamStore store;
  SelfAttention att(store, "a", SelfAttentionSpec{4, 1, false}, rng);
  Tensor x = random_tensor({5, 4}, rng);
  Tape tape;
  auto out = att.forward(tape, x);
  Tensor v = ops::matmul(tape, x.detach(), att.wv.detach());
  Tensor expect = ops::matmul(tape, out.attn.detach(), v);
  for (std::size_t i = 0; i < expect.numel(); ++i) CHECK_NEAR(out.attended[i], expect[i], 1e-12);
}

TEST_CASE("Layers.AttentionGrad") {
  Rng rng(16);
  ParamStore store;
  SelfAttention att(store, "a", SelfAttentionSpec{4, 2, true}, rng);
  jitter(store, rng);
  Tensor x = random_tensor({5, 4}, rng);
  auto f = [&](Tape& t) {
    auto o = att.forward(t, x);
    return ops::add(t, probe_loss(t, o.attended), probe_loss(t, o.attn, 5));
  };
  CHECK_LT(gradcheck(f, leaves(store, {x})).max_rel_error, 1e-4);
}

TEST_CASE("Layers.TransformerGrad") {
  Rng rng(17);
  ParamStore store;
  TransformerEncoder enc(store, "e", 4, TransformerEncoderSpec{2, 2, 6}, rng);
  jitter(store, rng);
  Tensor x = random_tensor({4, 4}, rng);
  auto f = [&](Tape& t) { return probe_loss(t, enc.forward(t, x)); };
  CHECK_LT(gradcheck(f, leaves(store, {x})).max_rel_error, 1e-4);
}

TEST_CASE("Layers.BiLstmShapeAndGrad") {
  Rng rng(18);
  ParamStore store;
  BiLstm lstm(store, "b", BiLstmSpec{3, 2, 2}, rng);
  Tensor x = random_tensor({5, 3}, rng);
  Tape tape;
  CHECK_EQ(lstm.forward(tape, x).shape(), (Shape{5, 4}));
  auto f = [&](Tape& t) { return probe_loss(t, lstm.forward(t, x)); };
  CHECK_LT(gradcheck(f, leaves(store, {x})).max_rel_error, 1e-4);
}

TEST_CASE("Layers.LstmForgetBiasStartsAtOne") {
  Rng rng(19);
  ParamStore store;
  BiLstm lstm(store, "b", BiLstmSpec{3, 2, 1}, rng);
  const Tensor& b = lstm.forward_dir[0].bias;
  // gate order i, f, g, o
  CHECK_EQ(b[0], 0.0);
  CHECK_EQ(b[2], 1.0);
  CHECK_EQ(b[3], 1.0);
  CHECK_EQ(b[4], 0.0);
}

TEST_CASE("Layers.SinusoidalPositions") {
  Tensor p = sinusoidal_positions(3, 4);
  CHECK_DOUBLE_EQ(p(0, 0), 0.0);
  CHECK_DOUBLE_EQ(p(0, 1), 1.0);
  CHECK_NEAR(p(1, 0), std::sin(1.0), 1e-15);
  CHECK_NEAR(p(1, 1), std::cos(1.0), 1e-15);
}

TEST_CASE("Layers.DuplicateParamNameRejected") {
  ParamStore store;
  store.create("w", {2});
  CHECK_THROWS_AS(store.create("w", {2}), ConfigError);
}

TEST_CASE("Layers.KernelOneIdentityConvCopiesInput") {
  Rng rng(20);
  ParamStore store;
  Conv1d conv(store, "c", Conv1dSpec{1, 0, 1, 3, 3, true}, rng);
  Tensor w = conv.weight;
  for (auto& v : w.data()) v = 0.0;
  for (std::size_t c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;  // [out x in x 1]
  Tensor b = conv.bias;
  for (auto& v : b.data()) v = 0.0;
  Tensor x = random_tensor({3, 9}, rng);
  Tape tape;
  Tensor y = conv.forward(tape, x);
  REQUIRE_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK_DOUBLE_EQ(y[i], x[i]);
}

TEST_CASE("Layers.LengthPreservingConv") { CHECK_EQ((Conv1dSpec{5, 2, 1, 1, 1, true}).output_length(10), 10u); }

TEST_CASE("Layers.IdenticalFramesGiveUniformAttention") {
  Rng rng(21);
  ParamStore store;
  SelfAttention att(store, "a", SelfAttentionSpec{4, 2, false}, rng);
  Tensor row = random_tensor({1, 4}, rng);
  Tensor x({5, 4});
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t d = 0; d < 4; ++d) x(t, d) = row(0, d);
  Tape tape;
  auto out = att.forward(tape, x);
  for (std::size_t i = 0; i < 25; ++i) CHECK_NEAR(out.attn[i], 0.2, 1e-12);
}

TEST_CASE("Layers.HandSetAttentionTwoFrames") {
  Rng rng(22);
  ParamStore store;
  SelfAttention att(store, "a", SelfAttentionSpec{2, 1, false}, rng);
  for (Tensor w : {att.wq, att.wk, att.wv}) {
    for (auto& v : w.data()) v = 0.0;
    w(0, 0) = w(1, 1) = 1.0;
  }
  Tape tape;
  auto out = att.forward(tape, Tensor::matrix({{1, 0}, {0, 1}}));
  const double e = std::exp(1.0 / std::sqrt(2.0));
  CHECK_NEAR(out.attn(0, 0), e / (e + 1.0), 1e-15);
  CHECK_NEAR(out.attn(0, 1), 1.0 / (e + 1.0), 1e-15);
}

TEST_CASE("Layers.ZeroLstmGivesZeroOutput") {
  Rng rng(23);
  ParamStore store;
  BiLstm lstm(store, "b", BiLstmSpec{3, 4, 1}, rng);
  for (const auto& p : store.params()) {
    Tensor t = p.tensor;
    for (auto& v : t.data()) v = 0.0;
  }
  Tape tape;
  Tensor y = lstm.forward(tape, random_tensor({6, 3}, rng));
  for (double v : y.data()) CHECK_EQ(v, 0.0);
}

TEST_CASE("Layers.ReversedInputSwapsLstmHalves") {
  Rng rng(24);
  ParamStore s1, s2;
  BiLstm a(s1, "b", BiLstmSpec{3, 2, 1}, rng);
  BiLstm b(s2, "b", BiLstmSpec{3, 2, 1}, rng);
  b.forward_dir = a.backward_dir;
  b.backward_dir = a.forward_dir;
  const std::size_t T = 5;
  Tensor x = random_tensor({T, 3}, rng);
  Tensor xr({T, 3});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t d = 0; d < 3; ++d) xr(t, d) = x(T - 1 - t, d);
  Tape tape;
  Tensor y = a.forward(tape, x), yr = b.forward(tape, xr);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t h = 0; h < 2; ++h) {
      CHECK_NEAR(yr(T - 1 - t, h), y(t, 2 + h), 1e-14);
      CHECK_NEAR(yr(T - 1 - t, 2 + h), y(t, h), 1e-14);
    }
}

TEST_CASE("Layers.ZeroTransformerIsNormOnly") {
  Rng rng(25);
  ParamStore store;
  TransformerEncoder enc(store, "e", 4, TransformerEncoderSpec{1, 2, 6}, rng);
  auto& l = enc.layers[0];
  for (Tensor w : {l.attention.wq, l.attention.wk, l.attention.wv, l.ff1.weight, l.ff1.bias, l.ff2.weight,
                   l.ff2.bias}) {
    for (auto& v : w.data()) v = 0.0;
  }
  if (l.attention.out.weight.defined()) {
    Tensor w = l.attention.out.weight;
    for (auto& v : w.data()) v = 0.0;
  }
  Tensor x = random_tensor({5, 4}, rng);
  Tape tape;
  Tensor y = enc.forward(tape, x);
  Tensor expect = l.norm2.forward(tape, l.norm1.forward(tape, x));
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK_NEAR(y[i], expect[i], 1e-12);
}

TEST_CASE("Layers.RandomShapesPreserved") {
  Rng rng(26);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 1 + rng.integer(0, 11);
    const std::size_t heads = 1 + rng.integer(0, 2);
    const std::size_t D = heads * (1 + rng.integer(0, 3));
    ParamStore store;
    TransformerEncoder enc(store, "e", D, TransformerEncoderSpec{1, heads, 2 * D}, rng);
    BiLstm lstm(store, "b", BiLstmSpec{D, 3, 1}, rng);
    ResidualBlock res(store, "r", D, rng);
    Tape tape;
    Tensor x = random_tensor({T, D}, rng);
    REQUIRE_EQ(enc.forward(tape, x).shape(), (Shape{T, D}));
    REQUIRE_EQ(lstm.forward(tape, x).shape(), (Shape{T, 6}));
    REQUIRE_EQ(res.forward(tape, ops::transpose(tape, x)).shape(), (Shape{D, T}));
  }
}

TEST_CASE("Layers.TransformerShapes") {
  Rng rng(27);
  for (auto [T, D] : {std::pair<std::size_t, std::size_t>{5, 8}, {16, 32}}) {
    ParamStore store;
    TransformerEncoder enc(store, "e", D, TransformerEncoderSpec{2, 2, 64}, rng);
    Tape tape;
    CHECK_EQ(enc.forward(tape, random_tensor({T, D}, rng)).shape(), (Shape{T, D}));
  }
}
