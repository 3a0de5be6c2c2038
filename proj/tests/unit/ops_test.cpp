#include "doctest.h"

#include <cmath>

#include "nepadd/errors.hpp"
#include "nepadd/ops.hpp"
#include "test_util.hpp"

using namespace nepadd;
using nepadd::testing::gradcheck;
using nepadd::testing::probe_loss;
using nepadd::testing::random_tensor;

namespace {
constexpr double kGradTol = 1e-4;
}

TEST_CASE("Tensor.ShapesAndAccess") {
  Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK_EQ(m.rows(), 2u);
  CHECK_EQ(m.cols(), 3u);
  CHECK_EQ(m(1, 2), 6.0);
  CHECK_EQ(shape_str(m.shape()), "[2x3]");
  CHECK_THROWS_AS(Tensor({0, 3}), DimensionError);
  Tensor c = m.clone();
  c(0, 0) = 9;
  CHECK_EQ(m(0, 0), 1.0);
  CHECK(m.detach().same_storage(m) == false);
}

TEST_CASE("Ops.MatmulValues") {
  Tape tape;
  Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  Tensor b = Tensor::matrix({{5, 6}, {7, 8}});
  Tensor y = ops::matmul(tape, a, b);
  CHECK_EQ(y(0, 0), 19);
  CHECK_EQ(y(0, 1), 22);
  CHECK_EQ(y(1, 0), 43);
  CHECK_EQ(y(1, 1), 50);
  CHECK_EQ(tape.size(), 0u);  // constants record nothing
  CHECK_THROWS_AS(ops::matmul(tape, a, Tensor({3, 2})), DimensionError);
}

TEST_CASE("Ops.SoftmaxSpecExample") {
  Tape tape;
  Tensor y = ops::softmax_rows(tape, Tensor::matrix({{0.0, std::log(3.0)}}));
  CHECK_NEAR(y(0, 0), 0.25, 1e-15);
  CHECK_NEAR(y(0, 1), 0.75, 1e-15);
}

TEST_CASE("Ops.SoftmaxLargeLogitsStayFinite") {
  Tape tape;
  Tensor y = ops::softmax_rows(tape, Tensor::matrix({{1000.0, 0.0, -1000.0}}));
  CHECK_NEAR(y(0, 0), 1.0, 1e-15);
  CHECK(std::isfinite(y(0, 2)));
}

TEST_CASE("Ops.LogRejectsNonPositive") {
  Tape tape;
  CHECK_THROWS_AS(ops::log(tape, Tensor::vector({1.0, 0.0})), DomainError);
}

TEST_CASE("Ops.BceExamples") {
  Tape tape;
  std::vector<double> y{1, 0};
  CHECK_NEAR(ops::bce_mean(tape, Tensor::vector({0.9, 0.2}), y).item(), -(std::log(0.9) + std::log(0.8)) / 2,
              1e-14);
  CHECK_NEAR(ops::bce_mean(tape, Tensor::vector({0.5, 0.5}), y).item(), std::log(2.0), 1e-15);
  CHECK_LE(ops::bce_mean(tape, Tensor::vector({1.0, 0.0}), y).item(), 1.7e-7);
}

TEST_CASE("Tape.BackwardTwiceDoublesLeafGrads") {
  Rng rng(1);
  Tensor x = random_tensor({3, 2}, rng);
  Tape tape;
  Tensor loss = ops::sum(tape, ops::mul(tape, x, x));
  tape.backward(loss);
  std::vector<double> g1(x.grad().begin(), x.grad().end());
  tape.backward(loss);
  for (std::size_t i = 0; i < g1.size(); ++i) {
    CHECK_DOUBLE_EQ(g1[i], 2 * x[i]);
    CHECK_DOUBLE_EQ(x.grad()[i], 2 * g1[i]);
  }
}

TEST_CASE("Tape.NonScalarLossRejected") {
  Rng rng(2);
  Tensor x = random_tensor({2, 2}, rng);
  Tape tape;
  Tensor y = ops::affine(tape, x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("Tape.FrozenLeafRecordsNothing") {
  Rng rng(3);
  Tensor w = random_tensor({2, 2}, rng);
  w.set_frozen(true);
  Tape tape;
  ops::relu(tape, ops::matmul(tape, w, w));
  CHECK_EQ(tape.size(), 0u);
}

// One finite-difference check per differentiable primitive.
struct OpGrad {
  Rng rng{7};
  void expect_ok(const std::function<Tensor(Tape&)>& f, const std::vector<Tensor>& wrt) {
    auto rep = gradcheck(f, wrt);
    CHECK_GT(rep.checked, 0u);
    CHECK_LT(rep.max_rel_error, kGradTol);
  }
};

TEST_CASE_FIXTURE(OpGrad, "OpGrad.Matmul") {
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  expect_ok([&](Tape& t) { return probe_loss(t, ops::matmul(t, a, b)); }, {a, b});
}

TEST_CASE_FIXTURE(OpGrad, "OpGrad.TransposeReshape") {
  Tensor a = random_tensor({3, 4}, rng);
  expect_ok([&](Tape& t) { return probe_loss(t, ops::reshape(t, ops::transpose(t, a), {2, 6})); }, {a});
}

TEST_CASE_FIXTURE(OpGrad, "OpGrad.Elementwise") {
  Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
  expect_ok(
      [&](Tape& t) {
        Tensor y = ops::add(t, ops::mul(t, a, b), ops::sub(t, ops::sigmoid(t, a), ops::tanh(t, b)));
        return probe_loss(t, ops::affine(t, ops::relu(t, y), 1.5, 0.2));
      },
      {a, b});
}

TEST_CASE_FIXTURE(OpGrad, "OpGrad.LogClamp") {
  Tensor a(Shape{2, 3}, std::vector<double>{0.3, 0.9, 1.7, 0.05, 2.2, 0.6}, true);
  expect_ok([&](Tape& t) { return probe_loss(t, ops::log(t, ops::clamp_min(t, a, 0.01))); }, {a});
}

TEST_CASE_FIXTURE(OpGrad, "OpGrad.Broadcasts") {
  Tensor a = random_tensor({4, 3}, rng), b = random_tensor({3}, rng), g = random_tensor({4, 1}, rng);
  expect_ok([&](Tape& t) { return probe_loss(t, ops::mul_col(t, ops::add_row(t, a, b), g)); }, {a, b, g});
}

TEST_CASE_FIXTURE(OpGrad, "OpGrad.ConcatSlice") {
  Tensor a = random_tensor({3, 2}, rng), b = random_tensor({3, 4}, rng);
  expect_ok([&](Tape& t) { return probe_loss(t, ops::slice_cols(t, ops::concat_lastdim(t, a, b), 1, 4)); }, {a, b});
}

TEST_CASE_FIXTURE(OpGrad, "OpGrad.Softmax") {
  Tensor a = random_tensor({3, 5}, rng);
  expect_ok([&](Tape& t) { return probe_loss(t, ops::softmax_rows(t, a)); }, {a});
}

TEST_CASE_FIXTURE(OpGrad, "OpGrad.LayerNorm") {
  Tensor x = random_tensor({4, 6}, rng), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
  expect_ok([&](Tape& t) { return probe_loss(t, ops::layer_norm(t, x, g, b)); }, {x, g, b});
}

TEST_CASE_FIXTURE(OpGrad, "OpGrad.Reductions") {
  Tensor a = random_tensor({3, 4}, rng);
  expect_ok(
      [&](Tape& t) {
        return ops::add(t, ops::mean(t, ops::mul(t, a, a)), probe_loss(t, ops::mean_rows(t, a)));
      },
      {a});
}

TEST_CASE_FIXTURE(OpGrad, "OpGrad.Conv1dStridedPadded") {
  Tensor x = random_tensor({3, 8}, rng), w = random_tensor({2, 3, 3}, rng), b = random_tensor({2}, rng);
  expect_ok([&](Tape& t) { return probe_loss(t, ops::conv1d(t, x, w, b, {3, 1, 2})); }, {x, w, b});
}

TEST_CASE_FIXTURE(OpGrad, "OpGrad.LstmBothDirections") {
  Tensor x = random_tensor({5, 3}, rng), wi = random_tensor({3, 8}, rng, 0.5), wr = random_tensor({2, 8}, rng, 0.5),
         b = random_tensor({8}, rng, 0.5);
  for (bool reverse : {false, true}) {
    expect_ok([&](Tape& t) { return probe_loss(t, ops::lstm_direction(t, x, wi, wr, b, reverse)); }, {x, wi, wr, b});
  }
}

TEST_CASE_FIXTURE(OpGrad, "OpGrad.BceAndCrossEntropy") {
  Tensor logits = random_tensor({4, 7}, rng);
  std::vector<int> cls{0, 3, 6, 1};
  Tensor z = random_tensor({5}, rng);
  std::vector<double> y{1, 0, 1, 1, 0};
  expect_ok([&](Tape& t) { return ops::cross_entropy_rows(t, logits, cls); }, {logits});
  expect_ok([&](Tape& t) { return ops::bce_mean(t, ops::sigmoid(t, z), y, 1.7); }, {z});
}

TEST_CASE("Ops.Conv1dOutputLength") {
  CHECK_EQ(ops::conv1d_output_length(10, {5, 2, 1}), 10u);
  CHECK_EQ(ops::conv1d_output_length(10, {1, 0, 1}), 10u);
  CHECK_EQ(ops::conv1d_output_length(8, {3, 1, 2}), 4u);
}
