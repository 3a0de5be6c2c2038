#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nepadd/tape.hpp"
#include "nepadd/tensor.hpp"

// Differentiable primitives. Every op takes the tape it records on; ops whose
// inputs are all untracked (constants or frozen parameters) record nothing.
namespace nepadd::ops {

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
Tensor reshape(Tape& tape, const Tensor& a, Shape shape);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
// y = scale * a + shift
Tensor affine(Tape& tape, const Tensor& a, double scale, double shift = 0.0);

// a[m x n] + b[n] on every row.
Tensor add_row(Tape& tape, const Tensor& a, const Tensor& b);
// a[m x n] * g[m x 1], broadcasting each row's scalar across columns.
Tensor mul_col(Tape& tape, const Tensor& a, const Tensor& g);

Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor relu(Tape& tape, const Tensor& x);
Tensor tanh(Tape& tape, const Tensor& x);
// Throws DomainError on non-positive input.
Tensor log(Tape& tape, const Tensor& x);
// max(x, lo); gradient passes only where x > lo.
Tensor clamp_min(Tape& tape, const Tensor& x, double lo);

// Concatenates along the last dimension (rank 1 or matching-row rank 2).
Tensor concat_lastdim(Tape& tape, const Tensor& a, const Tensor& b);
Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t start, std::size_t count);

Tensor softmax_rows(Tape& tape, const Tensor& x);
// Row-wise normalization; gamma/beta may be undefined tensors (no affine).
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);
// Column means of a[m x n] -> [1 x n].
Tensor mean_rows(Tape& tape, const Tensor& a);

struct Conv1dGeometry {
  std::size_t kernel = 1;
  std::size_t padding = 0;
  std::size_t stride = 1;
};
std::size_t conv1d_output_length(std::size_t length, const Conv1dGeometry& g);
// x[C_in x T], weight[C_out x C_in x K], bias[C_out] or undefined.
Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias,
              const Conv1dGeometry& g);

// One LSTM direction over x[T x D]; weights in gate order (input, forget,
// cell, output): w_in[D x 4H], w_rec[H x 4H], bias[4H]. Returns [T x H].
Tensor lstm_direction(Tape& tape, const Tensor& x, const Tensor& w_in, const Tensor& w_rec,
                      const Tensor& bias, bool reverse);

// Mean over frames of -[w*y*log p + (1-y)*log(1-p)], p clamped to
// [1e-7, 1-1e-7]. `targets` in {0,1}.
Tensor bce_mean(Tape& tape, const Tensor& probs, std::span<const double> targets,
                double positive_weight = 1.0);
// Mean over rows of -log softmax(logits)[row, target].
Tensor cross_entropy_rows(Tape& tape, const Tensor& logits, std::span<const int> targets);

}  // namespace nepadd::ops
