#include "nepadd/ops.hpp"

#include <algorithm>
#include <cmath>

#include "nepadd/errors.hpp"

namespace nepadd::ops {

namespace {

bool tracked(const Tensor& t) { return t.defined() && t.tracks(); }

Tensor result(Shape shape, std::vector<double> values, bool track) {
  return Tensor(std::move(shape), std::move(values), track);
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_str(a.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// Element-wise unary op with derivative expressed through input x and output y.
template <typename F, typename DF>
Tensor unary(Tape& tape, const Tensor& x, F f, DF df) {
  std::vector<double> v(x.numel());
  const auto xs = x.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(xs[i]);
  const bool track = tracked(x);
  Tensor out = result(x.shape(), std::move(v), track);
  if (track) {
    TensorNode* xn = x.node();
    TensorNode* yn = out.node();
    tape.record(out, {x}, [xn, yn, df] {
      for (std::size_t i = 0; i < yn->pass.size(); ++i) {
        xn->pass[i] += yn->pass[i] * df(xn->value[i], yn->value[i]);
      }
    });
  }
  return out;
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> y(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* yr = y.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* br = B + p * n;
      for (std::size_t j = 0; j < n; ++j) yr[j] += av * br[j];
    }
  }
  const bool track = tracked(a) || tracked(b);
  Tensor out = result({m, n}, std::move(y), track);
  if (track) {
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    TensorNode* yn = out.node();
    tape.record(out, {a, b}, [an, bn, yn, m, k, n] {
      const double* G = yn->pass.data();
      if (an->tracks()) {
        // dA = G * B^T
        // axpy over a transposed copy of B vectorizes; the dot-product form does not.
        const double* B = bn->value.data();
        std::vector<double> bt(n * k);
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
        double* dA = an->pass.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* gr = G + i * n;
          double* dar = dA + i * k;
          for (std::size_t j = 0; j < n; ++j) {
            const double gv = gr[j];
            if (gv == 0.0) continue;
            const double* btr = bt.data() + j * k;
            for (std::size_t p = 0; p < k; ++p) dar[p] += gv * btr[p];
          }
        }
      }
      if (bn->tracks()) {
        // dB = A^T * G
        const double* A = an->value.data();
        double* dB = bn->pass.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* gr = G + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            if (av == 0.0) continue;
            double* dbr = dB + p * n;
            for (std::size_t j = 0; j < n; ++j) dbr[j] += av * gr[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> y(m * n);
  const auto A = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j * m + i] = A[i * n + j];
  const bool track = tracked(a);
  Tensor out = result({n, m}, std::move(y), track);
  if (track) {
    TensorNode* an = a.node();
    TensorNode* yn = out.node();
    tape.record(out, {a}, [an, yn, m, n] {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) an->pass[i * n + j] += yn->pass[j * m + i];
    });
  }
  return out;
}

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  const bool track = tracked(a);
  Tensor out = result(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()), track);
  if (track) {
    TensorNode* an = a.node();
    TensorNode* yn = out.node();
    tape.record(out, {a}, [an, yn] {
      for (std::size_t i = 0; i < yn->pass.size(); ++i) an->pass[i] += yn->pass[i];
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
  const bool track = tracked(a) || tracked(b);
  Tensor out = result(a.shape(), std::move(y), track);
  if (track) {
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    TensorNode* yn = out.node();
    tape.record(out, {a, b}, [an, bn, yn] {
      const bool ta = an->tracks(), tb = bn->tracks();
      for (std::size_t i = 0; i < yn->pass.size(); ++i) {
        if (ta) an->pass[i] += yn->pass[i];
        if (tb) bn->pass[i] += yn->pass[i];
      }
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] - b[i];
  const bool track = tracked(a) || tracked(b);
  Tensor out = result(a.shape(), std::move(y), track);
  if (track) {
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    TensorNode* yn = out.node();
    tape.record(out, {a, b}, [an, bn, yn] {
      const bool ta = an->tracks(), tb = bn->tracks();
      for (std::size_t i = 0; i < yn->pass.size(); ++i) {
        if (ta) an->pass[i] += yn->pass[i];
        if (tb) bn->pass[i] -= yn->pass[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
  const bool track = tracked(a) || tracked(b);
  Tensor out = result(a.shape(), std::move(y), track);
  if (track) {
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    TensorNode* yn = out.node();
    tape.record(out, {a, b}, [an, bn, yn] {
      const bool ta = an->tracks(), tb = bn->tracks();
      for (std::size_t i = 0; i < yn->pass.size(); ++i) {
        if (ta) an->pass[i] += yn->pass[i] * bn->value[i];
        if (tb) bn->pass[i] += yn->pass[i] * an->value[i];
      }
    });
  }
  return out;
}

Tensor affine(Tape& tape, const Tensor& a, double scale, double shift) {
  return unary(
      tape, a, [scale, shift](double x) { return scale * x + shift; },
      [scale](double, double) { return scale; });
}

Tensor add_row(Tape& tape, const Tensor& a, const Tensor& b) {
  require_matrix(a, "add_row");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (b.numel() != n) {
    throw DimensionError("add_row: bias " + shape_str(b.shape()) + " does not match rows of " +
                         shape_str(a.shape()));
  }
  std::vector<double> y(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = a[i * n + j] + b[j];
  const bool track = tracked(a) || tracked(b);
  Tensor out = result(a.shape(), std::move(y), track);
  if (track) {
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    TensorNode* yn = out.node();
    tape.record(out, {a, b}, [an, bn, yn, m, n] {
      const bool ta = an->tracks(), tb = bn->tracks();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double g = yn->pass[i * n + j];
          if (ta) an->pass[i * n + j] += g;
          if (tb) bn->pass[j] += g;
        }
      }
    });
  }
  return out;
}

Tensor mul_col(Tape& tape, const Tensor& a, const Tensor& g) {
  require_matrix(a, "mul_col");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (g.numel() != m) {
    throw DimensionError("mul_col: column " + shape_str(g.shape()) + " does not match " +
                         shape_str(a.shape()));
  }
  std::vector<double> y(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = a[i * n + j] * g[i];
  const bool track = tracked(a) || tracked(g);
  Tensor out = result(a.shape(), std::move(y), track);
  if (track) {
    TensorNode* an = a.node();
    TensorNode* gn = g.node();
    TensorNode* yn = out.node();
    tape.record(out, {a, g}, [an, gn, yn, m, n] {
      const bool ta = an->tracks(), tg = gn->tracks();
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double gy = yn->pass[i * n + j];
          if (ta) an->pass[i * n + j] += gy * gn->value[i];
          s += gy * an->value[i * n + j];
        }
        if (tg) gn->pass[i] += s;
      }
    });
  }
  return out;
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary(
      tape, x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor tanh(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor log(Tape& tape, const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(v) + " in tensor of shape " +
                        shape_str(x.shape()));
    }
  }
  return unary(
      tape, x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor clamp_min(Tape& tape, const Tensor& x, double lo) {
  return unary(
      tape, x, [lo](double v) { return v > lo ? v : lo; },
      [lo](double v, double) { return v > lo ? 1.0 : 0.0; });
}

Tensor concat_lastdim(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() == 0 || a.rank() > 2 || a.rows() != b.rows()) {
    throw DimensionError("concat_lastdim: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), p = a.cols(), q = b.cols();
  std::vector<double> y(m * (p + q));
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(a.data().begin() + i * p, p, y.begin() + i * (p + q));
    std::copy_n(b.data().begin() + i * q, q, y.begin() + i * (p + q) + p);
  }
  Shape shape = a.rank() == 1 ? Shape{p + q} : Shape{m, p + q};
  const bool track = tracked(a) || tracked(b);
  Tensor out = result(std::move(shape), std::move(y), track);
  if (track) {
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    TensorNode* yn = out.node();
    tape.record(out, {a, b}, [an, bn, yn, m, p, q] {
      for (std::size_t i = 0; i < m; ++i) {
        if (an->tracks())
          for (std::size_t j = 0; j < p; ++j) an->pass[i * p + j] += yn->pass[i * (p + q) + j];
        if (bn->tracks())
          for (std::size_t j = 0; j < q; ++j) bn->pass[i * q + j] += yn->pass[i * (p + q) + p + j];
      }
    });
  }
  return out;
}

Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t start, std::size_t count) {
  require_matrix(a, "slice_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (count == 0 || start + count > n) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " + shape_str(a.shape()));
  }
  std::vector<double> y(m * count);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(a.data().begin() + i * n + start, count, y.begin() + i * count);
  const bool track = tracked(a);
  Tensor out = result({m, count}, std::move(y), track);
  if (track) {
    TensorNode* an = a.node();
    TensorNode* yn = out.node();
    tape.record(out, {a}, [an, yn, m, n, start, count] {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) an->pass[i * n + start + j] += yn->pass[i * count + j];
    });
  }
  return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> y(m * n);
  const auto X = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mx = X[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, X[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[i * n + j] = std::exp(X[i * n + j] - mx);
      z += y[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] /= z;
  }
  const bool track = tracked(x);
  Tensor out = result(x.shape(), std::move(y), track);
  if (track) {
    TensorNode* xn = x.node();
    TensorNode* yn = out.node();
    tape.record(out, {x}, [xn, yn, m, n] {
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += yn->pass[i * n + j] * yn->value[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          xn->pass[i * n + j] += yn->value[i * n + j] * (yn->pass[i * n + j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t m = x.rows(), n = x.cols();
  if ((gamma.defined() && gamma.numel() != n) || (beta.defined() && beta.numel() != n)) {
    throw DimensionError("layer_norm: affine parameters do not match row width of " +
                         shape_str(x.shape()));
  }
  std::vector<double> xhat(m * n), inv_std(m), y(m * n);
  const auto X = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += X[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = X[i * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (X[i * n + j] - mu) * inv_std[i];
      xhat[i * n + j] = h;
      double v = h;
      if (gamma.defined()) v *= gamma[j];
      if (beta.defined()) v += beta[j];
      y[i * n + j] = v;
    }
  }
  const bool track = tracked(x) || tracked(gamma) || tracked(beta);
  Tensor out = result(x.shape(), std::move(y), track);
  if (track) {
    TensorNode* xn = x.node();
    TensorNode* gn = gamma.defined() ? gamma.node() : nullptr;
    TensorNode* bn = beta.defined() ? beta.node() : nullptr;
    TensorNode* yn = out.node();
    std::vector<Tensor> inputs{x};
    if (gamma.defined()) inputs.push_back(gamma);
    if (beta.defined()) inputs.push_back(beta);
    tape.record(out, std::move(inputs),
                [xn, gn, bn, yn, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
                  std::vector<double> dh(n);
                  for (std::size_t i = 0; i < m; ++i) {
                    double mean_dh = 0.0, mean_dh_h = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                      const double g = yn->pass[i * n + j];
                      if (gn && gn->tracks()) gn->pass[j] += g * xhat[i * n + j];
                      if (bn && bn->tracks()) bn->pass[j] += g;
                      dh[j] = gn ? g * gn->value[j] : g;
                      mean_dh += dh[j];
                      mean_dh_h += dh[j] * xhat[i * n + j];
                    }
                    if (!xn->tracks()) continue;
                    mean_dh /= static_cast<double>(n);
                    mean_dh_h /= static_cast<double>(n);
                    for (std::size_t j = 0; j < n; ++j) {
                      xn->pass[i * n + j] +=
                          inv_std[i] * (dh[j] - mean_dh - xhat[i * n + j] * mean_dh_h);
                    }
                  }
                });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  const bool track = tracked(a);
  Tensor out = result(Shape{}, {s}, track);
  if (track) {
    TensorNode* an = a.node();
    TensorNode* yn = out.node();
    tape.record(out, {a}, [an, yn] {
      const double g = yn->pass[0];
      for (auto& p : an->pass) p += g;
    });
  }
  return out;
}

Tensor mean(Tape& tape, const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.data()) s += v;
  const bool track = tracked(a);
  Tensor out = result(Shape{}, {s * inv}, track);
  if (track) {
    TensorNode* an = a.node();
    TensorNode* yn = out.node();
    tape.record(out, {a}, [an, yn, inv] {
      const double g = yn->pass[0] * inv;
      for (auto& p : an->pass) p += g;
    });
  }
  return out;
}

Tensor mean_rows(Tape& tape, const Tensor& a) {
  require_matrix(a, "mean_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  const double inv = 1.0 / static_cast<double>(m);
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j] += a[i * n + j];
  for (auto& v : y) v *= inv;
  const bool track = tracked(a);
  Tensor out = result({1, n}, std::move(y), track);
  if (track) {
    TensorNode* an = a.node();
    TensorNode* yn = out.node();
    tape.record(out, {a}, [an, yn, m, n, inv] {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) an->pass[i * n + j] += yn->pass[j] * inv;
    });
  }
  return out;
}

std::size_t conv1d_output_length(std::size_t length, const Conv1dGeometry& g) {
  if (g.stride == 0 || g.kernel == 0) throw ConfigError("conv1d: kernel and stride must be positive");
  if (length + 2 * g.padding < g.kernel) {
    throw DimensionError("conv1d: input length " + std::to_string(length) + " with padding " +
                         std::to_string(g.padding) + " is shorter than kernel " +
                         std::to_string(g.kernel));
  }
  return (length + 2 * g.padding - g.kernel) / g.stride + 1;
}

Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias,
              const Conv1dGeometry& g) {
  require_matrix(x, "conv1d");
  if (weight.rank() != 3 || weight.dim(1) != x.dim(0) || weight.dim(2) != g.kernel) {
    throw DimensionError("conv1d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                         shape_str(x.shape()) + " and kernel " + std::to_string(g.kernel));
  }
  const std::size_t cin = x.dim(0), t_in = x.dim(1), cout = weight.dim(0), k = g.kernel;
  if (bias.defined() && bias.numel() != cout) {
    throw DimensionError("conv1d: bias " + shape_str(bias.shape()) + " for " + std::to_string(cout) +
                         " output channels");
  }
  const std::size_t t_out = conv1d_output_length(t_in, g);
  const std::size_t pad = g.padding, stride = g.stride;
  std::vector<double> y(cout * t_out, 0.0);
  const auto X = x.data();
  const auto W = weight.data();
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t c = 0; c < cin; ++c) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double w = W[(o * cin + c) * k + kk];
        if (w == 0.0) continue;
        for (std::size_t t = 0; t < t_out; ++t) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + kk) -
                                     static_cast<std::ptrdiff_t>(pad);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_in)) continue;
          y[o * t_out + t] += w * X[c * t_in + static_cast<std::size_t>(src)];
        }
      }
    }
    if (bias.defined())
      for (std::size_t t = 0; t < t_out; ++t) y[o * t_out + t] += bias[o];
  }
  const bool track = tracked(x) || tracked(weight) || tracked(bias);
  Tensor out = result({cout, t_out}, std::move(y), track);
  if (track) {
    TensorNode* xn = x.node();
    TensorNode* wn = weight.node();
    TensorNode* bn = bias.defined() ? bias.node() : nullptr;
    TensorNode* yn = out.node();
    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    tape.record(out, std::move(inputs), [=] {
      const bool tx = xn->tracks(), tw = wn->tracks();
      for (std::size_t o = 0; o < cout; ++o) {
        const double* G = yn->pass.data() + o * t_out;
        if (bn && bn->tracks()) {
          double s = 0.0;
          for (std::size_t t = 0; t < t_out; ++t) s += G[t];
          bn->pass[o] += s;
        }
        for (std::size_t c = 0; c < cin; ++c) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            const std::size_t widx = (o * cin + c) * k + kk;
            const double w = wn->value[widx];
            double dw = 0.0;
            for (std::size_t t = 0; t < t_out; ++t) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + kk) -
                                         static_cast<std::ptrdiff_t>(pad);
              if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_in)) continue;
              const std::size_t xi = c * t_in + static_cast<std::size_t>(src);
              dw += G[t] * xn->value[xi];
              if (tx) xn->pass[xi] += G[t] * w;
            }
            if (tw) wn->pass[widx] += dw;
          }
        }
      }
    });
  }
  return out;
}

Tensor lstm_direction(Tape& tape, const Tensor& x, const Tensor& w_in, const Tensor& w_rec,
                      const Tensor& bias, bool reverse) {
  require_matrix(x, "lstm");
  const std::size_t T = x.dim(0), D = x.dim(1);
  if (w_rec.rank() != 2 || w_rec.dim(1) != 4 * w_rec.dim(0)) {
    throw DimensionError("lstm: recurrent weight must be [H x 4H], got " + shape_str(w_rec.shape()));
  }
  const std::size_t H = w_rec.dim(0), G4 = 4 * H;
  if (w_in.rank() != 2 || w_in.dim(0) != D || w_in.dim(1) != G4 || bias.numel() != G4) {
    throw DimensionError("lstm: input weight " + shape_str(w_in.shape()) + " / bias " +
                         shape_str(bias.shape()) + " incompatible with input " +
                         shape_str(x.shape()) + " and hidden " + std::to_string(H));
  }
  const auto X = x.data();
  const auto Wi = w_in.data();
  const auto Wr = w_rec.data();
  const auto B = bias.data();

  // Per-step caches: activated gates [T x 4H], cell state and tanh(cell) [T x H].
  std::vector<double> gates(T * G4), cell(T * H), cell_tanh(T * H), y(T * H, 0.0);
  std::vector<double> z(G4);
  for (std::size_t step = 0; step < T; ++step) {
    const std::size_t t = reverse ? T - 1 - step : step;
    const bool first = step == 0;
    const std::size_t tp = reverse ? t + 1 : t - 1;
    for (std::size_t q = 0; q < G4; ++q) z[q] = B[q];
    for (std::size_t d = 0; d < D; ++d) {
      const double xv = X[t * D + d];
      if (xv == 0.0) continue;
      const double* wr = Wi.data() + d * G4;
      for (std::size_t q = 0; q < G4; ++q) z[q] += xv * wr[q];
    }
    if (!first) {
      for (std::size_t h = 0; h < H; ++h) {
        const double hv = y[tp * H + h];
        if (hv == 0.0) continue;
        const double* wr = Wr.data() + h * G4;
        for (std::size_t q = 0; q < G4; ++q) z[q] += hv * wr[q];
      }
    }
    double* ga = gates.data() + t * G4;
    for (std::size_t h = 0; h < H; ++h) {
      const double ig = 1.0 / (1.0 + std::exp(-z[h]));
      const double fg = 1.0 / (1.0 + std::exp(-z[H + h]));
      const double cg = std::tanh(z[2 * H + h]);
      const double og = 1.0 / (1.0 + std::exp(-z[3 * H + h]));
      ga[h] = ig;
      ga[H + h] = fg;
      ga[2 * H + h] = cg;
      ga[3 * H + h] = og;
      const double c_prev = first ? 0.0 : cell[tp * H + h];
      const double c = fg * c_prev + ig * cg;
      cell[t * H + h] = c;
      cell_tanh[t * H + h] = std::tanh(c);
      y[t * H + h] = og * cell_tanh[t * H + h];
    }
  }

  const bool track = tracked(x) || tracked(w_in) || tracked(w_rec) || tracked(bias);
  Tensor out = result({T, H}, std::move(y), track);
  if (track) {
    TensorNode* xn = x.node();
    TensorNode* win = w_in.node();
    TensorNode* wrn = w_rec.node();
    TensorNode* bn = bias.node();
    TensorNode* yn = out.node();
    tape.record(out, {x, w_in, w_rec, bias},
                [=, gates = std::move(gates), cell = std::move(cell),
                 cell_tanh = std::move(cell_tanh)] {
                  std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0), dz(G4);
                  const auto& Y = yn->value;
                  const bool tx = xn->tracks(), twi = win->tracks(), twr = wrn->tracks(),
                             tb = bn->tracks();
                  for (std::size_t step = T; step-- > 0;) {
                    const std::size_t t = reverse ? T - 1 - step : step;
                    const bool first = step == 0;
                    const std::size_t tp = reverse ? t + 1 : t - 1;
                    const double* ga = gates.data() + t * G4;
                    for (std::size_t h = 0; h < H; ++h) {
                      const double ig = ga[h], fg = ga[H + h], cg = ga[2 * H + h], og = ga[3 * H + h];
                      const double tc = cell_tanh[t * H + h];
                      const double dh = yn->pass[t * H + h] + dh_next[h];
                      const double dc = dh * og * (1.0 - tc * tc) + dc_next[h];
                      const double c_prev = first ? 0.0 : cell[tp * H + h];
                      dz[h] = dc * cg * ig * (1.0 - ig);
                      dz[H + h] = dc * c_prev * fg * (1.0 - fg);
                      dz[2 * H + h] = dc * ig * (1.0 - cg * cg);
                      dz[3 * H + h] = dh * tc * og * (1.0 - og);
                      dc_next[h] = dc * fg;
                    }
                    if (tb)
                      for (std::size_t q = 0; q < G4; ++q) bn->pass[q] += dz[q];
                    for (std::size_t d = 0; d < D; ++d) {
                      const double xv = xn->value[t * D + d];
                      const double* wr = win->value.data() + d * G4;
                      double s = 0.0;
                      for (std::size_t q = 0; q < G4; ++q) {
                        if (twi) win->pass[d * G4 + q] += xv * dz[q];
                        s += wr[q] * dz[q];
                      }
                      if (tx) xn->pass[t * D + d] += s;
                    }
                    for (std::size_t h = 0; h < H; ++h) {
                      if (first) {
                        dh_next[h] = 0.0;
                        continue;
                      }
                      const double hv = Y[tp * H + h];
                      const double* wr = wrn->value.data() + h * G4;
                      double s = 0.0;
                      for (std::size_t q = 0; q < G4; ++q) {
                        if (twr) wrn->pass[h * G4 + q] += hv * dz[q];
                        s += wr[q] * dz[q];
                      }
                      dh_next[h] = s;
                    }
                  }
                });
  }
  return out;
}

Tensor bce_mean(Tape& tape, const Tensor& probs, std::span<const double> targets,
                double positive_weight) {
  if (probs.numel() != targets.size()) {
    throw DimensionError("bce: " + std::to_string(probs.numel()) + " probabilities vs " +
                         std::to_string(targets.size()) + " labels");
  }
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  const std::size_t n = targets.size();
  const double inv = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = targets[i];
    if (y != 0.0 && y != 1.0) throw ContractError("bce: labels must be 0 or 1");
    const double p = std::clamp(probs[i], lo, hi);
    loss -= positive_weight * y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  const bool track = tracked(probs);
  Tensor out = result(Shape{}, {loss * inv}, track);
  if (track) {
    TensorNode* pn = probs.node();
    TensorNode* yn = out.node();
    std::vector<double> ys(targets.begin(), targets.end());
    tape.record(out, {probs}, [pn, yn, ys = std::move(ys), inv, positive_weight] {
      const double g = yn->pass[0] * inv;
      for (std::size_t i = 0; i < ys.size(); ++i) {
        const double p = pn->value[i];
        if (p <= lo || p >= hi) continue;
        pn->pass[i] += g * (-positive_weight * ys[i] / p + (1.0 - ys[i]) / (1.0 - p));
      }
    });
  }
  return out;
}

Tensor cross_entropy_rows(Tape& tape, const Tensor& logits, std::span<const int> targets) {
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(m) + " rows vs " +
                         std::to_string(targets.size()) + " targets");
  }
  std::vector<double> probs(m * n);
  double loss = 0.0;
  const auto L = logits.data();
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= n) {
      throw ContractError("cross_entropy: target class out of range");
    }
    double mx = L[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, L[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(L[i * n + j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) probs[i * n + j] = std::exp(L[i * n + j] - log_z);
    loss += log_z - L[i * n + static_cast<std::size_t>(targets[i])];
  }
  const double inv = 1.0 / static_cast<double>(m);
  const bool track = tracked(logits);
  Tensor out = result(Shape{}, {loss * inv}, track);
  if (track) {
    TensorNode* ln = logits.node();
    TensorNode* yn = out.node();
    std::vector<int> ts(targets.begin(), targets.end());
    tape.record(out, {logits}, [ln, yn, probs = std::move(probs), ts = std::move(ts), m, n, inv] {
      const double g = yn->pass[0] * inv;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double onehot = static_cast<int>(j) == ts[i] ? 1.0 : 0.0;
          ln->pass[i * n + j] += g * (probs[i * n + j] - onehot);
        }
      }
    });
  }
  return out;
}

}  // namespace nepadd::ops
