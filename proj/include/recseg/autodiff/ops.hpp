#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "recseg/autodiff/tape.hpp"

namespace recseg::ad {

namespace detail {

inline std::string dims(Eigen::Index r, Eigen::Index c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

template <class T>
void add_into(Tape<T>& t, Var v, const Matrix<T>& g) {
  if (t.needs_grad(v)) t.grad(v) += g;
}

}  // namespace detail

// y = x W + b, one row per batch element or per point. A point convolution is
// this op applied to an N x C point feature matrix.
template <class T>
Var linear(Tape<T>& t, Var x, Var w, Var b) {
  const auto& X = t.value(x);
  const auto& W = t.value(w);
  const auto& B = t.value(b);
  if (X.cols() != W.rows() || B.rows() != 1 || B.cols() != W.cols())
    throw InvalidArgument("linear: shape mismatch x" + detail::dims(X.rows(), X.cols()) + " W" +
                          detail::dims(W.rows(), W.cols()) + " b" + detail::dims(B.rows(), B.cols()));
  Matrix<T> y(X.rows(), W.cols());
  y.noalias() = X * W;
  y.rowwise() += B.row(0);
  return t.record(std::move(y), {x, w, b}, [x, w, b](Tape<T>& t, const Matrix<T>& g) {
    if (t.needs_grad(x)) t.grad(x).noalias() += g * t.value(w).transpose();
    if (t.needs_grad(w)) t.grad(w).noalias() += t.value(x).transpose() * g;
    if (t.needs_grad(b)) t.grad(b) += g.colwise().sum();
  }, "linear");
}

template <class T>
Var point_shared_linear(Tape<T>& t, Var x, Var w, Var b) {
  return linear(t, x, w, b);
}

template <class T>
Var add(Tape<T>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw InvalidArgument("add: shape mismatch " + detail::dims(A.rows(), A.cols()) + " vs " +
                          detail::dims(B.rows(), B.cols()));
  Matrix<T> y = A + B;
  return t.record(std::move(y), {a, b}, [a, b](Tape<T>& t, const Matrix<T>& g) {
    detail::add_into(t, a, g);
    detail::add_into(t, b, g);
  }, "add");
}

// x[N x C] + r[1 x C] broadcast over rows.
template <class T>
Var add_row(Tape<T>& t, Var x, Var r) {
  const auto& X = t.value(x);
  const auto& R = t.value(r);
  if (R.rows() != 1 || R.cols() != X.cols())
    throw InvalidArgument("add_row: shape mismatch " + detail::dims(X.rows(), X.cols()) + " vs " +
                          detail::dims(R.rows(), R.cols()));
  Matrix<T> y = X;
  y.rowwise() += R.row(0);
  return t.record(std::move(y), {x, r}, [x, r](Tape<T>& t, const Matrix<T>& g) {
    detail::add_into(t, x, g);
    if (t.needs_grad(r)) t.grad(r) += g.colwise().sum();
  }, "add_row");
}

template <class T>
Var scale(Tape<T>& t, Var x, T s) {
  Matrix<T> y = t.value(x) * s;
  return t.record(std::move(y), {x}, [x, s](Tape<T>& t, const Matrix<T>& g) {
    if (t.needs_grad(x)) t.grad(x) += g * s;
  }, "scale");
}

template <class T>
Var sum(Tape<T>& t, Var x) {
  Matrix<T> y(1, 1);
  y(0, 0) = t.value(x).sum();
  return t.record(std::move(y), {x}, [x](Tape<T>& t, const Matrix<T>& g) {
    if (t.needs_grad(x)) t.grad(x).array() += g(0, 0);
  }, "sum");
}

template <class T>
Var tanh_op(Tape<T>& t, Var x) {
  Matrix<T> y = t.value(x).array().tanh().matrix();
  const Var out{t.size()};
  return t.record(std::move(y), {x}, [x, out](Tape<T>& t, const Matrix<T>& g) {
    if (!t.needs_grad(x)) return;
    const auto& Y = t.value(out);
    t.grad(x).array() += g.array() * (T(1) - Y.array().square());
  }, "tanh");
}

template <class T>
Var relu_op(Tape<T>& t, Var x) {
  Matrix<T> y = t.value(x).cwiseMax(T(0));
  return t.record(std::move(y), {x}, [x](Tape<T>& t, const Matrix<T>& g) {
    if (!t.needs_grad(x)) return;
    t.grad(x).array() += (t.value(x).array() > T(0)).select(g.array(), T(0));
  }, "relu");
}

// Concatenation along the channel (column) axis.
template <class T>
Var concat(Tape<T>& t, Var a, Var b) {
  const auto& A = t.value(a);
  const auto& B = t.value(b);
  if (A.rows() != B.rows())
    throw InvalidArgument("concat: row mismatch " + detail::dims(A.rows(), A.cols()) + " vs " +
                          detail::dims(B.rows(), B.cols()));
  Matrix<T> y(A.rows(), A.cols() + B.cols());
  y << A, B;
  const Eigen::Index ca = A.cols();
  const Eigen::Index cb = B.cols();
  return t.record(std::move(y), {a, b}, [a, b, ca, cb](Tape<T>& t, const Matrix<T>& g) {
    if (t.needs_grad(a)) t.grad(a) += g.leftCols(ca);
    if (t.needs_grad(b)) t.grad(b) += g.rightCols(cb);
  }, "concat");
}

template <class T>
Var slice_cols(Tape<T>& t, Var x, Eigen::Index begin, Eigen::Index count) {
  const auto& X = t.value(x);
  if (begin < 0 || count < 0 || begin + count > X.cols()) throw InvalidArgument("slice_cols: out of range");
  Matrix<T> y = X.middleCols(begin, count);
  return t.record(std::move(y), {x}, [x, begin, count](Tape<T>& t, const Matrix<T>& g) {
    if (t.needs_grad(x)) t.grad(x).middleCols(begin, count) += g;
  }, "slice_cols");
}

template <class T>
Var slice_rows(Tape<T>& t, Var x, Eigen::Index begin, Eigen::Index count) {
  const auto& X = t.value(x);
  if (begin < 0 || count < 0 || begin + count > X.rows()) throw InvalidArgument("slice_rows: out of range");
  Matrix<T> y = X.middleRows(begin, count);
  return t.record(std::move(y), {x}, [x, begin, count](Tape<T>& t, const Matrix<T>& g) {
    if (t.needs_grad(x)) t.grad(x).middleRows(begin, count) += g;
  }, "slice_rows");
}

template <class T>
struct PoolResult {
  Var pooled;
  std::vector<Eigen::Index> argmax;
};

// Per-channel max over rows; ties go to the smallest row index.
template <class T>
PoolResult<T> max_pool_points(Tape<T>& t, Var x) {
  const auto& X = t.value(x);
  if (X.rows() == 0) throw InvalidArgument("max_pool_points: no points");
  const Eigen::Index n = X.rows();
  const Eigen::Index c = X.cols();
  Matrix<T> y = X.row(0);
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(c), 0);
  for (Eigen::Index i = 1; i < n; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) {
      if (X(i, j) > y(0, j)) {
        y(0, j) = X(i, j);
        arg[static_cast<std::size_t>(j)] = i;
      }
    }
  }
  Var out = t.record(std::move(y), {x}, [x, arg](Tape<T>& t, const Matrix<T>& g) {
    if (!t.needs_grad(x)) return;
    auto& gx = t.grad(x);
    for (std::size_t j = 0; j < arg.size(); ++j)
      gx(arg[j], static_cast<Eigen::Index>(j)) += g(0, static_cast<Eigen::Index>(j));
  }, "max_pool_points");
  return {out, std::move(arg)};
}

// Standardizes every channel over the point axis, then applies a learned
// per-channel scale and shift. With fewer than two rows only scale and shift
// are applied.
template <class T>
Var point_norm(Tape<T>& t, Var x, Var gamma, Var beta, T eps = T(1e-5)) {
  const auto& X = t.value(x);
  const auto& G = t.value(gamma);
  const auto& B = t.value(beta);
  if (G.rows() != 1 || B.rows() != 1 || G.cols() != X.cols() || B.cols() != X.cols())
    throw InvalidArgument("point_norm: parameter width mismatch");
  const Eigen::Index n = X.rows();
  if (n < 2) {
    Matrix<T> y = X.array().rowwise() * G.row(0).array();
    y.rowwise() += B.row(0);
    return t.record(std::move(y), {x, gamma, beta}, [x, gamma, beta](Tape<T>& t, const Matrix<T>& g) {
      const auto& X = t.value(x);
      if (t.needs_grad(x)) t.grad(x).array() += g.array().rowwise() * t.value(gamma).row(0).array();
      if (t.needs_grad(gamma)) t.grad(gamma) += (g.array() * X.array()).colwise().sum().matrix();
      if (t.needs_grad(beta)) t.grad(beta) += g.colwise().sum();
    }, "point_norm");
  }
  const Matrix<T> mean = X.colwise().mean();
  Matrix<T> centered = X.rowwise() - mean.row(0);
  const Matrix<T> var = centered.array().square().colwise().mean().matrix();
  const Matrix<T> inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix<T> xhat = centered.array().rowwise() * inv_std.row(0).array();
  Matrix<T> y = xhat.array().rowwise() * G.row(0).array();
  y.rowwise() += B.row(0);
  return t.record(std::move(y), {x, gamma, beta},
                  [x, gamma, beta, xhat = std::move(xhat), inv_std](Tape<T>& t, const Matrix<T>& g) {
    if (t.needs_grad(gamma)) t.grad(gamma) += (g.array() * xhat.array()).colwise().sum().matrix();
    if (t.needs_grad(beta)) t.grad(beta) += g.colwise().sum();
    if (!t.needs_grad(x)) return;
    const Matrix<T> gx_hat = g.array().rowwise() * t.value(gamma).row(0).array();
    const Matrix<T> mean_g = gx_hat.colwise().mean();
    const Matrix<T> mean_gx = (gx_hat.array() * xhat.array()).colwise().mean().matrix();
    Matrix<T> d = gx_hat.rowwise() - mean_g.row(0);
    d.array() -= xhat.array().rowwise() * mean_gx.row(0).array();
    t.grad(x).array() += d.array().rowwise() * inv_std.row(0).array();
  }, "point_norm");
}

// Inverted dropout: zeroes each entry with probability p and rescales the rest
// by 1/(1-p). Identity outside training.
template <class T>
Var dropout(Tape<T>& t, Var x, double p, bool train, std::mt19937_64& rng) {
  if (!train || p <= 0.0) return x;
  if (p >= 1.0) throw InvalidArgument("dropout probability must be < 1");
  const auto& X = t.value(x);
  Matrix<T> mask(X.rows(), X.cols());
  std::bernoulli_distribution keep(1.0 - p);
  const T s = static_cast<T>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? s : T(0);
  Matrix<T> y = X.cwiseProduct(mask);
  return t.record(std::move(y), {x}, [x, mask = std::move(mask)](Tape<T>& t, const Matrix<T>& g) {
    if (t.needs_grad(x)) t.grad(x) += g.cwiseProduct(mask);
  }, "dropout");
}

template <class T>
Matrix<T> softmax_rows(const Matrix<T>& logits) {
  Matrix<T> p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp().matrix();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

// Mean over rows of -log softmax(logits)[target].
template <class T>
Var softmax_cross_entropy(Tape<T>& t, Var logits, std::span<const int> targets) {
  const auto& L = t.value(logits);
  const Eigen::Index b = L.rows();
  const Eigen::Index k = L.cols();
  if (static_cast<Eigen::Index>(targets.size()) != b)
    throw InvalidArgument("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                          std::to_string(b) + " rows");
  if (b == 0) throw InvalidArgument("softmax_cross_entropy: empty batch");
  for (int c : targets)
    if (c < 0 || c >= k) throw InvalidArgument("softmax_cross_entropy: target " + std::to_string(c) + " out of range");
  const Matrix<T> shifted = L.colwise() - L.rowwise().maxCoeff();
  const auto lse = shifted.array().exp().rowwise().sum().log().eval();
  T loss = 0;
  for (Eigen::Index i = 0; i < b; ++i) loss += lse(i) - shifted(i, targets[static_cast<std::size_t>(i)]);
  Matrix<T> y(1, 1);
  y(0, 0) = loss / static_cast<T>(b);
  std::vector<int> tgt(targets.begin(), targets.end());
  return t.record(std::move(y), {logits}, [logits, tgt = std::move(tgt)](Tape<T>& t, const Matrix<T>& g) {
    if (!t.needs_grad(logits)) return;
    Matrix<T> p = softmax_rows<T>(t.value(logits));
    for (std::size_t i = 0; i < tgt.size(); ++i) p(static_cast<Eigen::Index>(i), tgt[i]) -= T(1);
    t.grad(logits) += p * (g(0, 0) / static_cast<T>(tgt.size()));
  }, "softmax_cross_entropy");
}

// Mean squared difference against a constant target.
template <class T>
Var mse(Tape<T>& t, Var pred, const Matrix<T>& target) {
  const auto& P = t.value(pred);
  if (P.rows() != target.rows() || P.cols() != target.cols())
    throw InvalidArgument("mse: shape mismatch " + detail::dims(P.rows(), P.cols()) + " vs " +
                          detail::dims(target.rows(), target.cols()));
  Matrix<T> diff = P - target;
  const T n = static_cast<T>(diff.size());
  Matrix<T> y(1, 1);
  y(0, 0) = diff.squaredNorm() / n;
  return t.record(std::move(y), {pred}, [pred, diff = std::move(diff), n](Tape<T>& t, const Matrix<T>& g) {
    if (t.needs_grad(pred)) t.grad(pred) += diff * (T(2) * g(0, 0) / n);
  }, "mse");
}

// Mean squared difference over entries whose mask is nonzero.
template <class T>
Var masked_mse(Tape<T>& t, Var pred, const Matrix<T>& target, const Matrix<T>& mask) {
  const auto& P = t.value(pred);
  if (P.rows() != target.rows() || P.cols() != target.cols() || mask.rows() != P.rows() || mask.cols() != P.cols())
    throw InvalidArgument("masked_mse: shape mismatch");
  const T n = mask.sum();
  if (!(n > T(0))) throw InvalidArgument("masked_mse: empty mask");
  Matrix<T> diff = (P - target).cwiseProduct(mask);
  Matrix<T> y(1, 1);
  y(0, 0) = diff.squaredNorm() / n;
  return t.record(std::move(y), {pred}, [pred, diff = std::move(diff), n](Tape<T>& t, const Matrix<T>& g) {
    if (t.needs_grad(pred)) t.grad(pred) += diff * (T(2) * g(0, 0) / n);
  }, "masked_mse");
}

}  // namespace recseg::ad
