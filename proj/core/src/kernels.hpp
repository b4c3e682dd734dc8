#pragma once

// Dense building blocks shared by the training graph and the incremental
// decoder. Activations are row-major [rows x features].

#include <cmath>
#include <limits>
#include <vector>

#include "lowmt/model.hpp"

namespace lowmt::nmt::kernels {

inline constexpr double kNormEps = 1e-5;

template <typename T>
void linear(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b, Matrix<T>& y) {
  y.resize(x.rows(), w.cols());
  y.noalias() = x * w;
  y.rowwise() += b.row(0);
}

/// dW += x^T dy, db += colsum(dy), dx = dy W^T (dx skipped when null).
template <typename T>
void linear_backward(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& dy, Matrix<T>& dw, Matrix<T>& db,
                     Matrix<T>* dx) {
  dw.noalias() += x.transpose() * dy;
  db.row(0) += dy.colwise().sum();
  if (dx) {
    dx->resize(dy.rows(), w.rows());
    dx->noalias() = dy * w.transpose();
  }
}

template <typename T>
struct NormCache {
  Matrix<T> xhat;
  std::vector<T> rstd;
};

template <typename T>
void layer_norm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias, Matrix<T>& y,
                NormCache<T>* cache) {
  const Eigen::Index n = x.rows(), d = x.cols();
  y.resize(n, d);
  if (cache) {
    cache->xhat.resize(n, d);
    cache->rstd.resize(static_cast<std::size_t>(n));
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto row = x.row(r);
    const T mean = row.mean();
    const T var = (row.array() - mean).square().mean();
    const T rstd = T(1) / std::sqrt(var + static_cast<T>(kNormEps));
    if (cache) {
      cache->xhat.row(r) = (row.array() - mean) * rstd;
      cache->rstd[static_cast<std::size_t>(r)] = rstd;
      y.row(r) = cache->xhat.row(r).cwiseProduct(gain.row(0)) + bias.row(0);
    } else {
      y.row(r) = ((row.array() - mean) * rstd).matrix().cwiseProduct(gain.row(0)) + bias.row(0);
    }
  }
}

template <typename T>
void layer_norm_backward(const NormCache<T>& c, const Matrix<T>& gain, const Matrix<T>& dy, Matrix<T>& dgain,
                         Matrix<T>& dbias, Matrix<T>& dx) {
  const Eigen::Index n = dy.rows(), d = dy.cols();
  dgain.row(0) += dy.cwiseProduct(c.xhat).colwise().sum();
  dbias.row(0) += dy.colwise().sum();
  dx.resize(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto dxhat = dy.row(r).cwiseProduct(gain.row(0));
    const T m1 = dxhat.mean();
    const T m2 = dxhat.cwiseProduct(c.xhat.row(r)).mean();
    dx.row(r) = (dxhat.array() - m1 - c.xhat.row(r).array() * m2) * c.rstd[static_cast<std::size_t>(r)];
  }
}

/// Softmax over the allowed prefix of a score row; masked entries get 0.
template <typename T, typename Row, typename Allowed>
void masked_softmax_row(Row&& s, Allowed allowed) {
  const Eigen::Index n = s.size();
  T mx = -std::numeric_limits<T>::infinity();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (allowed(j) && s(j) > mx) mx = s(j);
  }
  if (!std::isfinite(mx)) {
    s.setZero();
    return;
  }
  T sum = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (allowed(j)) {
      s(j) = std::exp(s(j) - mx);
      sum += s(j);
    } else {
      s(j) = 0;
    }
  }
  s /= sum;
}

}  // namespace lowmt::nmt::kernels
