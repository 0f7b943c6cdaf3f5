#pragma once

#include "survae/tensor.hpp"

// Small dense symmetric-positive-definite helpers (Cholesky based).  Sizes in
// this library are tiny (latent dims of a handful), so simple O(n^3) loops
// are all that is needed.
namespace survae::linalg {

inline Tensor cholesky_lower(const Tensor& a, const char* what = "cholesky") {
  if (a.shape.size() != 2 || a.rows() != a.cols())
    fail(what, ": expected a square matrix, got shape ", shape_str(a.shape));
  const std::size_t n = a.rows();
  Tensor l = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a.data[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= l.data[i * n + k] * l.data[j * n + k];
      if (i == j) {
        if (!(s > 0)) fail(what, ": matrix is not positive definite (pivot ", s, ")");
        l.data[i * n + i] = std::sqrt(s);
      } else {
        l.data[i * n + j] = s / l.data[j * n + j];
      }
    }
  }
  return l;
}

// Solves (L L^T) x = b for one right-hand side, b and x of length n.
inline std::vector<double> cholesky_solve(const Tensor& l, const std::vector<double>& b) {
  const std::size_t n = l.rows();
  if (b.size() != n) fail("cholesky_solve: rhs length ", b.size(), " != ", n);
  std::vector<double> y(n), x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l.data[i * n + k] * y[k];
    y[i] = s / l.data[i * n + i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l.data[k * n + ii] * x[k];
    x[ii] = s / l.data[ii * n + ii];
  }
  return x;
}

inline Tensor cholesky_inverse(const Tensor& l) {
  const std::size_t n = l.rows();
  Tensor inv = Tensor::zeros({n, n});
  std::vector<double> e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    const auto col = cholesky_solve(l, e);
    e[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i) inv.data[i * n + j] = col[i];
  }
  return inv;
}

inline double cholesky_logdet(const Tensor& l) {
  double s = 0.0;
  for (std::size_t i = 0; i < l.rows(); ++i) s += std::log(l.data[i * l.rows() + i]);
  return 2.0 * s;
}

}  // namespace survae::linalg
