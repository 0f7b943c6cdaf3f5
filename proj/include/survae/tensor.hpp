#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace survae {

// Every failure raised by the toolkit carries a structured one-line message.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

template <typename... Parts>
[[noreturn]] inline void fail(const Parts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  throw Error(os.str());
}

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense row-major tensor of doubles.  All numerics in the toolkit are f64.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != data.size())
      fail("tensor: shape ", shape_str(shape), " does not match data size ", data.size());
  }

  static std::size_t numel_of(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  static Tensor zeros(const Shape& s) { return Tensor(s, std::vector<double>(numel_of(s), 0.0)); }
  static Tensor full(const Shape& s, double v) { return Tensor(s, std::vector<double>(numel_of(s), v)); }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor vector(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
  }

  std::size_t numel() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }
  bool is_scalar() const { return numel() == 1; }

  std::size_t rows() const {
    if (ndim() != 2) fail("tensor: rows() on non-2D shape ", shape_str(shape));
    return shape[0];
  }
  std::size_t cols() const {
    if (ndim() != 2) fail("tensor: cols() on non-2D shape ", shape_str(shape));
    return shape[1];
  }

  double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double item() const {
    if (!is_scalar()) fail("tensor: item() on non-scalar shape ", shape_str(shape));
    return data[0];
  }
};

// 2-D matrix product, cache-friendly i-k-j ordering.
inline Tensor matmul_value(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2)
    fail("matmul: operands must be 2-D, got ", shape_str(a.shape), " x ", shape_str(b.shape));
  if (a.cols() != b.rows())
    fail("matmul: inner dimensions differ, ", shape_str(a.shape), " x ", shape_str(b.shape));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = &a.data[i * k];
    double* crow = &c.data[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = &b.data[p * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

inline Tensor transpose_value(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor t = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t.data[j * m + i] = a.data[i * n + j];
  return t;
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2*pi)
constexpr double kLog2 = 0.6931471805599453094172321214582;    // log(2)

// Standard normal log-density, CDF, quantile and log-CDF (double precision).
inline double norm_logpdf(double x) { return -0.5 * (kLog2Pi + x * x); }
inline double norm_pdf(double x) { return std::exp(norm_logpdf(x)); }
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440084436210485); }

// Alternating asymptotic series for the Mills ratio factor:
//   Phi(x) ~ phi(x)/|x| * sum_k (-1)^k (2k-1)!!/x^(2k),   x << 0.
// Terms are added while they keep shrinking, so for |x| >= 8 the sum is
// accurate to full double precision.
inline double norm_tail_series(double x) {
  const double inv_x2 = 1.0 / (x * x);
  double sum = 1.0, term = 1.0, prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k < 200; ++k) {
    term *= static_cast<double>(2 * k - 1) * inv_x2;
    if (term >= prev) break;  // the asymptotic series started diverging
    prev = term;
    sum += (k % 2 == 0) ? term : -term;
    if (term < 1e-17) break;
  }
  return sum;
}

// log Phi(x) with a stable tail expansion for x << 0.
inline double norm_logcdf(double x) {
  if (x > -8.0) {
    double c = norm_cdf(x);
    if (c > 0.0) return std::log(c);
  }
  return norm_logpdf(x) - std::log(-x) + std::log(norm_tail_series(x));
}

// d/dx log Phi(x) = phi(x)/Phi(x), stable for deep negative x.
inline double norm_logcdf_grad(double x) {
  if (x < -8.0) return -x / norm_tail_series(x);
  return norm_pdf(x) / norm_cdf(x);
}

// Inverse standard normal CDF: Acklam's rational approximation refined with
// one Halley step against erfc, accurate to ~1e-15 relative over (0,1).
inline double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) fail("norm_quantile: p must lie in (0,1), got ", p);
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01,  -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= phigh) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  // Halley refinement on f(x) = Phi(x) - p.
  const double e = norm_cdf(x) - p;
  const double u = e * std::sqrt(2 * 3.14159265358979323846) * std::exp(x * x / 2.0);
  x = x - u / (1 + x * u / 2.0);
  return x;
}

}  // namespace survae
