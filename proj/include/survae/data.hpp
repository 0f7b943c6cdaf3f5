#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "survae/rng.hpp"
#include "survae/tensor.hpp"

namespace survae::data {

// Canonical desk-scale definitions of the synthetic datasets.  The generator
// is a pure function of (name, n, seed).
//
//   checkerboard  uniform over the "on" cells of a 4x4 alternating lattice
//                 on [-4,4]^2 (cells with even i+j parity); anti-symmetric
//                 under flipping one axis, symmetric under point reflection.
//   gaussians     mixture of 8 equal-weight Gaussians (sigma = 0.2) centered
//                 on a circle of radius 2 at angles 2*pi*k/8.
//   circles       two concentric rings (radii 1 and 2.5, equal weight) with
//                 radial noise sigma = 0.08 and uniform angle.
//   corners       mixture of 4 elongated Gaussians centered at (+-2, +-2),
//                 major axis along the local diagonal (sigma 0.8), minor
//                 axis 0.15; point-symmetric.
//   exchangeable-gaussian-sets
//                 4 i.i.d. N(0,1) values per example (D = 4).

inline const std::vector<std::string>& dataset_names() {
  static const std::vector<std::string> names{"checkerboard", "gaussians", "circles", "corners",
                                              "exchangeable-gaussian-sets"};
  return names;
}

inline std::size_t dataset_dim(const std::string& name) {
  if (name == "exchangeable-gaussian-sets") return 4;
  for (const auto& n : dataset_names())
    if (name == n) return 2;
  fail("unknown dataset '", name, "'");
}

namespace detail {

constexpr double kCornerMajor = 0.8;
constexpr double kCornerMinor = 0.15;
constexpr double kGaussiansSigma = 0.2;
constexpr double kGaussiansRadius = 2.0;
constexpr double kCirclesSigma = 0.08;
inline const double kCircleRadii[2] = {1.0, 2.5};

struct CornerComponent {
  double cx, cy;    // center
  double ax, ay;    // unit major-axis direction
};

inline const std::array<CornerComponent, 4>& corner_components() {
  static const std::array<CornerComponent, 4> comps = [] {
    const double s = 1.0 / std::sqrt(2.0);
    std::array<CornerComponent, 4> c{};
    c[0] = {2.0, 2.0, s, s};
    c[1] = {-2.0, 2.0, s, -s};
    c[2] = {-2.0, -2.0, s, s};
    c[3] = {2.0, -2.0, s, -s};
    return c;
  }();
  return comps;
}

inline std::pair<double, double> gaussians_center(std::size_t k) {
  const double a = 2.0 * std::acos(-1.0) * static_cast<double>(k) / 8.0;
  return {kGaussiansRadius * std::cos(a), kGaussiansRadius * std::sin(a)};
}

}  // namespace detail

inline Tensor generate(const std::string& name, std::size_t n, std::uint64_t seed) {
  if (n == 0) fail("dataset generation needs n >= 1");
  Rng rng(seed);
  const double two_pi = 2.0 * std::acos(-1.0);

  if (name == "checkerboard") {
    // The 8 "on" cells of the 4x4 lattice, each 2 units wide.
    std::vector<std::pair<int, int>> on;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if ((i + j) % 2 == 0) on.emplace_back(i, j);
    Tensor t = Tensor::zeros({n, 2});
    for (std::size_t r = 0; r < n; ++r) {
      const auto [i, j] = on[rng.uniform_int(on.size())];
      t.data[r * 2 + 0] = -4.0 + 2.0 * (static_cast<double>(i) + rng.uniform());
      t.data[r * 2 + 1] = -4.0 + 2.0 * (static_cast<double>(j) + rng.uniform());
    }
    return t;
  }
  if (name == "gaussians") {
    Tensor t = Tensor::zeros({n, 2});
    for (std::size_t r = 0; r < n; ++r) {
      const auto [cx, cy] = detail::gaussians_center(rng.uniform_int(8));
      t.data[r * 2 + 0] = cx + detail::kGaussiansSigma * rng.normal();
      t.data[r * 2 + 1] = cy + detail::kGaussiansSigma * rng.normal();
    }
    return t;
  }
  if (name == "circles") {
    Tensor t = Tensor::zeros({n, 2});
    for (std::size_t r = 0; r < n; ++r) {
      const double radius = detail::kCircleRadii[rng.uniform_int(2)];
      const double angle = two_pi * rng.uniform();
      const double rr = radius + detail::kCirclesSigma * rng.normal();
      t.data[r * 2 + 0] = rr * std::cos(angle);
      t.data[r * 2 + 1] = rr * std::sin(angle);
    }
    return t;
  }
  if (name == "corners") {
    Tensor t = Tensor::zeros({n, 2});
    for (std::size_t r = 0; r < n; ++r) {
      const auto& c = detail::corner_components()[rng.uniform_int(4)];
      const double u = detail::kCornerMajor * rng.normal();
      const double v = detail::kCornerMinor * rng.normal();
      // minor axis = major axis rotated 90 degrees.
      t.data[r * 2 + 0] = c.cx + u * c.ax - v * c.ay;
      t.data[r * 2 + 1] = c.cy + u * c.ay + v * c.ax;
    }
    return t;
  }
  if (name == "exchangeable-gaussian-sets") return rng.normal_tensor({n, 4});
  fail("unknown dataset '", name, "'");
}

// Train/test splits use independent derived seeds.
inline Tensor train_split(const std::string& name, std::size_t n, std::uint64_t seed) {
  return generate(name, n, mix_seed(seed, 0x7261));
}
inline Tensor test_split(const std::string& name, std::size_t n, std::uint64_t seed) {
  return generate(name, n, mix_seed(seed, 0x7465));
}

// ---------------------------------------------------------------------------
// Density oracles for the gaussians mixture (used as the training target).
// ---------------------------------------------------------------------------

inline double gaussians_log_pdf(double x, double y) {
  const double s2 = detail::kGaussiansSigma * detail::kGaussiansSigma;
  double m = -std::numeric_limits<double>::infinity();
  std::array<double, 8> terms{};
  for (std::size_t k = 0; k < 8; ++k) {
    const auto [cx, cy] = detail::gaussians_center(k);
    const double dx = x - cx, dy = y - cy;
    terms[k] = -std::log(8.0) - kLog2Pi - std::log(s2) - 0.5 * (dx * dx + dy * dy) / s2;
    m = std::max(m, terms[k]);
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

struct EntropyEstimate {
  double nats;
  double se;
};

// Monte-Carlo differential entropy of the gaussians mixture:
// H = -E[log p(X)], with X drawn from the mixture itself.
inline EntropyEstimate gaussians_entropy_mc(std::size_t n, std::uint64_t seed) {
  Tensor draws = generate("gaussians", n, seed);
  double sum = 0.0, sumsq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = -gaussians_log_pdf(draws.data[i * 2], draws.data[i * 2 + 1]);
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / static_cast<double>(n);
  const double var = (sumsq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

// ---------------------------------------------------------------------------
// CSV export: headers, 17 significant digits.
// ---------------------------------------------------------------------------

inline void write_csv(const std::string& path, const Tensor& t,
                      const std::vector<std::string>& columns) {
  if (t.shape.size() != 2 || columns.size() != t.cols())
    fail("write_csv: need a 2-D tensor and one column name per column");
  std::ofstream out(path);
  if (!out) fail("cannot open '", path, "' for writing");
  for (std::size_t c = 0; c < columns.size(); ++c)
    out << (c ? "," : "") << columns[c];
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", t.data[i * t.cols() + c]);
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
  if (!out) fail("failed writing '", path, "'");
}

inline std::vector<std::string> default_columns(std::size_t d) {
  if (d == 2) return {"x", "y"};
  std::vector<std::string> cols;
  for (std::size_t i = 0; i < d; ++i) cols.push_back("x" + std::to_string(i));
  return cols;
}

}  // namespace survae::data
