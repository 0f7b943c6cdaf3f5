#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "survae/flow.hpp"
#include "survae/linalg.hpp"

// Independent brute-force references.  Each function re-derives the marginal
// density of a constructed flow from the generative model's raw factors
// (base densities, conditional probabilities, fill densities) by enumeration
// or quadrature — never by calling any layer's likelihood-contribution code.
namespace survae::oracle {

namespace detail {

inline double logsumexp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double base_log_pdf(const dist::Distribution& base, const Tensor& row) {
  Tensor r = row;
  r.shape = {1, row.numel()};
  return base.log_prob(ad::constant(std::move(r)), nullptr)->value.item();
}

// Log of a trapezoid-rule integral over a uniform 1-D grid, carried out in
// the log domain: values are log integrand samples at the grid points.
inline double log_trapezoid(const std::vector<double>& log_values, double spacing) {
  std::vector<double> terms = log_values;
  terms.front() -= kLog2;
  terms.back() -= kLog2;
  return logsumexp(terms) + std::log(spacing);
}

struct Grid {
  std::vector<double> points;
  double spacing;
};

inline Grid make_grid(double lo, double hi, std::size_t n) {
  if (n < 2 || !(hi > lo)) fail("quadrature grid needs hi > lo and >= 2 points");
  Grid g;
  g.spacing = (hi - lo) / static_cast<double>(n - 1);
  g.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.points[i] = lo + g.spacing * static_cast<double>(i);
  return g;
}

}  // namespace detail

struct QuadSpec {
  std::size_t points = 4001;
  double lo = -10.0;
  double hi = 10.0;
};

// Marginal log-density of a single-layer flow at one data row, by exact
// enumeration (discrete latent structure) or trapezoid quadrature
// (continuous latents of dimension <= 2).
inline double quadrature_log_marginal(const Flow& flow, const Tensor& x, const QuadSpec& q = {}) {
  if (flow.layers().size() != 1)
    fail("quadrature oracle: only single-layer flows are supported, got ",
         flow.layers().size());
  if (x.numel() != flow.data_dim())
    fail("quadrature oracle: expected a single row of width ", flow.data_dim());
  const auto& layer = flow.layers().front();
  const auto& base = flow.base();
  const std::string kind = layer->kind();
  const double neg_inf = -std::numeric_limits<double>::infinity();

  if (kind == "abs_inference") {
    // p(x) = sum over sign vectors s with s.x >= 0 of p_base(s.x) p(s | s.x).
    auto* abs = dynamic_cast<layers::AbsSurjection*>(layer.get());
    const std::size_t d = x.numel();
    std::vector<double> terms;
    for (std::size_t bits = 0; bits < (std::size_t{1} << d); ++bits) {
      Tensor z = x;
      bool ok = true;
      for (std::size_t j = 0; j < d; ++j) {
        const double s = (bits >> j) & 1 ? -1.0 : 1.0;
        z.data[j] *= s;
        if (z.data[j] < 0) ok = false;
      }
      if (!ok) continue;
      Tensor zr = z;
      zr.shape = {1, d};
      const Tensor p = abs->sign_prob_positive(zr);
      double lp = detail::base_log_pdf(base, z);
      for (std::size_t j = 0; j < d; ++j) {
        const double s = (bits >> j) & 1 ? -1.0 : 1.0;
        lp += std::log(s > 0 ? p.data[j] : 1.0 - p.data[j]);
      }
      terms.push_back(lp);
    }
    return terms.empty() ? neg_inf : detail::logsumexp(terms);
  }

  if (kind == "abs_generative") {
    // x = |z|: p(x) = sum over sign vectors of p_base(s.x), x >= 0.
    const std::size_t d = x.numel();
    for (double v : x.data)
      if (v < 0) return neg_inf;
    std::vector<double> terms;
    for (std::size_t bits = 0; bits < (std::size_t{1} << d); ++bits) {
      Tensor z = x;
      for (std::size_t j = 0; j < d; ++j)
        if ((bits >> j) & 1) z.data[j] = -z.data[j];
      terms.push_back(detail::base_log_pdf(base, z));
    }
    return detail::logsumexp(terms);
  }

  if (kind == "max_inference") {
    // Deterministic given x: z = max(x), k = argmax(x).
    auto* mx = dynamic_cast<layers::MaxSurjection*>(layer.get());
    const std::size_t d = x.numel();
    std::size_t k = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (x.data[j] > x.data[k]) k = j;
    const double m = x.data[k];
    Tensor z = Tensor::full({1}, m);
    double lp = detail::base_log_pdf(base, z) + mx->index_log_prob_value(k, m);
    for (std::size_t j = 0; j < d; ++j)
      if (j != k) lp += mx->fill_log_pdf(x.data[j], m);
    return lp;
  }

  if (kind == "max_generative") {
    // x = max(z) with i.i.d. standard normal z: density K phi(x) Phi(x)^(K-1).
    if (base.family() != "standard_normal")
      fail("quadrature oracle: max_generative supported over a standard normal base");
    const double m = x.item();
    const auto width = static_cast<double>(layer->out_dim());
    return std::log(width) + norm_logpdf(m) + (width - 1.0) * norm_logcdf(m);
  }

  if (kind == "sort_inference") {
    auto* sort = dynamic_cast<layers::SortSurjection*>(layer.get());
    const std::size_t d = x.numel();
    std::vector<std::size_t> argsort(d);
    std::iota(argsort.begin(), argsort.end(), std::size_t{0});
    std::stable_sort(argsort.begin(), argsort.end(),
                     [&](std::size_t a, std::size_t b) { return x.data[a] < x.data[b]; });
    Tensor z = Tensor::zeros({d});
    for (std::size_t j = 0; j < d; ++j) z.data[j] = x.data[argsort[j]];
    Tensor zr = z;
    zr.shape = {1, d};
    return detail::base_log_pdf(base, z) + sort->perm_log_prob_value(argsort, zr);
  }

  if (kind == "sort_generative") {
    // x = sort(z) with i.i.d. standard normal z: d! prod phi(x_i) on the
    // ascending region.
    if (base.family() != "standard_normal")
      fail("quadrature oracle: sort_generative supported over a standard normal base");
    const std::size_t d = x.numel();
    double lp = std::lgamma(static_cast<double>(d) + 1.0);
    for (std::size_t j = 0; j < d; ++j) {
      if (j && x.data[j] < x.data[j - 1]) return neg_inf;
      lp += norm_logpdf(x.data[j]);
    }
    return lp;
  }

  if (kind == "slice_inference") {
    auto* slice = dynamic_cast<layers::SliceSurjection*>(layer.get());
    const std::size_t keep = slice->kept_dim(), extra = slice->sliced_dim();
    Tensor z1 = Tensor::zeros({keep}), x2 = Tensor::zeros({1, extra});
    std::copy_n(x.data.begin(), keep, z1.data.begin());
    std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(keep), extra, x2.data.begin());
    Tensor ctx = z1;
    ctx.shape = {1, keep};
    auto ctx_node = slice->aux_conditional() ? ad::constant(ctx) : nullptr;
    const double aux_lp =
        slice->aux().log_prob(ad::constant(std::move(x2)), ctx_node)->value.item();
    return detail::base_log_pdf(base, z1) + aux_lp;
  }

  if (kind == "slice_generative") {
    // p(x) = integral of p_base(x, z2) over the appended block (dim <= 2).
    auto* slice = dynamic_cast<layers::SliceSurjection*>(layer.get());
    const std::size_t keep = slice->kept_dim(), extra = slice->sliced_dim();
    if (extra > 2) fail("quadrature oracle: appended block dimension too high (", extra, ")");
    const auto grid = detail::make_grid(q.lo, q.hi, q.points);
    Tensor full = Tensor::zeros({keep + extra});
    std::copy_n(x.data.begin(), keep, full.data.begin());
    if (extra == 1) {
      std::vector<double> lv(grid.points.size());
      for (std::size_t i = 0; i < grid.points.size(); ++i) {
        full.data[keep] = grid.points[i];
        lv[i] = detail::base_log_pdf(base, full);
      }
      return detail::log_trapezoid(lv, grid.spacing);
    }
    std::vector<double> outer(grid.points.size());
    for (std::size_t a = 0; a < grid.points.size(); ++a) {
      full.data[keep] = grid.points[a];
      std::vector<double> inner(grid.points.size());
      for (std::size_t b = 0; b < grid.points.size(); ++b) {
        full.data[keep + 1] = grid.points[b];
        inner[b] = detail::base_log_pdf(base, full);
      }
      outer[a] = detail::log_trapezoid(inner, grid.spacing);
    }
    return detail::log_trapezoid(outer, grid.spacing);
  }

  if (kind == "rounding_generative") {
    // Discrete mass: P(x) = integral over the unit bin of p_base(x + u).
    const std::size_t d = x.numel();
    if (d > 2) fail("quadrature oracle: bin dimension too high (", d, ")");
    for (double v : x.data)
      if (v != std::floor(v)) fail("quadrature oracle: dequantization data must be integral");
    const auto grid = detail::make_grid(0.0, 1.0, q.points);
    Tensor z = x;
    if (d == 1) {
      std::vector<double> lv(grid.points.size());
      for (std::size_t i = 0; i < grid.points.size(); ++i) {
        z.data[0] = x.data[0] + grid.points[i];
        lv[i] = detail::base_log_pdf(base, z);
      }
      return detail::log_trapezoid(lv, grid.spacing);
    }
    std::vector<double> outer(grid.points.size());
    for (std::size_t a = 0; a < grid.points.size(); ++a) {
      z.data[0] = x.data[0] + grid.points[a];
      std::vector<double> inner(grid.points.size());
      for (std::size_t b = 0; b < grid.points.size(); ++b) {
        z.data[1] = x.data[1] + grid.points[b];
        inner[b] = detail::base_log_pdf(base, z);
      }
      outer[a] = detail::log_trapezoid(inner, grid.spacing);
    }
    return detail::log_trapezoid(outer, grid.spacing);
  }

  if (kind == "rounding_inference") {
    // p(x) = p_base(floor(x)) q(u | floor(x)) with u the in-bin offset.
    auto* rnd = dynamic_cast<layers::RoundingSurjection*>(layer.get());
    const std::size_t d = x.numel();
    Tensor z = x, u = Tensor::zeros({1, d});
    for (std::size_t j = 0; j < d; ++j) {
      z.data[j] = std::floor(x.data[j]);
      u.data[j] = x.data[j] - z.data[j];
    }
    Tensor zr = z;
    zr.shape = {1, d};
    return detail::base_log_pdf(base, z) + rnd->bin_log_pdf(u, zr);
  }

  if (kind == "relu_inference") {
    // Per-dimension: positive values carry the base density, clipped values
    // carry the base's atom at zero times the fill density.
    if (base.family() != "rectified_standard_normal")
      fail("quadrature oracle: relu_inference supported over a rectified normal base");
    auto* relu = dynamic_cast<layers::ReluSurjection*>(layer.get());
    double lp = 0.0;
    for (double v : x.data) {
      if (v > 0)
        lp += norm_logpdf(v);
      else
        lp += -kLog2 + relu->fill_log_pdf(v);
    }
    return lp;
  }

  if (kind == "relu_generative") {
    // x = max(z, 0) with standard normal z: density phi(x_j) for positive
    // entries, atom Phi(0) = 1/2 at zero.
    if (base.family() != "standard_normal")
      fail("quadrature oracle: relu_generative supported over a standard normal base");
    double lp = 0.0;
    for (double v : x.data) {
      if (v < 0) return neg_inf;
      lp += v == 0.0 ? -kLog2 : norm_logpdf(v);
    }
    return lp;
  }

  if (kind == "stochastic_permutation") {
    // p(x) = (1/d!) sum over permutations of p_base(x permuted).
    const std::size_t d = x.numel();
    if (d > 5) fail("quadrature oracle: permutation enumeration supported for width <= 5");
    std::vector<double> terms;
    const std::size_t nf = layers::perms::factorial(d);
    for (std::size_t r = 0; r < nf; ++r) {
      const auto p = layers::perms::unrank(r, d);
      Tensor z = Tensor::zeros({d});
      for (std::size_t j = 0; j < d; ++j) z.data[j] = x.data[p[j]];
      terms.push_back(detail::base_log_pdf(base, z) - std::lgamma(static_cast<double>(d) + 1.0));
    }
    return detail::logsumexp(terms);
  }

  if (kind == "ppca") {
    // p(x) = integral of N(x; z W^T, sigma^2 I) N(z; 0, I) dz, latent <= 2.
    auto* ppca = dynamic_cast<layers::PpcaLayer*>(layer.get());
    const Tensor& w = ppca->weight();
    const double sigma = ppca->noise_scale();
    const std::size_t dd = w.rows(), ll = w.cols();
    if (ll > 2) fail("quadrature oracle: latent dimension too high (", ll, ")");
    const auto grid = detail::make_grid(q.lo, q.hi, q.points);
    auto joint = [&](const std::vector<double>& zv) {
      double lp = 0.0;
      for (double z : zv) lp += norm_logpdf(z);
      for (std::size_t i = 0; i < dd; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < ll; ++j) mean += zv[j] * w.data[i * ll + j];
        const double r = (x.data[i] - mean) / sigma;
        lp += -0.5 * (kLog2Pi + r * r) - std::log(sigma);
      }
      return lp;
    };
    if (ll == 1) {
      std::vector<double> lv(grid.points.size());
      for (std::size_t i = 0; i < grid.points.size(); ++i) lv[i] = joint({grid.points[i]});
      return detail::log_trapezoid(lv, grid.spacing);
    }
    std::vector<double> outer(grid.points.size());
    for (std::size_t a = 0; a < grid.points.size(); ++a) {
      std::vector<double> inner(grid.points.size());
      for (std::size_t b = 0; b < grid.points.size(); ++b)
        inner[b] = joint({grid.points[a], grid.points[b]});
      outer[a] = detail::log_trapezoid(inner, grid.spacing);
    }
    return detail::log_trapezoid(outer, grid.spacing);
  }

  if (kind == "vae") {
    // p(x) = integral of p_dec(x|z) N(z; 0, I) dz, latent <= 2, over a grid.
    auto* vae = dynamic_cast<layers::VaeLayer*>(layer.get());
    const std::size_t ll = layer->out_dim();
    if (ll > 2) fail("quadrature oracle: latent dimension too high (", ll, ")");
    if (base.family() != "standard_normal")
      fail("quadrature oracle: vae supported over a standard normal base");
    const auto grid = detail::make_grid(q.lo, q.hi, q.points);
    Tensor xr = x;
    xr.shape = {1, x.numel()};
    auto dec_lp = [&](const std::vector<double>& zv) {
      Tensor ctx = Tensor::zeros({1, ll});
      double lp = 0.0;
      for (std::size_t j = 0; j < ll; ++j) {
        ctx.data[j] = zv[j];
        lp += norm_logpdf(zv[j]);
      }
      return lp +
             vae->decoder().log_prob(ad::constant(xr), ad::constant(std::move(ctx)))->value.item();
    };
    if (ll == 1) {
      std::vector<double> lv(grid.points.size());
      for (std::size_t i = 0; i < grid.points.size(); ++i) lv[i] = dec_lp({grid.points[i]});
      return detail::log_trapezoid(lv, grid.spacing);
    }
    std::vector<double> outer(grid.points.size());
    for (std::size_t a = 0; a < grid.points.size(); ++a) {
      std::vector<double> inner(grid.points.size());
      for (std::size_t b = 0; b < grid.points.size(); ++b)
        inner[b] = dec_lp({grid.points[a], grid.points[b]});
      outer[a] = detail::log_trapezoid(inner, grid.spacing);
    }
    return detail::log_trapezoid(outer, grid.spacing);
  }

  fail("quadrature oracle: no enumeration/quadrature rule for layer kind '", kind, "'");
}

// ---------------------------------------------------------------------------
// Monte-Carlo marginal with error bars: importance sampling with the flow's
// own stochastic inverse as proposal (the k-sample importance-weighted
// estimate, with a delta-method standard error on the log).
// ---------------------------------------------------------------------------
struct McEstimate {
  double value;
  double se;
};

inline McEstimate mc_log_marginal(const Flow& flow, const Tensor& x, std::size_t k,
                                  std::uint64_t seed) {
  if (k < 2) fail("mc oracle: needs k >= 2");
  Tensor row = x;
  row.shape = {1, x.numel()};
  std::vector<double> w(k);
  for (std::size_t j = 0; j < k; ++j) {
    Rng rng(mix_seed(seed, j));
    w[j] = flow.log_prob(row, rng).item();
  }
  double m = -std::numeric_limits<double>::infinity();
  for (double v : w) m = std::max(m, v);
  double sum = 0.0, sumsq = 0.0;
  for (double v : w) {
    const double a = std::exp(v - m);
    sum += a;
    sumsq += a * a;
  }
  const double mean = sum / static_cast<double>(k);
  const double var = (sumsq - static_cast<double>(k) * mean * mean) / static_cast<double>(k - 1);
  const double se_mean = std::sqrt(std::max(var, 0.0) / static_cast<double>(k));
  return {m + std::log(mean), se_mean / mean};
}

// ---------------------------------------------------------------------------
// Analytic Gaussian marginal of the linear-Gaussian model x = z W^T + sigma
// eps, z ~ N(0, I): x ~ N(0, W W^T + sigma^2 I).  Computed in data space,
// independent of the layer's posterior-space algebra.
// ---------------------------------------------------------------------------
inline double ppca_log_marginal(const Tensor& w, double sigma, const Tensor& x) {
  const std::size_t d = w.rows();
  if (x.numel() != d) fail("ppca oracle: data row width ", x.numel(), " != ", d);
  Tensor cov = matmul_value(w, transpose_value(w));
  for (std::size_t i = 0; i < d; ++i) cov.data[i * d + i] += sigma * sigma;
  const Tensor chol = linalg::cholesky_lower(cov, "ppca oracle");
  const auto sol = linalg::cholesky_solve(chol, x.data);
  double quad = 0.0;
  for (std::size_t i = 0; i < d; ++i) quad += x.data[i] * sol[i];
  return -0.5 * (static_cast<double>(d) * kLog2Pi + linalg::cholesky_logdet(chol) + quad);
}

// ---------------------------------------------------------------------------
// Noisy-bijection limit: for x = f(z) + sigma*eps with affine f(z) = a z + b,
// standard normal prior and the exact Gaussian posterior as encoder, the
// single-sample bound is tight and computable in closed form.  As sigma -> 0
// it converges to the change-of-variables log-density of the noiseless
// bijection; the rows record that gap per sigma.
// ---------------------------------------------------------------------------
struct DeltaLimitRow {
  double sigma;
  double elbo;
  double cov_value;
  double gap;
};

inline std::vector<DeltaLimitRow> delta_limit_sequence(double slope, double intercept, double x,
                                                       const std::vector<double>& sigmas) {
  if (slope == 0.0) fail("delta limit: slope must be nonzero");
  std::vector<DeltaLimitRow> rows;
  const double cov_value = norm_logpdf((x - intercept) / slope) - std::log(std::abs(slope));
  for (double sigma : sigmas) {
    if (!(sigma > 0)) fail("delta limit: sigma must be positive");
    const double s2 = 1.0 / (slope * slope / (sigma * sigma) + 1.0);  // posterior variance
    const double m = s2 * slope * (x - intercept) / (sigma * sigma);  // posterior mean
    const double resid = x - slope * m - intercept;
    const double e_logpxz =
        -0.5 * (kLog2Pi + 2.0 * std::log(sigma)) -
        (resid * resid + slope * slope * s2) / (2.0 * sigma * sigma);
    const double e_logpz = -0.5 * kLog2Pi - 0.5 * (m * m + s2);
    const double e_logq = -0.5 * (kLog2Pi + std::log(s2)) - 0.5;
    const double elbo = e_logpxz + e_logpz - e_logq;
    rows.push_back({sigma, elbo, cov_value, std::abs(elbo - cov_value)});
  }
  return rows;
}

}  // namespace survae::oracle
