#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "survae/ad.hpp"
#include "survae/nn.hpp"
#include "survae/rng.hpp"

namespace survae::dist {

struct SampleWithLogProb {
  ad::NodePtr value;     // [n,d]; reparameterized where the family permits
  ad::NodePtr log_prob;  // [n]
};

// Common interface: per-example log densities (natural log), explicit RNG
// handles for sampling, and reparameterized sample_with_log_prob where the
// family supports it (discrete draws are constants in the tape).
class Distribution {
 public:
  virtual ~Distribution() = default;
  virtual std::size_t event_dim() const = 0;
  virtual std::string family() const = 0;
  // value [n,d], context [n,c] or null -> [n]
  virtual ad::NodePtr log_prob(const ad::NodePtr& value, const ad::NodePtr& context) const = 0;
  virtual Tensor sample(Rng& rng, std::size_t n, const Tensor* context) const = 0;
  virtual SampleWithLogProb sample_with_log_prob(Rng& rng, std::size_t n,
                                                 const ad::NodePtr& context) const = 0;
  virtual void collect_parameters(ad::ParamMap&, const std::string&) const {}
};

using DistPtr = std::shared_ptr<Distribution>;

namespace detail {

inline void check_matrix(const char* family, const ad::NodePtr& v, std::size_t d) {
  if (v->value.ndim() != 2 || v->value.cols() != d)
    fail(family, ": value shape ", shape_str(v->value.shape), " incompatible with event dim ", d);
}

// -inf on rows violating a predicate, 0 elsewhere (added to a log density).
template <typename Pred>
Tensor support_mask_rows(const Tensor& v, Pred in_support) {
  const std::size_t n = v.rows(), d = v.cols();
  Tensor mask = Tensor::zeros({n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (!in_support(v.data[i * d + j], j)) {
        mask.data[i] = -std::numeric_limits<double>::infinity();
        break;
      }
  return mask;
}

// Standard-normal log density summed across columns: [n,d] -> [n].
inline ad::NodePtr std_normal_rows(const ad::NodePtr& v) {
  const double c = -0.5 * kLog2Pi * static_cast<double>(v->value.cols());
  return ad::cadd(ad::cscale(ad::rowsum(ad::square(v)), -0.5), c);
}

}  // namespace detail

// ---------------------------------------------------------------------------

class StandardNormal final : public Distribution {
 public:
  explicit StandardNormal(std::size_t d) : d_(d) {}
  std::size_t event_dim() const override { return d_; }
  std::string family() const override { return "standard_normal"; }

  ad::NodePtr log_prob(const ad::NodePtr& v, const ad::NodePtr&) const override {
    detail::check_matrix("standard_normal", v, d_);
    return detail::std_normal_rows(v);
  }
  Tensor sample(Rng& rng, std::size_t n, const Tensor*) const override {
    return rng.normal_tensor({n, d_});
  }
  SampleWithLogProb sample_with_log_prob(Rng& rng, std::size_t n,
                                         const ad::NodePtr&) const override {
    auto v = ad::constant(sample(rng, n, nullptr));
    return {v, log_prob(v, nullptr)};
  }

 private:
  std::size_t d_;
};

class DiagonalNormal final : public Distribution {
 public:
  DiagonalNormal(Tensor mu, Tensor log_sigma) : mu_(std::move(mu)), log_sigma_(std::move(log_sigma)) {
    if (mu_.numel() != log_sigma_.numel()) fail("diagonal_normal: mu/log_sigma size mismatch");
  }
  std::size_t event_dim() const override { return mu_.numel(); }
  std::string family() const override { return "diagonal_normal"; }

  ad::NodePtr log_prob(const ad::NodePtr& v, const ad::NodePtr&) const override {
    const std::size_t d = event_dim();
    detail::check_matrix("diagonal_normal", v, d);
    Tensor inv_sigma = Tensor::zeros({d}), shift = Tensor::zeros({d});
    double log_sigma_sum = 0;
    for (std::size_t j = 0; j < d; ++j) {
      inv_sigma.data[j] = std::exp(-log_sigma_.data[j]);
      shift.data[j] = -mu_.data[j] * inv_sigma.data[j];
      log_sigma_sum += log_sigma_.data[j];
    }
    auto z = ad::affine(v, ad::constant(inv_sigma), ad::constant(shift));
    return ad::cadd(detail::std_normal_rows(z), -log_sigma_sum);
  }
  Tensor sample(Rng& rng, std::size_t n, const Tensor*) const override {
    const std::size_t d = event_dim();
    Tensor out = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        out.data[i * d + j] = mu_.data[j] + std::exp(log_sigma_.data[j]) * rng.normal();
    return out;
  }
  SampleWithLogProb sample_with_log_prob(Rng& rng, std::size_t n,
                                         const ad::NodePtr&) const override {
    auto v = ad::constant(sample(rng, n, nullptr));
    return {v, log_prob(v, nullptr)};
  }

  const Tensor& mu() const { return mu_; }
  const Tensor& log_sigma() const { return log_sigma_; }

 private:
  Tensor mu_, log_sigma_;
};

class Uniform final : public Distribution {
 public:
  Uniform(Tensor lo, Tensor hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
    if (lo_.numel() != hi_.numel()) fail("uniform: lo/hi size mismatch");
    for (std::size_t j = 0; j < lo_.numel(); ++j)
      if (!(lo_.data[j] < hi_.data[j])) fail("uniform: requires lo < hi per dimension");
  }
  std::size_t event_dim() const override { return lo_.numel(); }
  std::string family() const override { return "uniform"; }

  ad::NodePtr log_prob(const ad::NodePtr& v, const ad::NodePtr&) const override {
    const std::size_t d = event_dim();
    detail::check_matrix("uniform", v, d);
    double lp = 0;
    for (std::size_t j = 0; j < d; ++j) lp -= std::log(hi_.data[j] - lo_.data[j]);
    Tensor mask = detail::support_mask_rows(
        v->value, [&](double x, std::size_t j) { return x >= lo_.data[j] && x <= hi_.data[j]; });
    for (auto& m : mask.data) m += lp;
    return ad::constant(std::move(mask));
  }
  Tensor sample(Rng& rng, std::size_t n, const Tensor*) const override {
    const std::size_t d = event_dim();
    Tensor out = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        out.data[i * d + j] = lo_.data[j] + (hi_.data[j] - lo_.data[j]) * rng.uniform();
    return out;
  }
  SampleWithLogProb sample_with_log_prob(Rng& rng, std::size_t n,
                                         const ad::NodePtr&) const override {
    auto v = ad::constant(sample(rng, n, nullptr));
    return {v, log_prob(v, nullptr)};
  }

 private:
  Tensor lo_, hi_;
};

// |N(0, scale^2)| per dimension: support [0, inf), density 2 N(x; 0, scale^2).
class HalfNormal final : public Distribution {
 public:
  HalfNormal(double scale, std::size_t d) : scale_(scale), d_(d) {
    if (!(scale > 0)) fail("half_normal: scale must be positive");
  }
  std::size_t event_dim() const override { return d_; }
  std::string family() const override { return "half_normal"; }

  ad::NodePtr log_prob(const ad::NodePtr& v, const ad::NodePtr&) const override {
    detail::check_matrix("half_normal", v, d_);
    auto scaled = ad::cscale(v, 1.0 / scale_);
    const double c = static_cast<double>(d_) * (kLog2 - std::log(scale_));
    auto lp = ad::cadd(detail::std_normal_rows(scaled), c);
    Tensor mask =
        detail::support_mask_rows(v->value, [](double x, std::size_t) { return x >= 0.0; });
    return ad::add(lp, ad::constant(std::move(mask)));
  }
  Tensor sample(Rng& rng, std::size_t n, const Tensor*) const override {
    Tensor out = Tensor::zeros({n, d_});
    for (auto& x : out.data) x = std::abs(rng.normal()) * scale_;
    return out;
  }
  SampleWithLogProb sample_with_log_prob(Rng& rng, std::size_t n,
                                         const ad::NodePtr&) const override {
    auto v = ad::constant(sample(rng, n, nullptr));
    return {v, log_prob(v, nullptr)};
  }

 private:
  double scale_;
  std::size_t d_;
};

// -|N(0, scale^2)| per dimension: support (-inf, 0].
class NegativeHalfNormal final : public Distribution {
 public:
  NegativeHalfNormal(double scale, std::size_t d) : scale_(scale), d_(d) {
    if (!(scale > 0)) fail("negative_half_normal: scale must be positive");
  }
  std::size_t event_dim() const override { return d_; }
  std::string family() const override { return "negative_half_normal"; }

  ad::NodePtr log_prob(const ad::NodePtr& v, const ad::NodePtr&) const override {
    detail::check_matrix("negative_half_normal", v, d_);
    auto scaled = ad::cscale(v, 1.0 / scale_);
    const double c = static_cast<double>(d_) * (kLog2 - std::log(scale_));
    auto lp = ad::cadd(detail::std_normal_rows(scaled), c);
    Tensor mask =
        detail::support_mask_rows(v->value, [](double x, std::size_t) { return x <= 0.0; });
    return ad::add(lp, ad::constant(std::move(mask)));
  }
  Tensor sample(Rng& rng, std::size_t n, const Tensor*) const override {
    Tensor out = Tensor::zeros({n, d_});
    for (auto& x : out.data) x = -std::abs(rng.normal()) * scale_;
    return out;
  }
  SampleWithLogProb sample_with_log_prob(Rng& rng, std::size_t n,
                                         const ad::NodePtr&) const override {
    auto v = ad::constant(sample(rng, n, nullptr));
    return {v, log_prob(v, nullptr)};
  }

 private:
  double scale_;
  std::size_t d_;
};

// Product of independent Bernoullis over {0,1}^d with fixed logits.
class Bernoulli final : public Distribution {
 public:
  explicit Bernoulli(Tensor logits) : logits_(std::move(logits)) {}
  std::size_t event_dim() const override { return logits_.numel(); }
  std::string family() const override { return "bernoulli"; }

  ad::NodePtr log_prob(const ad::NodePtr& v, const ad::NodePtr&) const override {
    const std::size_t d = event_dim();
    detail::check_matrix("bernoulli", v, d);
    for (double x : v->value.data)
      if (x != 0.0 && x != 1.0) fail("bernoulli: values must be 0 or 1, got ", x);
    const std::size_t n = v->value.rows();
    Tensor lp = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double l = logits_.data[j];
        lp.data[i] += v->value.data[i * d + j] * l - (std::max(l, 0.0) + std::log1p(std::exp(-std::abs(l))));
      }
    return ad::constant(std::move(lp));
  }
  Tensor sample(Rng& rng, std::size_t n, const Tensor*) const override {
    const std::size_t d = event_dim();
    Tensor out = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double p = 1.0 / (1.0 + std::exp(-logits_.data[j]));
        out.data[i * d + j] = rng.uniform() < p ? 1.0 : 0.0;
      }
    return out;
  }
  SampleWithLogProb sample_with_log_prob(Rng& rng, std::size_t n,
                                         const ad::NodePtr&) const override {
    auto v = ad::constant(sample(rng, n, nullptr));
    return {v, log_prob(v, nullptr)};
  }

 private:
  Tensor logits_;
};

// Single categorical over {0..K-1} with fixed logits; values are integral
// doubles of shape [n,1].
class Categorical final : public Distribution {
 public:
  explicit Categorical(Tensor logits) : logits_(std::move(logits)) {}
  std::size_t event_dim() const override { return 1; }
  std::size_t num_classes() const { return logits_.numel(); }
  std::string family() const override { return "categorical"; }

  ad::NodePtr log_prob(const ad::NodePtr& v, const ad::NodePtr&) const override {
    detail::check_matrix("categorical", v, 1);
    const std::size_t n = v->value.rows(), k = num_classes();
    double lse = logits_.data[0];
    for (std::size_t j = 1; j < k; ++j)
      lse = std::max(lse, logits_.data[j]);
    double acc = 0;
    for (std::size_t j = 0; j < k; ++j) acc += std::exp(logits_.data[j] - lse);
    lse += std::log(acc);
    Tensor lp = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) {
      const double x = v->value.data[i];
      if (x != std::floor(x) || x < 0 || x >= static_cast<double>(k))
        fail("categorical: value ", x, " is not a class index in [0,", k, ")");
      lp.data[i] = logits_.data[static_cast<std::size_t>(x)] - lse;
    }
    return ad::constant(std::move(lp));
  }
  Tensor sample(Rng& rng, std::size_t n, const Tensor*) const override {
    const std::size_t k = num_classes();
    std::vector<double> p(k);
    double lse = logits_.data[0];
    for (std::size_t j = 1; j < k; ++j) lse = std::max(lse, logits_.data[j]);
    double acc = 0;
    for (std::size_t j = 0; j < k; ++j) acc += (p[j] = std::exp(logits_.data[j] - lse));
    Tensor out = Tensor::zeros({n, 1});
    for (std::size_t i = 0; i < n; ++i) {
      double u = rng.uniform() * acc;
      std::size_t j = 0;
      while (j + 1 < k && u >= p[j]) u -= p[j], ++j;
      out.data[i] = static_cast<double>(j);
    }
    return out;
  }
  SampleWithLogProb sample_with_log_prob(Rng& rng, std::size_t n,
                                         const ad::NodePtr&) const override {
    auto v = ad::constant(sample(rng, n, nullptr));
    return {v, log_prob(v, nullptr)};
  }

 private:
  Tensor logits_;
};

// ---------------------------------------------------------------------------
// Conditional families: a network maps the context to the family parameters.
// ---------------------------------------------------------------------------

class ConditionalDiagonalNormal final : public Distribution {
 public:
  // net: context [n,c] -> [n,2d] rows (mu | log_sigma)
  ConditionalDiagonalNormal(nn::Mlp net, std::size_t d) : net_(std::move(net)), d_(d) {
    if (net_.sizes().back() != 2 * d)
      fail("conditional_diagonal_normal: network emits ", net_.sizes().back(),
           " outputs, expected ", 2 * d);
  }
  std::size_t event_dim() const override { return d_; }
  std::string family() const override { return "conditional_diagonal_normal"; }

  ad::NodePtr log_prob(const ad::NodePtr& v, const ad::NodePtr& context) const override {
    detail::check_matrix("conditional_diagonal_normal", v, d_);
    auto [mu, log_sigma] = params(context);
    return gaussian_rows(v, mu, log_sigma);
  }
  Tensor sample(Rng& rng, std::size_t n, const Tensor* context) const override {
    if (!context) fail("conditional_diagonal_normal: sample requires context");
    auto [mu, log_sigma] = params(ad::constant(*context));
    Tensor out = Tensor::zeros({context->rows(), d_});
    for (std::size_t i = 0; i < out.numel(); ++i)
      out.data[i] = mu->value.data[i] + std::exp(log_sigma->value.data[i]) * rng.normal();
    (void)n;
    return out;
  }
  SampleWithLogProb sample_with_log_prob(Rng& rng, std::size_t n,
                                         const ad::NodePtr& context) const override {
    if (!context) fail("conditional_diagonal_normal: sample requires context");
    auto [mu, log_sigma] = params(context);
    auto eps = ad::constant(rng.normal_tensor({context->value.rows(), d_}));
    auto v = ad::add(mu, ad::mul(ad::exp(log_sigma), eps));
    (void)n;
    return {v, gaussian_rows(v, mu, log_sigma)};
  }
  void collect_parameters(ad::ParamMap& out, const std::string& prefix) const override {
    net_.collect_parameters(out, prefix + ".net");
  }
  const nn::Mlp& net() const { return net_; }

 private:
  std::pair<ad::NodePtr, ad::NodePtr> params(const ad::NodePtr& context) const {
    if (!context) fail("conditional_diagonal_normal: missing context");
    auto h = net_.apply(context);
    auto parts = ad::split(h, {d_, d_});
    return {parts[0], parts[1]};
  }
  static ad::NodePtr gaussian_rows(const ad::NodePtr& v, const ad::NodePtr& mu,
                                   const ad::NodePtr& log_sigma) {
    auto z = ad::mul(ad::sub(v, mu), ad::exp(ad::neg(log_sigma)));
    return ad::sub(detail::std_normal_rows(z), ad::rowsum(log_sigma));
  }

  nn::Mlp net_;
  std::size_t d_;
};

class ConditionalBernoulli final : public Distribution {
 public:
  ConditionalBernoulli(nn::Mlp net, std::size_t d) : net_(std::move(net)), d_(d) {
    if (net_.sizes().back() != d)
      fail("conditional_bernoulli: network emits ", net_.sizes().back(), " outputs, expected ", d);
  }
  std::size_t event_dim() const override { return d_; }
  std::string family() const override { return "conditional_bernoulli"; }

  ad::NodePtr log_prob(const ad::NodePtr& v, const ad::NodePtr& context) const override {
    detail::check_matrix("conditional_bernoulli", v, d_);
    for (double x : v->value.data)
      if (x != 0.0 && x != 1.0) fail("conditional_bernoulli: values must be 0 or 1, got ", x);
    if (!context) fail("conditional_bernoulli: missing context");
    auto logits = net_.apply(context);
    // sum_j v*l - softplus(l)
    return ad::rowsum(ad::sub(ad::mul(v, logits), ad::softplus(logits)));
  }
  Tensor sample(Rng& rng, std::size_t n, const Tensor* context) const override {
    if (!context) fail("conditional_bernoulli: sample requires context");
    auto logits = net_.apply(ad::constant(*context));
    Tensor out = Tensor::zeros({context->rows(), d_});
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const double l = logits->value.data[i];
      const double p = 1.0 / (1.0 + std::exp(-l));
      out.data[i] = rng.uniform() < p ? 1.0 : 0.0;
    }
    (void)n;
    return out;
  }
  SampleWithLogProb sample_with_log_prob(Rng& rng, std::size_t n,
                                         const ad::NodePtr& context) const override {
    if (!context) fail("conditional_bernoulli: sample requires context");
    Tensor ctx = context->value;
    auto v = ad::constant(sample(rng, n, &ctx));
    return {v, log_prob(v, context)};
  }
  void collect_parameters(ad::ParamMap& out, const std::string& prefix) const override {
    net_.collect_parameters(out, prefix + ".net");
  }

 private:
  nn::Mlp net_;
  std::size_t d_;
};

class ConditionalCategorical final : public Distribution {
 public:
  ConditionalCategorical(nn::Mlp net, std::size_t k) : net_(std::move(net)), k_(k) {
    if (net_.sizes().back() != k)
      fail("conditional_categorical: network emits ", net_.sizes().back(), " outputs, expected ", k);
  }
  std::size_t event_dim() const override { return 1; }
  std::size_t num_classes() const { return k_; }
  std::string family() const override { return "conditional_categorical"; }

  ad::NodePtr log_prob(const ad::NodePtr& v, const ad::NodePtr& context) const override {
    detail::check_matrix("conditional_categorical", v, 1);
    if (!context) fail("conditional_categorical: missing context");
    std::vector<std::size_t> idx(v->value.rows());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double x = v->value.data[i];
      if (x != std::floor(x) || x < 0 || x >= static_cast<double>(k_))
        fail("conditional_categorical: value ", x, " is not a class index in [0,", k_, ")");
      idx[i] = static_cast<std::size_t>(x);
    }
    auto logits = net_.apply(context);
    return ad::sub(ad::gather(logits, idx), ad::logsumexp_rows(logits));
  }
  Tensor sample(Rng& rng, std::size_t n, const Tensor* context) const override {
    if (!context) fail("conditional_categorical: sample requires context");
    auto logits = net_.apply(ad::constant(*context));
    const std::size_t rows = context->rows();
    Tensor out = Tensor::zeros({rows, 1});
    for (std::size_t i = 0; i < rows; ++i)
      out.data[i] = static_cast<double>(sample_row(rng, &logits->value.data[i * k_], k_));
    (void)n;
    return out;
  }
  SampleWithLogProb sample_with_log_prob(Rng& rng, std::size_t n,
                                         const ad::NodePtr& context) const override {
    if (!context) fail("conditional_categorical: sample requires context");
    Tensor ctx = context->value;
    auto v = ad::constant(sample(rng, n, &ctx));
    return {v, log_prob(v, context)};
  }
  void collect_parameters(ad::ParamMap& out, const std::string& prefix) const override {
    net_.collect_parameters(out, prefix + ".net");
  }

  static std::size_t sample_row(Rng& rng, const double* logits, std::size_t k) {
    double m = logits[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, logits[j]);
    double acc = 0;
    std::vector<double> p(k);
    for (std::size_t j = 0; j < k; ++j) acc += (p[j] = std::exp(logits[j] - m));
    double u = rng.uniform() * acc;
    std::size_t j = 0;
    while (j + 1 < k && u >= p[j]) u -= p[j], ++j;
    return j;
  }

 private:
  nn::Mlp net_;
  std::size_t k_;
};

// ---------------------------------------------------------------------------
// Special-support families
// ---------------------------------------------------------------------------

// Standard normal truncated to (-inf, bound], bound supplied per example via
// the context column.  value may have any width m; the density factorizes as
// sum_j log N(v_ij) - m log Phi(b_i) on {v_ij <= b_i}.
class TruncatedNormalBelow final : public Distribution {
 public:
  std::size_t event_dim() const override { return 1; }
  std::string family() const override { return "truncated_normal_below"; }

  ad::NodePtr log_prob(const ad::NodePtr& v, const ad::NodePtr& context) const override {
    if (!context) fail("truncated_normal_below: missing bound context");
    const std::size_t n = v->value.rows();
    const double m = static_cast<double>(v->value.cols());
    auto bound = ad::reshape(context, {n});
    auto lp = ad::sub(detail::std_normal_rows(v), ad::cscale(ad::norm_log_cdf(bound), m));
    const Tensor& bv = bound->value;
    const std::size_t d = v->value.cols();
    Tensor mask = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        if (v->value.data[i * d + j] > bv.data[i]) {
          mask.data[i] = -std::numeric_limits<double>::infinity();
          break;
        }
    return ad::add(lp, ad::constant(std::move(mask)));
  }

  // Inverse-CDF sampling with the uniform clamped into [1e-12, Phi(b)-1e-12].
  static double sample_one(Rng& rng, double bound) {
    const double cb = norm_cdf(bound);
    double u = rng.uniform() * cb;
    u = std::min(std::max(u, 1e-12), std::max(cb - 1e-12, 1e-12));
    return norm_quantile(u);
  }

  Tensor sample(Rng& rng, std::size_t n, const Tensor* context) const override {
    if (!context) fail("truncated_normal_below: sample requires bound context");
    Tensor out = Tensor::zeros({context->rows(), 1});
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = sample_one(rng, context->data[i]);
    (void)n;
    return out;
  }
  SampleWithLogProb sample_with_log_prob(Rng& rng, std::size_t n,
                                         const ad::NodePtr& context) const override {
    if (!context) fail("truncated_normal_below: sample requires bound context");
    Tensor ctx = context->value;
    auto v = ad::constant(sample(rng, n, &ctx));
    return {v, log_prob(v, context)};
  }
};

// max(g, 0) for g ~ N(0,1), per dimension: an atom of mass Phi(0)=1/2 at 0
// plus the normal density on (0,inf).  log_prob mixes log-mass (at 0) with
// log-density (above 0), which is exactly what surjection likelihoods need.
class RectifiedStandardNormal final : public Distribution {
 public:
  explicit RectifiedStandardNormal(std::size_t d) : d_(d) {}
  std::size_t event_dim() const override { return d_; }
  std::string family() const override { return "rectified_standard_normal"; }

  ad::NodePtr log_prob(const ad::NodePtr& v, const ad::NodePtr&) const override {
    detail::check_matrix("rectified_standard_normal", v, d_);
    const std::size_t n = v->value.rows();
    Tensor pos_mask = Tensor::zeros({n, d_});
    Tensor atom = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d_; ++j) {
        const double x = v->value.data[i * d_ + j];
        if (x > 0.0)
          pos_mask.data[i * d_ + j] = 1.0;
        else if (x == 0.0)
          atom.data[i] += std::log(0.5);
        else
          atom.data[i] = -std::numeric_limits<double>::infinity();
      }
    // Per-element normal log density, masked to the positive entries.
    auto dens = ad::cadd(ad::cscale(ad::square(v), -0.5), -0.5 * kLog2Pi);
    auto lp = ad::rowsum(ad::mul(dens, ad::constant(std::move(pos_mask))));
    return ad::add(lp, ad::constant(std::move(atom)));
  }
  Tensor sample(Rng& rng, std::size_t n, const Tensor*) const override {
    Tensor out = Tensor::zeros({n, d_});
    for (auto& x : out.data) x = std::max(rng.normal(), 0.0);
    return out;
  }
  SampleWithLogProb sample_with_log_prob(Rng& rng, std::size_t n,
                                         const ad::NodePtr&) const override {
    auto v = ad::constant(sample(rng, n, nullptr));
    return {v, log_prob(v, nullptr)};
  }

 private:
  std::size_t d_;
};

// Joint density of D i.i.d. N(0,1) values in ascending order:
// D! * prod_j N(z_j) on {z_1 <= ... <= z_D}.
class OrderedNormal final : public Distribution {
 public:
  explicit OrderedNormal(std::size_t d) : d_(d) {}
  std::size_t event_dim() const override { return d_; }
  std::string family() const override { return "ordered_normal"; }

  ad::NodePtr log_prob(const ad::NodePtr& v, const ad::NodePtr&) const override {
    detail::check_matrix("ordered_normal", v, d_);
    const std::size_t n = v->value.rows();
    Tensor mask = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j + 1 < d_; ++j)
        if (v->value.data[i * d_ + j] > v->value.data[i * d_ + j + 1]) {
          mask.data[i] = -std::numeric_limits<double>::infinity();
          break;
        }
    auto lp = ad::cadd(detail::std_normal_rows(v), std::lgamma(static_cast<double>(d_) + 1.0));
    return ad::add(lp, ad::constant(std::move(mask)));
  }
  Tensor sample(Rng& rng, std::size_t n, const Tensor*) const override {
    Tensor out = rng.normal_tensor({n, d_});
    for (std::size_t i = 0; i < n; ++i)
      std::sort(out.data.begin() + i * d_, out.data.begin() + (i + 1) * d_);
    return out;
  }
  SampleWithLogProb sample_with_log_prob(Rng& rng, std::size_t n,
                                         const ad::NodePtr&) const override {
    auto v = ad::constant(sample(rng, n, nullptr));
    return {v, log_prob(v, nullptr)};
  }

 private:
  std::size_t d_;
};

// Distribution of max(g_1..g_K) for i.i.d. standard normals:
// density K * N(z) * Phi(z)^(K-1), 1-dimensional.
class NormalMaxOrderStatistic final : public Distribution {
 public:
  explicit NormalMaxOrderStatistic(std::size_t k) : k_(k) {
    if (k == 0) fail("normal_max_order_statistic: k must be >= 1");
  }
  std::size_t event_dim() const override { return 1; }
  std::string family() const override { return "normal_max_order_statistic"; }

  ad::NodePtr log_prob(const ad::NodePtr& v, const ad::NodePtr&) const override {
    detail::check_matrix("normal_max_order_statistic", v, 1);
    auto flat = ad::reshape(v, {v->value.rows()});
    auto lp = ad::cadd(ad::cadd(ad::cscale(ad::square(flat), -0.5), -0.5 * kLog2Pi),
                       std::log(static_cast<double>(k_)));
    return ad::add(lp, ad::cscale(ad::norm_log_cdf(flat), static_cast<double>(k_) - 1.0));
  }
  Tensor sample(Rng& rng, std::size_t n, const Tensor*) const override {
    Tensor out = Tensor::zeros({n, 1});
    for (std::size_t i = 0; i < n; ++i) {
      double m = rng.normal();
      for (std::size_t j = 1; j < k_; ++j) m = std::max(m, rng.normal());
      out.data[i] = m;
    }
    return out;
  }
  SampleWithLogProb sample_with_log_prob(Rng& rng, std::size_t n,
                                         const ad::NodePtr&) const override {
    auto v = ad::constant(sample(rng, n, nullptr));
    return {v, log_prob(v, nullptr)};
  }

 private:
  std::size_t k_;
};

}  // namespace survae::dist
