#pragma once

#include <optional>
#include <vector>

#include "survae/dist.hpp"
#include "survae/layers/base.hpp"
#include "survae/nn.hpp"

namespace survae::layers {

// Which side of the transform is deterministic.  Inference orientation:
// X -> Z is a deterministic surjection and the likelihood term is exact.
// Generative orientation: Z -> X is deterministic and the inference pass
// samples a stochastic right inverse, giving a lower-bound term.
enum class Orientation { Inference, Generative };

inline Orientation parse_orientation(const std::string& s) {
  if (s == "inference") return Orientation::Inference;
  if (s == "generative") return Orientation::Generative;
  fail("orientation: expected 'inference' or 'generative', got '", s, "'");
}

namespace perms {

inline std::size_t factorial(std::size_t d) {
  std::size_t f = 1;
  for (std::size_t i = 2; i <= d; ++i) f *= i;
  return f;
}

// Lexicographic rank of a permutation of 0..d-1 (Lehmer code).
inline std::size_t rank(const std::vector<std::size_t>& p) {
  const std::size_t d = p.size();
  std::size_t r = 0;
  for (std::size_t i = 0; i < d; ++i) {
    std::size_t smaller = 0;
    for (std::size_t j = i + 1; j < d; ++j)
      if (p[j] < p[i]) ++smaller;
    r += smaller * factorial(d - 1 - i);
  }
  return r;
}

inline std::vector<std::size_t> unrank(std::size_t r, std::size_t d) {
  std::vector<std::size_t> pool(d);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::vector<std::size_t> p(d);
  for (std::size_t i = 0; i < d; ++i) {
    const std::size_t f = factorial(d - 1 - i);
    const std::size_t k = r / f;
    r %= f;
    p[i] = pool[k];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return p;
}

inline std::vector<std::size_t> random_perm(std::size_t d, Rng& rng) {
  std::vector<std::size_t> p(d);
  std::iota(p.begin(), p.end(), std::size_t{0});
  rng.shuffle(p);
  return p;
}

}  // namespace perms

// ---------------------------------------------------------------------------
// Abs: z = |x| elementwise, with a per-dimension sign variable.
// Inference orientation folds the sign into the likelihood exactly
// (V = log p(s|z)); generative orientation samples signs as a stochastic
// right inverse (V = -log q(s|x)).  The sign model is either uniform (1/2
// per dimension) or an independent-Bernoulli classifier conditioned on the
// deterministic side's value.
// ---------------------------------------------------------------------------
class AbsSurjection final : public Layer {
 public:
  enum class SignModel { Uniform, Classifier };

  AbsSurjection(Orientation orient, std::size_t dim) : orient_(orient), dim_(dim) {}
  AbsSurjection(Orientation orient, std::size_t dim, Rng& rng,
                const std::vector<std::size_t>& hidden)
      : orient_(orient), dim_(dim), sign_model_(SignModel::Classifier) {
    std::vector<std::size_t> sizes{dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(dim);
    net_ = nn::Mlp::create(rng, sizes, /*zero_init_last=*/true);
  }

  std::string kind() const override {
    return orient_ == Orientation::Inference ? "abs_inference" : "abs_generative";
  }
  std::size_t in_dim() const override { return dim_; }
  std::size_t out_dim() const override { return dim_; }
  bool exact() const override { return orient_ == Orientation::Inference; }

  StepResult inference(const ad::NodePtr& x, Rng& rng) override {
    detail::check_input(kind().c_str(), x, dim_);
    const std::size_t n = x->value.rows();
    if (orient_ == Orientation::Inference) {
      auto z = ad::abs(x);
      Tensor s01 = sign_bits(x->value);
      return {z, sign_log_prob(s01, z, n)};
    }
    // Generative orientation: sample s ~ q(s|x), z = s*x, V = -log q(s|x).
    Tensor s01 = Tensor::zeros({n, dim_});
    if (sign_model_ == SignModel::Uniform) {
      for (auto& b : s01.data) b = rng.uniform() < 0.5 ? 0.0 : 1.0;
    } else {
      auto logits = net_->apply(x);
      for (std::size_t i = 0; i < s01.numel(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-logits->value.data[i]));
        s01.data[i] = rng.uniform() < p ? 1.0 : 0.0;
      }
    }
    Tensor spm = s01;
    for (auto& v : spm.data) v = 2.0 * v - 1.0;
    auto z = ad::mul(x, ad::constant(std::move(spm)));
    return {z, ad::neg(sign_log_prob(s01, x, n))};
  }

  StepResult generative(const ad::NodePtr& z, Rng& rng) override {
    detail::check_input(kind().c_str(), z, dim_);
    if (orient_ == Orientation::Generative) return {ad::abs(z), nullptr};
    // Inference orientation sampling: s ~ p(s|z), x = s*z.
    const std::size_t n = z->value.rows();
    Tensor spm = Tensor::zeros({n, dim_});
    if (sign_model_ == SignModel::Uniform) {
      for (auto& v : spm.data) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
    } else {
      auto logits = net_->apply(z);
      for (std::size_t i = 0; i < spm.numel(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-logits->value.data[i]));
        spm.data[i] = rng.uniform() < p ? 1.0 : -1.0;
      }
    }
    return {ad::mul(z, ad::constant(std::move(spm))), nullptr};
  }

  void collect_parameters(ad::ParamMap& out, const std::string& prefix) const override {
    if (net_) net_->collect_parameters(out, prefix + ".sign_net");
  }

  // p(s_j = +1 | conditioner) as plain values; the conditioner is the
  // deterministic side (z in inference orientation, x in generative).
  Tensor sign_prob_positive(const Tensor& cond) const {
    Tensor p = Tensor::full(cond.shape, 0.5);
    if (sign_model_ == SignModel::Classifier) {
      auto logits = net_->apply(ad::constant(cond));
      for (std::size_t i = 0; i < p.numel(); ++i)
        p.data[i] = 1.0 / (1.0 + std::exp(-logits->value.data[i]));
    }
    return p;
  }

 private:
  Tensor sign_bits(const Tensor& v) const {
    Tensor s01 = Tensor::zeros(v.shape);
    for (std::size_t i = 0; i < v.numel(); ++i) s01.data[i] = v.data[i] >= 0 ? 1.0 : 0.0;
    return s01;
  }
  // log prod_j Bern(s_j | model(cond)); cond is z (inference) or x (generative).
  ad::NodePtr sign_log_prob(const Tensor& s01, const ad::NodePtr& cond, std::size_t n) const {
    if (sign_model_ == SignModel::Uniform)
      return ad::constant(Tensor::full({n}, -static_cast<double>(dim_) * kLog2));
    auto logits = net_->apply(cond);
    return ad::rowsum(ad::sub(ad::mul(ad::constant(s01), logits), ad::softplus(logits)));
  }

  Orientation orient_;
  std::size_t dim_;
  SignModel sign_model_ = SignModel::Uniform;
  std::optional<nn::Mlp> net_;
};

// ---------------------------------------------------------------------------
// Max: inference orientation maps K values to their maximum (exact;
// V = log p(k|z) + sum_{j!=k} log p(x_j|z)); generative orientation is the
// pooling direction (x = max z) with a stochastic inverse that picks the
// argmax position and fills the rest below the observed value.
// Fills: half-normal decrement (value - |eps|*scale) or truncated standard
// normal below the bound.
// ---------------------------------------------------------------------------
class MaxSurjection final : public Layer {
 public:
  enum class IndexModel { Uniform, Classifier };
  enum class Fill { HalfNormalDecrement, TruncatedNormal };

  MaxSurjection(Orientation orient, std::size_t k, Fill fill, double fill_scale = 1.0)
      : orient_(orient), k_(k), fill_(fill), fill_scale_(fill_scale) {
    if (k_ < 2) fail("max: needs width >= 2, got ", k_);
    if (!(fill_scale_ > 0)) fail("max: fill scale must be positive");
  }
  MaxSurjection(Orientation orient, std::size_t k, Fill fill, double fill_scale, Rng& rng,
                const std::vector<std::size_t>& hidden)
      : MaxSurjection(orient, k, fill, fill_scale) {
    index_model_ = IndexModel::Classifier;
    std::vector<std::size_t> sizes{1};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(k);
    net_ = nn::Mlp::create(rng, sizes, /*zero_init_last=*/true);
  }

  std::string kind() const override {
    return orient_ == Orientation::Inference ? "max_inference" : "max_generative";
  }
  std::size_t in_dim() const override { return orient_ == Orientation::Inference ? k_ : 1; }
  std::size_t out_dim() const override { return orient_ == Orientation::Inference ? 1 : k_; }
  bool exact() const override { return orient_ == Orientation::Inference; }

  StepResult inference(const ad::NodePtr& x, Rng& rng) override {
    const std::size_t n = x->value.rows();
    if (orient_ == Orientation::Inference) {
      detail::check_input("max_inference", x, k_);
      auto mr = ad::max_along_axis(x);
      auto z = ad::reshape(mr.values, {n, 1});
      auto v = ad::add(index_log_prob(mr.indices, z, n), fill_log_prob(x, mr.values, mr.indices));
      return {z, v};
    }
    // Generative orientation (pooling): sample position and fills below x.
    // Fills are expressed as x minus a sampled decrement, so the output moves
    // one-to-one with the bound under frozen noise.  For the half-normal
    // decrement model this is the exact sampling path; for truncated-normal
    // fills the decrement's own dependence on the bound is not tracked (index
    // and classifier gradients are still exact).
    detail::check_input("max_generative", x, 1);
    auto x_flat = ad::reshape(x, {n});
    std::vector<std::size_t> idx = sample_indices(x, n, rng);
    Tensor dec = Tensor::zeros({n, k_});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k_; ++j)
        if (j != idx[i])
          dec.data[i * k_ + j] = x->value.data[i] - sample_fill(rng, x->value.data[i]);
    auto z = ad::sub(ad::col_broadcast(x_flat, k_), ad::constant(std::move(dec)));
    auto v = ad::sub(ad::neg(index_log_prob(idx, x, n)), fill_log_prob(z, x_flat, idx));
    return {z, v};
  }

  StepResult generative(const ad::NodePtr& z, Rng& rng) override {
    const std::size_t n = z->value.rows();
    if (orient_ == Orientation::Generative) {
      detail::check_input("max_generative", z, k_);
      auto mr = ad::max_along_axis(z);
      return {ad::reshape(mr.values, {n, 1}), nullptr};
    }
    detail::check_input("max_inference", z, 1);
    std::vector<std::size_t> idx = sample_indices(z, n, rng);
    Tensor dec = Tensor::zeros({n, k_});
    for (std::size_t i = 0; i < n; ++i) {
      const double m = z->value.data[i];
      for (std::size_t j = 0; j < k_; ++j)
        if (j != idx[i]) dec.data[i * k_ + j] = m - sample_fill(rng, m);
    }
    auto x = ad::sub(ad::col_broadcast(ad::reshape(z, {n}), k_), ad::constant(std::move(dec)));
    return {x, nullptr};
  }

  void collect_parameters(ad::ParamMap& out, const std::string& prefix) const override {
    if (net_) net_->collect_parameters(out, prefix + ".index_net");
  }

  // Raw model factors as plain values, for independent cross-checks.
  double index_log_prob_value(std::size_t k, double bound) const {
    if (k >= k_) fail("max: index ", k, " out of range ", k_);
    if (index_model_ == IndexModel::Uniform) return -std::log(static_cast<double>(k_));
    Tensor c = Tensor::zeros({1, 1});
    c.data[0] = bound;
    auto logits = net_->apply(ad::constant(std::move(c)));
    double m = logits->value.data[0];
    for (std::size_t j = 1; j < k_; ++j) m = std::max(m, logits->value.data[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < k_; ++j) s += std::exp(logits->value.data[j] - m);
    return logits->value.data[k] - m - std::log(s);
  }

  double fill_log_pdf(double value, double bound) const {
    if (value > bound) return -std::numeric_limits<double>::infinity();
    if (fill_ == Fill::HalfNormalDecrement) {
      const double r = (bound - value) / fill_scale_;
      return kLog2 - std::log(fill_scale_) - 0.5 * (kLog2Pi + r * r);
    }
    return norm_logpdf(value) - norm_logcdf(bound);
  }

 private:
  // log p(k | conditioner value); cond is [n,1].
  ad::NodePtr index_log_prob(const std::vector<std::size_t>& idx, const ad::NodePtr& cond,
                             std::size_t n) const {
    if (index_model_ == IndexModel::Uniform)
      return ad::constant(Tensor::full({n}, -std::log(static_cast<double>(k_))));
    auto logits = net_->apply(cond);
    return ad::sub(ad::gather(logits, idx), ad::logsumexp_rows(logits));
  }

  // sum_{j != argmax} log p_fill(values[:,j] | bound), as rowsum minus the
  // argmax element (whose fill term is evaluated at the bound itself).
  ad::NodePtr fill_log_prob(const ad::NodePtr& values, const ad::NodePtr& bound_flat,
                            const std::vector<std::size_t>& idx) const {
    ad::NodePtr f;
    if (fill_ == Fill::HalfNormalDecrement) {
      auto dd = ad::sub(ad::col_broadcast(bound_flat, k_), values);
      f = ad::cadd(ad::cscale(ad::square(ad::cscale(dd, 1.0 / fill_scale_)), -0.5),
                   kLog2 - std::log(fill_scale_) - 0.5 * kLog2Pi);
    } else {
      f = ad::cadd(ad::cscale(ad::square(values), -0.5), -0.5 * kLog2Pi);
    }
    auto s = ad::sub(ad::rowsum(f), ad::gather(f, idx));
    if (fill_ == Fill::TruncatedNormal)
      s = ad::sub(s, ad::cscale(ad::norm_log_cdf(bound_flat), static_cast<double>(k_) - 1.0));
    return s;
  }

  std::vector<std::size_t> sample_indices(const ad::NodePtr& cond, std::size_t n, Rng& rng) const {
    std::vector<std::size_t> idx(n);
    if (index_model_ == IndexModel::Uniform) {
      for (auto& k : idx) k = rng.uniform_int(k_);
    } else {
      auto logits = net_->apply(cond);
      for (std::size_t i = 0; i < n; ++i)
        idx[i] = dist::ConditionalCategorical::sample_row(rng, &logits->value.data[i * k_], k_);
    }
    return idx;
  }

  double sample_fill(Rng& rng, double bound) const {
    if (fill_ == Fill::HalfNormalDecrement) return bound - std::abs(rng.normal()) * fill_scale_;
    return dist::TruncatedNormalBelow::sample_one(rng, bound);
  }

  Orientation orient_;
  std::size_t k_;
  Fill fill_;
  double fill_scale_;
  IndexModel index_model_ = IndexModel::Uniform;
  std::optional<nn::Mlp> net_;
};

// ---------------------------------------------------------------------------
// Sort: inference orientation maps a vector to its ascending order statistics
// (exact; V = log p(I|z) with I the argsort); generative orientation models
// naturally sorted data with a stochastic unsorting inverse (V = -log q(I|x)).
// The permutation model is uniform (1/D!) or a categorical classifier over
// all D! permutations (only permitted for D <= 5).
// ---------------------------------------------------------------------------
class SortSurjection final : public Layer {
 public:
  enum class PermModel { Uniform, Classifier };

  SortSurjection(Orientation orient, std::size_t d) : orient_(orient), d_(d) {
    if (d_ < 2) fail("sort: needs width >= 2, got ", d_);
  }
  SortSurjection(Orientation orient, std::size_t d, Rng& rng,
                 const std::vector<std::size_t>& hidden)
      : SortSurjection(orient, d) {
    if (d > 5) fail("sort: classifier permutation model only supported for width <= 5, got ", d);
    perm_model_ = PermModel::Classifier;
    std::vector<std::size_t> sizes{d};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(perms::factorial(d));
    net_ = nn::Mlp::create(rng, sizes, /*zero_init_last=*/true);
  }

  std::string kind() const override {
    return orient_ == Orientation::Inference ? "sort_inference" : "sort_generative";
  }
  std::size_t in_dim() const override { return d_; }
  std::size_t out_dim() const override { return d_; }
  bool exact() const override { return orient_ == Orientation::Inference; }

  StepResult inference(const ad::NodePtr& x, Rng& rng) override {
    detail::check_input(kind().c_str(), x, d_);
    const std::size_t n = x->value.rows();
    if (orient_ == Orientation::Inference) {
      auto sr = ad::sort_along_axis(x);
      std::vector<std::vector<std::size_t>> argsort(n, std::vector<std::size_t>(d_));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d_; ++j) argsort[i][j] = sr.perm[i * d_ + j];
      return {sr.values, perm_log_prob(argsort, sr.values, n)};
    }
    // Generative orientation: draw I ~ q(I|x), z_j = x_{I(j)}.
    std::vector<std::vector<std::size_t>> idx(n);
    if (perm_model_ == PermModel::Uniform) {
      for (auto& p : idx) p = perms::random_perm(d_, rng);
    } else {
      auto logits = net_->apply(x);
      const std::size_t nf = perms::factorial(d_);
      for (std::size_t i = 0; i < n; ++i)
        idx[i] = perms::unrank(
            dist::ConditionalCategorical::sample_row(rng, &logits->value.data[i * nf], nf), d_);
    }
    auto z = detail::permute_columns_rowwise(x, idx);
    return {z, ad::neg(perm_log_prob(idx, x, n))};
  }

  StepResult generative(const ad::NodePtr& z, Rng& rng) override {
    detail::check_input(kind().c_str(), z, d_);
    const std::size_t n = z->value.rows();
    if (orient_ == Orientation::Generative) return {ad::sort_along_axis(z).values, nullptr};
    // Inference orientation sampling: I ~ p(I|z), then x = z_{I^{-1}} so that
    // argsort(x) = I and sort(x) reproduces z.
    std::vector<std::vector<std::size_t>> idx(n);
    if (perm_model_ == PermModel::Uniform) {
      for (auto& p : idx) p = perms::random_perm(d_, rng);
    } else {
      auto logits = net_->apply(z);
      const std::size_t nf = perms::factorial(d_);
      for (std::size_t i = 0; i < n; ++i)
        idx[i] = perms::unrank(
            dist::ConditionalCategorical::sample_row(rng, &logits->value.data[i * nf], nf), d_);
    }
    Tensor x = Tensor::zeros({n, d_});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d_; ++j) x.data[i * d_ + idx[i][j]] = z->value.data[i * d_ + j];
    return {ad::constant(std::move(x)), nullptr};
  }

  void collect_parameters(ad::ParamMap& out, const std::string& prefix) const override {
    if (net_) net_->collect_parameters(out, prefix + ".perm_net");
  }

  // log p(I | conditioner row), as a plain value.
  double perm_log_prob_value(const std::vector<std::size_t>& perm, const Tensor& cond_row) const {
    if (perm_model_ == PermModel::Uniform)
      return -std::lgamma(static_cast<double>(d_) + 1.0);
    auto logits = net_->apply(ad::constant(cond_row));
    const std::size_t nf = perms::factorial(d_);
    double m = logits->value.data[0];
    for (std::size_t j = 1; j < nf; ++j) m = std::max(m, logits->value.data[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < nf; ++j) s += std::exp(logits->value.data[j] - m);
    return logits->value.data[perms::rank(perm)] - m - std::log(s);
  }

 private:
  ad::NodePtr perm_log_prob(const std::vector<std::vector<std::size_t>>& idx,
                            const ad::NodePtr& cond, std::size_t n) const {
    if (perm_model_ == PermModel::Uniform)
      return ad::constant(
          Tensor::full({n}, -std::lgamma(static_cast<double>(d_) + 1.0)));
    auto logits = net_->apply(cond);
    std::vector<std::size_t> classes(n);
    for (std::size_t i = 0; i < n; ++i) classes[i] = perms::rank(idx[i]);
    return ad::sub(ad::gather(logits, classes), ad::logsumexp_rows(logits));
  }

  Orientation orient_;
  std::size_t d_;
  PermModel perm_model_ = PermModel::Uniform;
  std::optional<nn::Mlp> net_;
};

// ---------------------------------------------------------------------------
// Slice: generative orientation augments the state with extra dimensions
// drawn from q(z2|x) (V = -log q(z2|x)); inference orientation drops
// dimensions, scoring them under p(x2|z) (exact).  The auxiliary model is a
// distribution, optionally conditioned on the kept slice.
// ---------------------------------------------------------------------------
class SliceSurjection final : public Layer {
 public:
  SliceSurjection(Orientation orient, std::size_t keep, std::size_t extra, dist::DistPtr aux,
                  bool aux_conditional)
      : orient_(orient), keep_(keep), extra_(extra), aux_(std::move(aux)),
        aux_conditional_(aux_conditional) {
    if (keep_ == 0 || extra_ == 0) fail("slice: kept and sliced widths must be positive");
    if (aux_->event_dim() != extra_)
      fail("slice: auxiliary model event dim ", aux_->event_dim(), " != sliced width ", extra_);
  }

  std::string kind() const override {
    return orient_ == Orientation::Inference ? "slice_inference" : "slice_generative";
  }
  std::size_t in_dim() const override {
    return orient_ == Orientation::Inference ? keep_ + extra_ : keep_;
  }
  std::size_t out_dim() const override {
    return orient_ == Orientation::Inference ? keep_ : keep_ + extra_;
  }
  bool exact() const override { return orient_ == Orientation::Inference; }

  StepResult inference(const ad::NodePtr& x, Rng& rng) override {
    if (orient_ == Orientation::Inference) {
      detail::check_input("slice_inference", x, keep_ + extra_);
      auto parts = ad::split(x, {keep_, extra_});
      auto v = aux_->log_prob(parts[1], aux_conditional_ ? parts[0] : nullptr);
      return {parts[0], v};
    }
    detail::check_input("slice_generative", x, keep_);
    auto s = aux_->sample_with_log_prob(rng, x->value.rows(), aux_conditional_ ? x : nullptr);
    return {ad::concat({x, s.value}), ad::neg(s.log_prob)};
  }

  StepResult generative(const ad::NodePtr& z, Rng& rng) override {
    if (orient_ == Orientation::Generative) {
      detail::check_input("slice_generative", z, keep_ + extra_);
      return {ad::split(z, {keep_, extra_})[0], nullptr};
    }
    detail::check_input("slice_inference", z, keep_);
    Tensor x2 = aux_->sample(rng, z->value.rows(), aux_conditional_ ? &z->value : nullptr);
    return {ad::concat({z, ad::constant(std::move(x2))}), nullptr};
  }

  void collect_parameters(ad::ParamMap& out, const std::string& prefix) const override {
    aux_->collect_parameters(out, prefix + ".aux");
  }

  const dist::Distribution& aux() const { return *aux_; }
  bool aux_conditional() const { return aux_conditional_; }
  std::size_t kept_dim() const { return keep_; }
  std::size_t sliced_dim() const { return extra_; }

 private:
  Orientation orient_;
  std::size_t keep_, extra_;
  dist::DistPtr aux_;
  bool aux_conditional_;
};

// ---------------------------------------------------------------------------
// Rounding: generative orientation is dequantization of integer data
// (z = x + u, u in [0,1)^d, V = -log q(u|x)); inference orientation is
// quantization (z = floor(x), V = log p(x|z), exact).  The in-bin model is
// uniform (V term 0) or a conditional diagonal normal pushed through a
// sigmoid.
// ---------------------------------------------------------------------------
class RoundingSurjection final : public Layer {
 public:
  enum class BinModel { Uniform, ConditionalNormalSigmoid };
  static constexpr double kClampMargin = 1e-6;

  RoundingSurjection(Orientation orient, std::size_t dim) : orient_(orient), dim_(dim) {}
  RoundingSurjection(Orientation orient, std::size_t dim, Rng& rng,
                     const std::vector<std::size_t>& hidden)
      : orient_(orient), dim_(dim), bin_model_(BinModel::ConditionalNormalSigmoid) {
    std::vector<std::size_t> sizes{dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2 * dim);
    cond_ = std::make_shared<dist::ConditionalDiagonalNormal>(
        nn::Mlp::create(rng, sizes, /*zero_init_last=*/true), dim);
  }

  std::string kind() const override {
    return orient_ == Orientation::Inference ? "rounding_inference" : "rounding_generative";
  }
  std::size_t in_dim() const override { return dim_; }
  std::size_t out_dim() const override { return dim_; }
  bool exact() const override { return orient_ == Orientation::Inference; }

  StepResult inference(const ad::NodePtr& x, Rng& rng) override {
    detail::check_input(kind().c_str(), x, dim_);
    const std::size_t n = x->value.rows();
    if (orient_ == Orientation::Generative) {
      for (double v : x->value.data)
        if (v != std::floor(v))
          fail("rounding_generative: dequantization input must be integral, got ", v);
      if (bin_model_ == BinModel::Uniform) {
        auto u = ad::constant(rng.uniform_tensor({n, dim_}));
        return {ad::add(x, u), ad::constant(Tensor::zeros({n}))};
      }
      auto s = cond_->sample_with_log_prob(rng, n, x);  // g ~ N(mu(x), sigma(x))
      auto u = ad::sigmoid(s.value);
      // log q(u|x) = log N(g) - sum log u(1-u)
      auto jac = ad::rowsum(ad::add(ad::log(u), ad::log(ad::sub(ad::constant(1.0), u))));
      return {ad::add(x, u), ad::neg(ad::sub(s.log_prob, jac))};
    }
    // Inference orientation: quantization.
    Tensor zf = x->value;
    for (auto& v : zf.data) v = std::floor(v);
    auto z = ad::constant(std::move(zf));
    if (bin_model_ == BinModel::Uniform)
      return {z, ad::constant(Tensor::zeros({n}))};
    auto u = clamp01(ad::sub(x, z));
    auto g = ad::sub(ad::log(u), ad::log(ad::sub(ad::constant(1.0), u)));
    auto jac = ad::rowsum(ad::add(ad::log(u), ad::log(ad::sub(ad::constant(1.0), u))));
    return {z, ad::sub(cond_->log_prob(g, z), jac)};
  }

  StepResult generative(const ad::NodePtr& z, Rng& rng) override {
    detail::check_input(kind().c_str(), z, dim_);
    const std::size_t n = z->value.rows();
    if (orient_ == Orientation::Generative) {
      Tensor x = z->value;
      for (auto& v : x.data) v = std::floor(v);
      return {ad::constant(std::move(x)), nullptr};
    }
    for (double v : z->value.data)
      if (v != std::floor(v))
        fail("rounding_inference: generative input must be integral, got ", v);
    Tensor u = Tensor::zeros({n, dim_});
    if (bin_model_ == BinModel::Uniform) {
      u = rng.uniform_tensor({n, dim_});
    } else {
      Tensor ctx = z->value;
      Tensor g = cond_->sample(rng, n, &ctx);
      for (std::size_t i = 0; i < u.numel(); ++i) u.data[i] = 1.0 / (1.0 + std::exp(-g.data[i]));
    }
    return {ad::add(z, ad::constant(std::move(u))), nullptr};
  }

  void collect_parameters(ad::ParamMap& out, const std::string& prefix) const override {
    if (cond_) cond_->collect_parameters(out, prefix + ".bin");
  }

  // In-bin log density q(u | bin), as a plain value; u in (0,1)^d.
  double bin_log_pdf(const Tensor& u_row, const Tensor& bin_row) const {
    for (double u : u_row.data)
      if (!(u >= 0.0 && u < 1.0)) return -std::numeric_limits<double>::infinity();
    if (bin_model_ == BinModel::Uniform) return 0.0;
    for (double u : u_row.data)
      if (u == 0.0) return -std::numeric_limits<double>::infinity();
    Tensor g = u_row;
    double jac = 0.0;
    for (auto& u : g.data) {
      jac += std::log(u) + std::log1p(-u);
      u = std::log(u) - std::log1p(-u);
    }
    const double lp =
        cond_->log_prob(ad::constant(std::move(g)), ad::constant(bin_row))->value.item();
    return lp - jac;
  }

 private:
  static ad::NodePtr clamp01(const ad::NodePtr& u) {
    auto low = ad::cadd(ad::relu(ad::cadd(u, -kClampMargin)), kClampMargin);
    const double hi = 1.0 - kClampMargin;
    return ad::sub(ad::constant(hi), ad::relu(ad::sub(ad::constant(hi), low)));
  }

  Orientation orient_;
  std::size_t dim_;
  BinModel bin_model_ = BinModel::Uniform;
  std::shared_ptr<dist::ConditionalDiagonalNormal> cond_;
};

// ---------------------------------------------------------------------------
// ReLU: inference orientation maps to z = max(x,0) and scores clipped values
// under a negative half-normal (exact: V = sum_{z_j=0} log p(x_j)); generative
// orientation has x = max(z,0) with a stochastic inverse drawing negative
// values at the zeros (V = -sum_{x_j=0} log q(z_j)).
// ---------------------------------------------------------------------------
class ReluSurjection final : public Layer {
 public:
  ReluSurjection(Orientation orient, std::size_t dim, double scale = 1.0)
      : orient_(orient), dim_(dim), scale_(scale) {
    if (!(scale_ > 0)) fail("relu: fill scale must be positive");
  }

  std::string kind() const override {
    return orient_ == Orientation::Inference ? "relu_inference" : "relu_generative";
  }
  std::size_t in_dim() const override { return dim_; }
  std::size_t out_dim() const override { return dim_; }
  bool exact() const override { return orient_ == Orientation::Inference; }

  StepResult inference(const ad::NodePtr& x, Rng& rng) override {
    detail::check_input(kind().c_str(), x, dim_);
    const std::size_t n = x->value.rows();
    if (orient_ == Orientation::Inference) {
      auto z = ad::relu(x);
      Tensor mask = Tensor::zeros({n, dim_});
      for (std::size_t i = 0; i < mask.numel(); ++i)
        mask.data[i] = x->value.data[i] <= 0.0 ? 1.0 : 0.0;
      auto v = ad::rowsum(ad::mul(neg_half_normal_logpdf(x), ad::constant(std::move(mask))));
      return {z, v};
    }
    // Generative orientation: data must be nonnegative; draw at the zeros.
    // Positive entries pass through (gradient one); zero entries are replaced
    // by the draw and contribute no input gradient, matching the sampling
    // path where the drawn value does not move with the clipped input.
    Tensor draws = Tensor::zeros({n, dim_});
    Tensor pos = Tensor::zeros({n, dim_});
    Tensor vrow = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < dim_; ++j) {
        const double xv = x->value.data[i * dim_ + j];
        if (xv < 0) fail("relu_generative: data must be nonnegative, got ", xv);
        if (xv == 0.0) {
          const double zj = -std::abs(rng.normal()) * scale_;
          draws.data[i * dim_ + j] = zj;
          const double r = zj / scale_;
          vrow.data[i] -= kLog2 - std::log(scale_) - 0.5 * (kLog2Pi + r * r);
        } else {
          pos.data[i * dim_ + j] = 1.0;
        }
      }
    auto z = ad::add(ad::mul(x, ad::constant(std::move(pos))), ad::constant(std::move(draws)));
    return {z, ad::constant(std::move(vrow))};
  }

  StepResult generative(const ad::NodePtr& z, Rng& rng) override {
    detail::check_input(kind().c_str(), z, dim_);
    if (orient_ == Orientation::Generative) return {ad::relu(z), nullptr};
    const std::size_t n = z->value.rows();
    Tensor draws = Tensor::zeros({n, dim_});
    for (std::size_t i = 0; i < draws.numel(); ++i)
      if (z->value.data[i] == 0.0) draws.data[i] = -std::abs(rng.normal()) * scale_;
    return {ad::add(z, ad::constant(std::move(draws))), nullptr};
  }

  // Fill log density at a clipped value (support: v <= 0), as a plain value.
  double fill_log_pdf(double v) const {
    if (v > 0) return -std::numeric_limits<double>::infinity();
    const double r = v / scale_;
    return kLog2 - std::log(scale_) - 0.5 * (kLog2Pi + r * r);
  }

 private:
  // Elementwise log density of -|N(0,scale^2)|, finite everywhere (the
  // support restriction is applied by the caller's mask).
  ad::NodePtr neg_half_normal_logpdf(const ad::NodePtr& x) const {
    return ad::cadd(ad::cscale(ad::square(ad::cscale(x, 1.0 / scale_)), -0.5),
                    kLog2 - std::log(scale_) - 0.5 * kLog2Pi);
  }

  Orientation orient_;
  std::size_t dim_;
  double scale_;
};

}  // namespace survae::layers
