#pragma once

#include <numeric>
#include <optional>
#include <vector>

#include "survae/layers/base.hpp"
#include "survae/nn.hpp"

namespace survae::layers {

// Affine coupling: the second half of the features is shifted and scaled by
// functions of the first half.  Generative: x2 = z2*exp(s) + t; inference:
// z2 = (x2-t)*exp(-s) with V = -sum(s).  The raw scale is squashed through
// s = s_bound*tanh(raw) and the conditioner's last layer starts at zero, so
// the map starts as the identity.
class AffineCoupling final : public Layer {
 public:
  static constexpr double kScaleBound = 2.0;

  AffineCoupling(Rng& rng, std::size_t dim, const std::vector<std::size_t>& hidden) : dim_(dim) {
    if (dim < 2 || dim % 2 != 0)
      fail("affine_coupling: requires an even feature split, got width ", dim);
    d1_ = dim / 2;
    d2_ = dim - d1_;
    std::vector<std::size_t> sizes{d1_};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2 * d2_);
    net_ = nn::Mlp::create(rng, sizes, /*zero_init_last=*/true);
  }

  std::string kind() const override { return "affine_coupling"; }
  std::size_t in_dim() const override { return dim_; }
  std::size_t out_dim() const override { return dim_; }
  bool exact() const override { return true; }

  StepResult inference(const ad::NodePtr& x, Rng&) override {
    detail::check_input("affine_coupling", x, dim_);
    auto parts = ad::split(x, {d1_, d2_});
    auto [s, t] = conditioner(parts[0]);
    auto z2 = ad::mul(ad::sub(parts[1], t), ad::exp(ad::neg(s)));
    return {ad::concat({parts[0], z2}), ad::neg(ad::rowsum(s))};
  }

  StepResult generative(const ad::NodePtr& z, Rng&) override {
    detail::check_input("affine_coupling", z, dim_);
    auto parts = ad::split(z, {d1_, d2_});
    auto [s, t] = conditioner(parts[0]);
    auto x2 = ad::add(ad::mul(parts[1], ad::exp(s)), t);
    return {ad::concat({parts[0], x2}), ad::rowsum(s)};
  }

  void collect_parameters(ad::ParamMap& out, const std::string& prefix) const override {
    net_.collect_parameters(out, prefix + ".net");
  }

 private:
  std::pair<ad::NodePtr, ad::NodePtr> conditioner(const ad::NodePtr& part1) const {
    auto h = net_.apply(part1);
    auto st = ad::split(h, {d2_, d2_});
    return {ad::cscale(ad::tanh(st[0]), kScaleBound), st[1]};
  }

  std::size_t dim_, d1_ = 0, d2_ = 0;
  nn::Mlp net_;
};

// Per-dimension affine normalization z = (x - b) * exp(-log_s), with
// data-dependent initialization from the first inference batch (output mean 0,
// population std 1 per dimension).
class ActNorm final : public Layer {
 public:
  explicit ActNorm(std::size_t dim) : dim_(dim) {
    log_s_ = ad::leaf(Tensor::zeros({dim}));
    b_ = ad::leaf(Tensor::zeros({dim}));
  }

  std::string kind() const override { return "actnorm"; }
  std::size_t in_dim() const override { return dim_; }
  std::size_t out_dim() const override { return dim_; }
  bool exact() const override { return true; }
  bool initialized() const { return initialized_; }
  void mark_initialized() { initialized_ = true; }

  StepResult inference(const ad::NodePtr& x, Rng&) override {
    detail::check_input("actnorm", x, dim_);
    if (!initialized_) initialize_from(x->value);
    auto inv_s = ad::exp(ad::neg(log_s_));
    auto out = ad::affine(x, inv_s, ad::neg(ad::mul(b_, inv_s)));
    auto v = ad::neg(detail::broadcast_rows(ad::sum(log_s_), x->value.rows()));
    return {out, v};
  }

  StepResult generative(const ad::NodePtr& z, Rng&) override {
    detail::check_input("actnorm", z, dim_);
    if (!initialized_)
      fail("actnorm: generative pass before data-dependent initialization");
    auto out = ad::affine(z, ad::exp(log_s_), b_);
    auto v = detail::broadcast_rows(ad::sum(log_s_), z->value.rows());
    return {out, v};
  }

  void collect_parameters(ad::ParamMap& out, const std::string& prefix) const override {
    out.emplace(prefix + ".log_s", log_s_);
    out.emplace(prefix + ".b", b_);
  }

 private:
  void initialize_from(const Tensor& batch) {
    const std::size_t n = batch.rows();
    if (n < 2) fail("actnorm: initialization batch needs at least 2 examples");
    for (std::size_t j = 0; j < dim_; ++j) {
      double m = 0;
      for (std::size_t i = 0; i < n; ++i) m += batch.data[i * dim_ + j];
      m /= static_cast<double>(n);
      double var = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = batch.data[i * dim_ + j] - m;
        var += d * d;
      }
      var /= static_cast<double>(n);
      if (var <= 0) fail("actnorm: zero variance in initialization batch, dimension ", j);
      b_->value.data[j] = m;
      log_s_->value.data[j] = 0.5 * std::log(var);
    }
    initialized_ = true;
  }

  std::size_t dim_;
  ad::NodePtr log_s_, b_;
  bool initialized_ = false;
};

// Fixed elementwise bijections.  The generative map is the named function
// (x = a*z+b, x = sigmoid(z), x = softplus(z)); inference applies the inverse
// with the exact change-of-variables term.  Inputs within the clamp margin of
// a domain boundary are clamped; beyond it they are an error.
class ElementwiseBijection final : public Layer {
 public:
  enum class Map { Affine, Sigmoid, Softplus };
  static constexpr double kClampMargin = 1e-6;

  ElementwiseBijection(Map map, std::size_t dim, double a = 1.0, double b = 0.0)
      : map_(map), dim_(dim), a_(a), b_(b) {
    if (map == Map::Affine && a == 0.0) fail("affine_bijection: requires a != 0");
  }

  std::string kind() const override {
    switch (map_) {
      case Map::Affine: return "affine_bijection";
      case Map::Sigmoid: return "sigmoid_bijection";
      case Map::Softplus: return "softplus_bijection";
    }
    return {};
  }
  std::size_t in_dim() const override { return dim_; }
  std::size_t out_dim() const override { return dim_; }
  bool exact() const override { return true; }

  StepResult inference(const ad::NodePtr& x, Rng&) override {
    detail::check_input(kind().c_str(), x, dim_);
    const std::size_t n = x->value.rows();
    const double d = static_cast<double>(dim_);
    switch (map_) {
      case Map::Affine: {
        auto z = ad::cscale(ad::cadd(x, -b_), 1.0 / a_);
        auto v = ad::constant(Tensor::full({n}, -d * std::log(std::abs(a_))));
        return {z, v};
      }
      case Map::Sigmoid: {
        // z = logit(x), V = sum -log x - log(1-x)
        for (double xv : x->value.data)
          if (xv < -kClampMargin || xv > 1.0 + kClampMargin)
            fail("sigmoid_bijection: inference input ", xv, " outside (0,1) beyond clamp margin");
        auto xc = clamp(x, kClampMargin, 1.0 - kClampMargin);
        auto one_minus = ad::sub(ad::constant(1.0), xc);
        auto z = ad::sub(ad::log(xc), ad::log(one_minus));
        auto v = ad::neg(ad::rowsum(ad::add(ad::log(xc), ad::log(one_minus))));
        return {z, v};
      }
      case Map::Softplus: {
        // z = x + log(1 - exp(-x)), V = sum -log(1 - exp(-x)), domain x > 0
        for (double xv : x->value.data)
          if (xv < -kClampMargin)
            fail("softplus_bijection: inference input ", xv, " outside (0,inf) beyond clamp margin");
        auto xc = clamp_below(x, kClampMargin);
        auto one_minus = ad::sub(ad::constant(1.0), ad::exp(ad::neg(xc)));
        auto z = ad::add(xc, ad::log(one_minus));
        auto v = ad::neg(ad::rowsum(ad::log(one_minus)));
        return {z, v};
      }
    }
    fail("elementwise_bijection: unreachable");
  }

  StepResult generative(const ad::NodePtr& z, Rng&) override {
    detail::check_input(kind().c_str(), z, dim_);
    const std::size_t n = z->value.rows();
    const double d = static_cast<double>(dim_);
    switch (map_) {
      case Map::Affine: {
        auto x = ad::cadd(ad::cscale(z, a_), b_);
        auto v = ad::constant(Tensor::full({n}, d * std::log(std::abs(a_))));
        return {x, v};
      }
      case Map::Sigmoid: {
        auto x = ad::sigmoid(z);
        // log|dx/dz| = log x + log(1-x)
        auto v = ad::rowsum(ad::add(ad::log(x), ad::log(ad::sub(ad::constant(1.0), x))));
        return {x, v};
      }
      case Map::Softplus: {
        auto x = ad::softplus(z);
        auto v = ad::rowsum(ad::log(ad::sub(ad::constant(1.0), ad::exp(ad::neg(x)))));
        return {x, v};
      }
    }
    fail("elementwise_bijection: unreachable");
  }

 private:
  // max(x, lo) and min(max(x, lo), hi) through relu so gradients stay defined.
  static ad::NodePtr clamp_below(const ad::NodePtr& x, double lo) {
    return ad::cadd(ad::relu(ad::cadd(x, -lo)), lo);
  }
  static ad::NodePtr clamp(const ad::NodePtr& x, double lo, double hi) {
    auto low = clamp_below(x, lo);
    return ad::sub(ad::constant(hi), ad::relu(ad::sub(ad::constant(hi), low)));
  }

  Map map_;
  std::size_t dim_;
  double a_, b_;
};

// Fixed feature permutation z_j = x_{perm[j]}; volume preserving.
class FixedPermutation final : public Layer {
 public:
  FixedPermutation(std::vector<std::size_t> perm, std::string kind = "fixed_permutation")
      : perm_(std::move(perm)), kind_(std::move(kind)) {
    const std::size_t d = perm_.size();
    std::vector<bool> seen(d, false);
    for (auto p : perm_) {
      if (p >= d || seen[p]) fail("fixed_permutation: not a permutation of 0..", d - 1);
      seen[p] = true;
    }
    inverse_.resize(d);
    for (std::size_t j = 0; j < d; ++j) inverse_[perm_[j]] = j;
  }

  static FixedPermutation reverse(std::size_t dim) {
    std::vector<std::size_t> p(dim);
    for (std::size_t j = 0; j < dim; ++j) p[j] = dim - 1 - j;
    return FixedPermutation(std::move(p), "reverse_permutation");
  }
  static FixedPermutation random(std::size_t dim, Rng& rng) {
    std::vector<std::size_t> p(dim);
    std::iota(p.begin(), p.end(), std::size_t{0});
    rng.shuffle(p);
    return FixedPermutation(std::move(p), "random_permutation");
  }

  std::string kind() const override { return kind_; }
  std::size_t in_dim() const override { return perm_.size(); }
  std::size_t out_dim() const override { return perm_.size(); }
  bool exact() const override { return true; }

  StepResult inference(const ad::NodePtr& x, Rng&) override {
    detail::check_input("fixed_permutation", x, perm_.size());
    return {detail::permute_columns(x, perm_), ad::constant(Tensor::zeros({x->value.rows()}))};
  }
  StepResult generative(const ad::NodePtr& z, Rng&) override {
    detail::check_input("fixed_permutation", z, perm_.size());
    return {detail::permute_columns(z, inverse_), ad::constant(Tensor::zeros({z->value.rows()}))};
  }

  const std::vector<std::size_t>& perm() const { return perm_; }

 private:
  std::vector<std::size_t> perm_, inverse_;
  std::string kind_;
};

}  // namespace survae::layers
