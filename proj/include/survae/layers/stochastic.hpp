#pragma once

#include <memory>
#include <vector>

#include "survae/dist.hpp"
#include "survae/layers/base.hpp"
#include "survae/layers/surjections.hpp"
#include "survae/linalg.hpp"
#include "survae/nn.hpp"

namespace survae::layers {

// ---------------------------------------------------------------------------
// Stochastic permutation: both directions shuffle the columns of each row
// uniformly at random.  Forward and inverse kernels are both uniform over
// the d! permutations, so the likelihood contribution is identically zero.
// ---------------------------------------------------------------------------
class StochasticPermutation final : public Layer {
 public:
  explicit StochasticPermutation(std::size_t dim) : dim_(dim) {
    if (dim_ < 2) fail("stochastic_permutation: needs width >= 2, got ", dim_);
  }

  std::string kind() const override { return "stochastic_permutation"; }
  std::size_t in_dim() const override { return dim_; }
  std::size_t out_dim() const override { return dim_; }
  bool exact() const override { return false; }

  StepResult inference(const ad::NodePtr& x, Rng& rng) override {
    detail::check_input("stochastic_permutation", x, dim_);
    const std::size_t n = x->value.rows();
    return {shuffle_rows(x, rng), ad::constant(Tensor::zeros({n}))};
  }

  StepResult generative(const ad::NodePtr& z, Rng& rng) override {
    detail::check_input("stochastic_permutation", z, dim_);
    return {shuffle_rows(z, rng), nullptr};
  }

 private:
  ad::NodePtr shuffle_rows(const ad::NodePtr& a, Rng& rng) const {
    const std::size_t n = a->value.rows();
    std::vector<std::vector<std::size_t>> idx(n);
    for (auto& p : idx) p = perms::random_perm(dim_, rng);
    return detail::permute_columns_rowwise(a, idx);
  }

  std::size_t dim_;
};

// ---------------------------------------------------------------------------
// VAE layer: stochastic in both directions with learned conditional diagonal
// normals.  V = log p(x|z) - log q(z|x), the classic single-sample ELBO
// integrand; the latent sample is reparameterized so gradients flow through
// both networks.
// ---------------------------------------------------------------------------
class VaeLayer final : public Layer {
 public:
  VaeLayer(Rng& rng, std::size_t data_dim, std::size_t latent_dim,
           const std::vector<std::size_t>& enc_hidden,
           const std::vector<std::size_t>& dec_hidden)
      : data_dim_(data_dim), latent_dim_(latent_dim) {
    std::vector<std::size_t> enc{data_dim};
    enc.insert(enc.end(), enc_hidden.begin(), enc_hidden.end());
    enc.push_back(2 * latent_dim);
    std::vector<std::size_t> dec{latent_dim};
    dec.insert(dec.end(), dec_hidden.begin(), dec_hidden.end());
    dec.push_back(2 * data_dim);
    encoder_ = std::make_shared<dist::ConditionalDiagonalNormal>(
        nn::Mlp::create(rng, enc, /*zero_init_last=*/true), latent_dim);
    decoder_ = std::make_shared<dist::ConditionalDiagonalNormal>(
        nn::Mlp::create(rng, dec, /*zero_init_last=*/true), data_dim);
  }

  std::string kind() const override { return "vae"; }
  std::size_t in_dim() const override { return data_dim_; }
  std::size_t out_dim() const override { return latent_dim_; }
  bool exact() const override { return false; }

  StepResult inference(const ad::NodePtr& x, Rng& rng) override {
    detail::check_input("vae", x, data_dim_);
    auto enc = encoder_->sample_with_log_prob(rng, x->value.rows(), x);
    auto v = ad::sub(decoder_->log_prob(x, enc.value), enc.log_prob);
    return {enc.value, v};
  }

  StepResult generative(const ad::NodePtr& z, Rng& rng) override {
    detail::check_input("vae", z, latent_dim_);
    auto s = decoder_->sample_with_log_prob(rng, z->value.rows(), z);
    return {s.value, nullptr};
  }

  void collect_parameters(ad::ParamMap& out, const std::string& prefix) const override {
    encoder_->collect_parameters(out, prefix + ".encoder");
    decoder_->collect_parameters(out, prefix + ".decoder");
  }

  dist::ConditionalDiagonalNormal& encoder() { return *encoder_; }
  dist::ConditionalDiagonalNormal& decoder() { return *decoder_; }

 private:
  std::size_t data_dim_, latent_dim_;
  std::shared_ptr<dist::ConditionalDiagonalNormal> encoder_;
  std::shared_ptr<dist::ConditionalDiagonalNormal> decoder_;
};

// ---------------------------------------------------------------------------
// Probabilistic PCA layer: x = z W^T + sigma * eps with fixed W [D,L] and
// noise scale sigma.  The inference direction samples from the exact
// posterior q(z|x) = N(M^{-1} W^T x, sigma^2 M^{-1}), M = W^T W + sigma^2 I,
// which makes V + log p_base(z) equal to the analytic Gaussian marginal for
// every draw — the bound has zero gap and the per-sample estimator has zero
// variance.  W and sigma are fixed model constants, not trained parameters.
// ---------------------------------------------------------------------------
class PpcaLayer final : public Layer {
 public:
  PpcaLayer(Tensor w, double sigma) : w_(std::move(w)), sigma_(sigma) {
    if (w_.shape.size() != 2) fail("ppca: weight matrix must be 2-D");
    data_dim_ = w_.rows();
    latent_dim_ = w_.cols();
    if (latent_dim_ == 0 || data_dim_ < latent_dim_)
      fail("ppca: need data dim >= latent dim >= 1, got ", data_dim_, " x ", latent_dim_);
    if (!(sigma_ > 0)) fail("ppca: noise scale must be positive, got ", sigma_);

    // M = W^T W + sigma^2 I and the exact posterior's fixed pieces.
    Tensor m = matmul_value(transpose_value(w_), w_);
    for (std::size_t i = 0; i < latent_dim_; ++i)
      m.data[i * latent_dim_ + i] += sigma_ * sigma_;
    Tensor m_chol = linalg::cholesky_lower(m, "ppca");
    Tensor m_inv = linalg::cholesky_inverse(m_chol);
    Tensor post_cov = m_inv;
    for (auto& v : post_cov.data) v *= sigma_ * sigma_;
    post_chol_ = linalg::cholesky_lower(post_cov, "ppca posterior");
    post_logdet_ = linalg::cholesky_logdet(post_chol_);
    proj_ = matmul_value(w_, m_inv);  // x [n,D] @ proj -> posterior mean [n,L]
    wt_ = transpose_value(w_);
  }

  std::string kind() const override { return "ppca"; }
  std::size_t in_dim() const override { return data_dim_; }
  std::size_t out_dim() const override { return latent_dim_; }
  bool exact() const override { return false; }

  StepResult inference(const ad::NodePtr& x, Rng& rng) override {
    detail::check_input("ppca", x, data_dim_);
    const std::size_t n = x->value.rows();
    auto mean = ad::matmul(x, ad::constant(proj_));
    Tensor eps = rng.normal_tensor({n, latent_dim_});
    // z = mean + eps L^T (rows), so z - mean is constant along the sampling
    // path and log q reduces to the standardized normal of eps.
    Tensor noise = matmul_value(eps, transpose_value(post_chol_));
    auto z = ad::add(mean, ad::constant(std::move(noise)));
    Tensor logq = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) {
      double quad = 0.0;
      for (std::size_t j = 0; j < latent_dim_; ++j) {
        const double e = eps.data[i * latent_dim_ + j];
        quad += e * e;
      }
      logq.data[i] =
          -0.5 * quad - 0.5 * (static_cast<double>(latent_dim_) * kLog2Pi + post_logdet_);
    }
    auto recon = ad::sub(x, ad::matmul(z, ad::constant(wt_)));
    auto logp = ad::cadd(ad::cscale(ad::rowsum(ad::square(recon)), -0.5 / (sigma_ * sigma_)),
                         -0.5 * static_cast<double>(data_dim_) * kLog2Pi -
                             static_cast<double>(data_dim_) * std::log(sigma_));
    return {z, ad::sub(logp, ad::constant(std::move(logq)))};
  }

  StepResult generative(const ad::NodePtr& z, Rng& rng) override {
    detail::check_input("ppca", z, latent_dim_);
    const std::size_t n = z->value.rows();
    Tensor noise = rng.normal_tensor({n, data_dim_});
    for (auto& v : noise.data) v *= sigma_;
    return {ad::add(ad::matmul(z, ad::constant(wt_)), ad::constant(std::move(noise))), nullptr};
  }

  const Tensor& weight() const { return w_; }
  double noise_scale() const { return sigma_; }
  // Posterior moments, exposed for direct inspection in tests.
  Tensor posterior_mean(const Tensor& x) const { return matmul_value(x, proj_); }
  Tensor posterior_cov() const { return matmul_value(post_chol_, transpose_value(post_chol_)); }

 private:
  Tensor w_;
  double sigma_;
  std::size_t data_dim_, latent_dim_;
  Tensor post_chol_, proj_, wt_;
  double post_logdet_ = 0.0;
};

}  // namespace survae::layers
