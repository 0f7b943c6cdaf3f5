#pragma once

#include <cstdlib>
#include <iomanip>
#include <sstream>
#include <thread>
#include <vector>

#include "survae/dist.hpp"
#include "survae/layers.hpp"

namespace survae {

// A flow is an ordered stack of layers (data side first) over a base
// distribution.  The log-likelihood estimate of a batch is the sum of the
// per-layer contributions collected while walking the stack in the inference
// direction, plus the base log-density of the final representation.  When
// every layer is exact the estimate is the exact log-density; otherwise it is
// a stochastic lower bound.
class Flow {
 public:
  Flow(dist::DistPtr base, std::vector<layers::LayerPtr> stack)
      : base_(std::move(base)), layers_(std::move(stack)) {
    if (!base_) fail("flow: missing base distribution");
    std::size_t cur = layers_.empty() ? base_->event_dim() : layers_.front()->in_dim();
    data_dim_ = cur;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i]->in_dim() != cur)
        fail("flow: layer ", i, " ('", layers_[i]->kind(), "') expects width ",
             layers_[i]->in_dim(), " but receives ", cur);
      cur = layers_[i]->out_dim();
    }
    if (cur != base_->event_dim())
      fail("flow: final layer width ", cur, " does not match base event dim ",
           base_->event_dim());
  }

  std::size_t data_dim() const { return data_dim_; }
  std::size_t base_dim() const { return base_->event_dim(); }
  const std::vector<layers::LayerPtr>& layers() const { return layers_; }
  dist::Distribution& base() { return *base_; }
  const dist::Distribution& base() const { return *base_; }

  bool exact() const {
    for (const auto& l : layers_)
      if (!l->exact()) return false;
    return true;
  }

  // Per-example log-likelihood estimate as a graph node (shape [n]).
  ad::NodePtr log_prob_node(const Tensor& x, Rng& rng) const {
    if (x.shape.size() != 2 || x.cols() != data_dim_)
      fail("flow: expected input of shape [n,", data_dim_, "], got ", shape_str(x.shape));
    ad::NodePtr h = ad::constant(x);
    ad::NodePtr v = ad::constant(Tensor::zeros({x.rows()}));
    for (const auto& l : layers_) {
      auto r = l->inference(h, rng);
      if (r.v) v = ad::add(v, r.v);
      h = r.output;
    }
    return ad::add(v, base_->log_prob(h, nullptr));
  }

  Tensor log_prob(const Tensor& x, Rng& rng) const { return log_prob_node(x, rng)->value; }

  // Draws n examples by sampling the base and walking the stack generatively.
  Tensor sample(Rng& rng, std::size_t n) const {
    ad::NodePtr h = ad::constant(base_->sample(rng, n, nullptr));
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      h = (*it)->generative(h, rng).output;
    return h->value;
  }

  // k-sample bounds per example, from one shared set of estimates: the mean
  // is the averaged single-sample bound, the log-mean-exp the importance
  // weighted bound.  Estimate j uses its own stream derived from (seed, j),
  // so results are bitwise independent of the worker-thread count
  // (SURVAE_THREADS, default 1).
  struct BoundPair {
    Tensor elbo;  // [n]
    Tensor iwbo;  // [n]
  };

  BoundPair bounds(const Tensor& x, std::size_t k, std::uint64_t seed) const {
    if (k == 0) fail("flow: bound estimate needs k >= 1");
    const std::size_t n = x.rows();
    Tensor w = Tensor::zeros({k, n});
    auto eval_one = [&](std::size_t j) {
      Rng rng(mix_seed(seed, j));
      Tensor lp = log_prob(x, rng);
      std::copy(lp.data.begin(), lp.data.end(), w.data.begin() + static_cast<std::ptrdiff_t>(j * n));
    };
    // The first estimate runs serially so any data-dependent one-time layer
    // initialization happens deterministically before workers start.
    eval_one(0);
    const std::size_t workers = std::min(worker_count(), k > 1 ? k - 1 : 1);
    if (workers <= 1) {
      for (std::size_t j = 1; j < k; ++j) eval_one(j);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < workers; ++t)
        pool.emplace_back([&, t] {
          for (std::size_t j = 1 + t; j < k; j += workers) eval_one(j);
        });
      for (auto& th : pool) th.join();
    }
    BoundPair out{Tensor::zeros({n}), Tensor::zeros({n})};
    for (std::size_t i = 0; i < n; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) m = std::max(m, w.data[j * n + i]);
      double sum = 0.0, sum_exp = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        sum += w.data[j * n + i];
        sum_exp += std::exp(w.data[j * n + i] - m);
      }
      out.elbo.data[i] = sum / static_cast<double>(k);
      out.iwbo.data[i] = m + std::log(sum_exp / static_cast<double>(k));
    }
    return out;
  }

  Tensor iwbo(const Tensor& x, std::size_t k, std::uint64_t seed) const {
    return bounds(x, k, seed).iwbo;
  }

  // All trainable parameters, keyed layer_<index>.<kind>.<name>.
  ad::ParamMap parameters() const {
    ad::ParamMap out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      std::ostringstream prefix;
      prefix << "layer_" << std::setw(2) << std::setfill('0') << i << '.' << layers_[i]->kind();
      layers_[i]->collect_parameters(out, prefix.str());
    }
    base_->collect_parameters(out, "base");
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (const auto& [name, node] : parameters()) total += node->value.numel();
    return total;
  }

  static std::size_t worker_count() {
    const char* env = std::getenv("SURVAE_THREADS");
    if (!env) return 1;
    const long v = std::strtol(env, nullptr, 10);
    return v > 1 ? static_cast<std::size_t>(v) : 1;
  }

 private:
  dist::DistPtr base_;
  std::vector<layers::LayerPtr> layers_;
  std::size_t data_dim_ = 0;
};

using FlowPtr = std::shared_ptr<Flow>;

}  // namespace survae
