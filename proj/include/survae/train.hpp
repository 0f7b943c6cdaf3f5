#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "survae/flow.hpp"

namespace survae::train {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t iterations = 10000;
  std::size_t batch_size = 128;
  std::size_t warmup_iters = 2000;
  double decay_per_epoch = 0.995;
  std::size_t iters_per_epoch = 1000;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr > 0)) fail("train config: lr must be positive");
    if (batch_size < 1) fail("train config: batch size must be >= 1");
  }
};

// Linear warmup from 0 to lr over warmup_iters, then multiplicative decay at
// every epoch boundary past the warmup.
inline double lr_at(const TrainConfig& c, std::size_t iteration) {
  if (c.warmup_iters > 0 && iteration < c.warmup_iters)
    return c.lr * static_cast<double>(iteration) / static_cast<double>(c.warmup_iters);
  const std::size_t epochs =
      c.iters_per_epoch > 0 ? (iteration - c.warmup_iters) / c.iters_per_epoch : 0;
  return c.lr * std::pow(c.decay_per_epoch, static_cast<double>(epochs));
}

// ---------------------------------------------------------------------------
// Adam with bias correction (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
// ---------------------------------------------------------------------------
class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  Adam() = default;
  explicit Adam(const ad::ParamMap& params) {
    for (const auto& [name, node] : params) {
      m_.emplace(name, Tensor::zeros(node->value.shape));
      v_.emplace(name, Tensor::zeros(node->value.shape));
    }
  }

  void step(const ad::ParamMap& params, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (const auto& [name, node] : params) {
      auto mi = m_.find(name);
      auto vi = v_.find(name);
      if (mi == m_.end() || vi == v_.end()) fail("adam: unknown parameter '", name, "'");
      if (!node->has_grad || !mi->second.same_shape(node->grad))
        fail("adam: parameter '", name, "' has no gradient of the right shape");
      auto& m = mi->second;
      auto& v = vi->second;
      for (std::size_t i = 0; i < m.numel(); ++i) {
        const double g = node->grad.data[i];
        m.data[i] = kBeta1 * m.data[i] + (1.0 - kBeta1) * g;
        v.data[i] = kBeta2 * v.data[i] + (1.0 - kBeta2) * g * g;
        const double mhat = m.data[i] / c1;
        const double vhat = v.data[i] / c2;
        node->value.data[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
      }
    }
  }

  std::size_t step_count() const { return t_; }
  const std::map<std::string, Tensor>& first_moments() const { return m_; }
  const std::map<std::string, Tensor>& second_moments() const { return v_; }
  void restore(std::map<std::string, Tensor> m, std::map<std::string, Tensor> v, std::size_t t) {
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

 private:
  std::map<std::string, Tensor> m_, v_;
  std::size_t t_ = 0;
};

inline double global_grad_norm(const ad::ParamMap& params) {
  double sq = 0.0;
  for (const auto& [name, node] : params) {
    if (!node->has_grad) continue;
    for (double g : node->grad.data) sq += g * g;
  }
  return std::sqrt(sq);
}

inline void clip_grads(const ad::ParamMap& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (const auto& [name, node] : params)
    if (node->has_grad)
      for (double& g : node->grad.data) g *= s;
}

// ---------------------------------------------------------------------------
// Training loop.  Batches are drawn i.i.d. with replacement; iteration i uses
// its own random stream derived from (seed, i) for both the batch indices and
// any stochastic layer draws, so a resumed run is bitwise identical to an
// uninterrupted one and a divergence report can name the exact batch stream.
// ---------------------------------------------------------------------------

struct TraceRow {
  std::size_t iteration;
  double lr;
  double mean_nats;
};

struct TrainerState {
  Adam adam;
  std::size_t iteration = 0;
};

constexpr double kGradClipNorm = 10.0;

inline void train(Flow& flow, const Tensor& dataset, const TrainConfig& config,
                  TrainerState& state, std::vector<TraceRow>& trace) {
  config.validate();
  if (dataset.rows() == 0 || dataset.cols() != flow.data_dim())
    fail("train: dataset shape ", shape_str(dataset.shape), " does not match flow data dim ",
         flow.data_dim());
  ad::ParamMap params = flow.parameters();
  if (state.adam.first_moments().empty()) state.adam = Adam(params);

  const std::size_t d = dataset.cols();
  for (std::size_t it = state.iteration; it < config.iterations; ++it) {
    const std::uint64_t batch_seed = mix_seed(config.seed, it);
    Rng rng(batch_seed);
    Tensor batch = Tensor::zeros({config.batch_size, d});
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const std::size_t row = rng.uniform_int(dataset.rows());
      std::copy_n(dataset.data.begin() + static_cast<std::ptrdiff_t>(row * d), d,
                  batch.data.begin() + static_cast<std::ptrdiff_t>(b * d));
    }

    auto loss = ad::neg(ad::mean(flow.log_prob_node(batch, rng)));
    const double nats = loss->value.item();
    if (!std::isfinite(nats))
      fail("training diverged at iteration ", it, " (objective ", nats, ", batch seed ",
           batch_seed, ")");

    ad::zero_grads(params);
    ad::backward(loss);
    clip_grads(params, kGradClipNorm);
    state.adam.step(params, lr_at(config, it));
    state.iteration = it + 1;

    if (it % 100 == 0 || it + 1 == config.iterations)
      trace.push_back({it, lr_at(config, it), nats});
  }
}

inline void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) fail("cannot open '", path, "' for writing");
  out << "iteration,lr,mean_nats\n";
  char buf[64];
  for (const auto& row : trace) {
    out << row.iteration << ',';
    std::snprintf(buf, sizeof buf, "%.17g", row.lr);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", row.mean_nats);
    out << buf << '\n';
  }
  if (!out) fail("failed writing '", path, "'");
}

}  // namespace survae::train
