#pragma once

#include <functional>
#include <string>

#include "survae/ad.hpp"

namespace survae::ad {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

// Compares backward-pass gradients against central finite differences for
// every component of every parameter.  `f` must rebuild a fresh scalar tape
// over the given leaves on each call; stochastic evaluations must replay a
// recorded noise bundle so f is a deterministic function of the parameters.
// The reported error is |analytic - numeric| / max(|analytic|, |numeric|,
// abs_floor/rel_floor), i.e. relative with an absolute floor near zero.
inline GradCheckReport finite_diff_check(const std::function<NodePtr()>& f, const ParamMap& params,
                                         double eps = 1e-5, double denom_floor = 1e-3) {
  zero_grads(params);
  backward(f());
  std::map<std::string, Tensor> analytic;
  for (const auto& [name, p] : params) analytic.emplace(name, p->ensure_grad());

  GradCheckReport report;
  for (const auto& [name, p] : params) {
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double saved = p->value.data[i];
      p->value.data[i] = saved + eps;
      const double up = f()->value.item();
      p->value.data[i] = saved - eps;
      const double down = f()->value.item();
      p->value.data[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double ana = analytic.at(name).data[i];
      const double denom = std::max({std::abs(ana), std::abs(numeric), denom_floor});
      const double err = std::abs(ana - numeric) / denom;
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst_param = name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace survae::ad
