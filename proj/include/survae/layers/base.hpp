#pragma once

#include <memory>
#include <string>

#include "survae/ad.hpp"
#include "survae/rng.hpp"

namespace survae::layers {

struct StepResult {
  ad::NodePtr output;
  // Per-example likelihood contribution [n].  Inference passes always carry
  // it; generative passes carry the generative-direction log|det| for
  // bijections and null for everything else (sampling only).
  ad::NodePtr v;
};

// A composable transform step.  The inference direction (X -> Z) produces the
// likelihood contribution consumed by the flow's log-probability loop; the
// generative direction (Z -> X) produces samples.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual StepResult inference(const ad::NodePtr& x, Rng& rng) = 0;
  virtual StepResult generative(const ad::NodePtr& z, Rng& rng) = 0;
  virtual std::size_t in_dim() const = 0;   // inference-side input width
  virtual std::size_t out_dim() const = 0;  // inference-side output width
  // True when the inference-direction contribution is a deterministic,
  // exact log-likelihood term (bijections and inference-direction
  // surjections); false when it is a single-sample stochastic bound term.
  virtual bool exact() const = 0;
  virtual void collect_parameters(ad::ParamMap&, const std::string&) const {}
};

using LayerPtr = std::shared_ptr<Layer>;

namespace detail {

inline void check_input(const char* kind, const ad::NodePtr& x, std::size_t d) {
  if (x->value.ndim() != 2 || x->value.cols() != d)
    fail(kind, ": input shape ", shape_str(x->value.shape), " incompatible with width ", d);
}

// Likelihood-contribution vector holding the same scalar for every example,
// wired to the given scalar node so gradients flow.
inline ad::NodePtr broadcast_rows(const ad::NodePtr& scalar, std::size_t n) {
  return ad::mul(ad::constant(Tensor::full({n}, 1.0)), scalar);
}

inline double sign_of(double x) { return x >= 0.0 ? 1.0 : -1.0; }  // sign(0) := +1

// Per-row column permutation out[:,j] = in[:,src[j]], built from split+concat
// so gradients flow through existing primitives.
inline ad::NodePtr permute_columns(const ad::NodePtr& x, const std::vector<std::size_t>& src) {
  const std::size_t d = x->value.cols();
  std::vector<std::size_t> widths(d, 1);
  auto cols = ad::split(x, widths);
  std::vector<ad::NodePtr> picked(d);
  for (std::size_t j = 0; j < d; ++j) picked[j] = cols[src[j]];
  return ad::concat(picked);
}

// Row-dependent column pick z[:,j] = x[i, idx[i][j]] via per-column gathers.
inline ad::NodePtr permute_columns_rowwise(const ad::NodePtr& x,
                                           const std::vector<std::vector<std::size_t>>& idx) {
  const std::size_t n = x->value.rows(), d = x->value.cols();
  std::vector<ad::NodePtr> cols(d);
  std::vector<std::size_t> pick(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) pick[i] = idx[i][j];
    cols[j] = ad::reshape(ad::gather(x, pick), {n, 1});
  }
  return ad::concat(cols);
}

}  // namespace detail

}  // namespace survae::layers
