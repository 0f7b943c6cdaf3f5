#pragma once

#include <functional>
#include <map>
#include <string>

#include <json.hpp>

#include "survae/layers.hpp"

namespace survae::registry {

using nlohmann::json;

// Human-facing documentation for one layer kind; rendered into the generated
// catalog.  Every registered kind must fill in all fields — rendering fails
// otherwise, which turns missing docs into a build error.
struct LayerDoc {
  std::string classification;  // bijection / inference surjection / ...
  std::string forward;         // deterministic or sampled maps, both ways
  std::string contribution;    // the V term added to the log-likelihood
  std::string verification;    // how tests check it independently
};

struct Entry {
  LayerDoc doc;
  std::function<layers::LayerPtr(const json&, Rng&)> make;
};

namespace detail {

inline std::size_t req_size(const json& j, const char* key, const std::string& kind) {
  if (!j.contains(key)) fail("layer '", kind, "': missing required field '", key, "'");
  const auto& v = j.at(key);
  // json built from C++ int literals stores them signed, parsed text stores
  // them unsigned; accept either representation as long as the value is >= 1.
  if (!v.is_number_integer() || v.get<long long>() <= 0)
    fail("layer '", kind, "': field '", key, "' must be a positive integer");
  return v.get<std::size_t>();
}

inline double opt_double(const json& j, const char* key, double def) {
  return j.contains(key) ? j.at(key).get<double>() : def;
}

inline std::string opt_string(const json& j, const char* key, const std::string& def) {
  return j.contains(key) ? j.at(key).get<std::string>() : def;
}

inline std::vector<std::size_t> opt_sizes(const json& j, const char* key,
                                          std::vector<std::size_t> def) {
  if (!j.contains(key)) return def;
  std::vector<std::size_t> out;
  for (const auto& v : j.at(key)) out.push_back(v.get<std::size_t>());
  return out;
}

inline layers::Orientation orientation_of(const std::string& kind) {
  if (kind.ends_with("_inference")) return layers::Orientation::Inference;
  if (kind.ends_with("_generative")) return layers::Orientation::Generative;
  fail("layer kind '", kind, "': expected an _inference or _generative suffix");
}

}  // namespace detail

inline dist::DistPtr make_slice_aux(const json& j, Rng& rng, std::size_t keep, std::size_t extra,
                                    const std::string& kind);

class Registry {
 public:
  static Registry& instance() {
    static Registry r;
    return r;
  }

  const std::map<std::string, Entry>& entries() const { return entries_; }

  layers::LayerPtr create(const json& spec, Rng& rng) const {
    if (!spec.contains("kind")) fail("layer spec missing 'kind': ", spec.dump());
    const std::string kind = spec.at("kind").get<std::string>();
    auto it = entries_.find(kind);
    if (it == entries_.end()) fail("unknown layer kind '", kind, "'");
    return it->second.make(spec, rng);
  }

 private:
  Registry() { register_all(); }

  void add(const std::string& kind, LayerDoc doc,
           std::function<layers::LayerPtr(const json&, Rng&)> make) {
    entries_.emplace(kind, Entry{std::move(doc), std::move(make)});
  }

  void register_all();

  std::map<std::string, Entry> entries_;
};

inline void Registry::register_all() {
  using namespace layers;
  using detail::opt_double;
  using detail::opt_sizes;
  using detail::opt_string;
  using detail::req_size;

  add("affine_coupling",
      {"bijection",
       "Splits the vector in half; the second half is shifted and scaled by networks of the "
       "first half (scale bounded via 2*tanh). Invertible in closed form.",
       "Negative row sum of the log scales in the inference direction (the exact "
       "log-Jacobian determinant).",
       "Finite-difference gradient checks on all network weights; inverse consistency; "
       "log-density cross-checked against importance-weighted estimates."},
      [](const json& j, Rng& rng) {
        return std::make_shared<AffineCoupling>(
            rng, req_size(j, "dim", "affine_coupling"),
            opt_sizes(j, "hidden", {200, 100}));
      });

  add("actnorm",
      {"bijection",
       "Per-dimension affine map z = (x - b) * exp(-log_s), data-initialized on its first "
       "batch to give zero mean and unit variance.",
       "Negative sum of log scales, identical for every row (exact log-Jacobian).",
       "Closed-form Jacobian comparison, inverse consistency, and data-dependent "
       "initialization statistics checked directly."},
      [](const json& j, Rng&) {
        return std::make_shared<ActNorm>(req_size(j, "dim", "actnorm"));
      });

  add("affine_bijection",
      {"bijection",
       "Fixed elementwise affine map x = a*z + b with a nonzero.",
       "Constant -d*log|a| in the inference direction.",
       "Exact closed-form density comparison for Gaussians under affine maps."},
      [](const json& j, Rng&) {
        return std::make_shared<ElementwiseBijection>(
            ElementwiseBijection::Map::Affine, req_size(j, "dim", "affine_bijection"),
            opt_double(j, "scale", 1.0), opt_double(j, "shift", 0.0));
      });

  add("sigmoid_bijection",
      {"bijection",
       "Elementwise logistic squashing x = sigmoid(z); the inference direction is the logit "
       "map with inputs required to lie in the open unit interval.",
       "Negative row sum of log x + log(1-x) in the inference direction.",
       "Exact density comparison against the closed-form logistic-normal density."},
      [](const json& j, Rng&) {
        return std::make_shared<ElementwiseBijection>(
            ElementwiseBijection::Map::Sigmoid, req_size(j, "dim", "sigmoid_bijection"));
      });

  add("softplus_bijection",
      {"bijection",
       "Elementwise x = softplus(z), mapping the real line to positive values; the inference "
       "direction is its exact inverse z = x + log(1 - exp(-x)).",
       "Negative row sum of log(1 - exp(-x)) in the inference direction.",
       "Exact density comparison for softplus-transformed Gaussians; inverse round trips."},
      [](const json& j, Rng&) {
        return std::make_shared<ElementwiseBijection>(
            ElementwiseBijection::Map::Softplus, req_size(j, "dim", "softplus_bijection"));
      });

  add("reverse_permutation",
      {"bijection",
       "Reverses the column order; a fixed, volume-preserving rearrangement used between "
       "coupling layers so every dimension gets transformed.",
       "Zero.",
       "Round-trip identity and invariance of the total log-density."},
      [](const json& j, Rng&) {
        return std::make_shared<FixedPermutation>(
            FixedPermutation::reverse(req_size(j, "dim", "reverse_permutation")));
      });

  add("random_permutation",
      {"bijection",
       "A fixed column permutation drawn once at construction time; volume preserving.",
       "Zero.",
       "Round-trip identity and invariance of the total log-density."},
      [](const json& j, Rng& rng) {
        return std::make_shared<FixedPermutation>(
            FixedPermutation::random(req_size(j, "dim", "random_permutation"), rng));
      });

  add("abs_inference",
      {"inference surjection",
       "z = |x| elementwise with the per-dimension signs treated as discarded structure; "
       "the sampled inverse draws signs from the sign model (uniform or a per-dimension "
       "Bernoulli classifier conditioned on z).",
       "log p(s|z): -d*log 2 for the uniform model, the Bernoulli log-likelihood of the "
       "observed signs for the classifier. Exact, no bound gap.",
       "Uniform-sign flows with a folded-normal base must reproduce the standard normal "
       "density exactly; classifier gradients are finite-difference checked."},
      [](const json& j, Rng& rng) -> LayerPtr {
        const auto dim = req_size(j, "dim", "abs_inference");
        if (opt_string(j, "sign_model", "uniform") == "classifier")
          return std::make_shared<AbsSurjection>(Orientation::Inference, dim, rng,
                                                 opt_sizes(j, "hidden", {200, 100}));
        return std::make_shared<AbsSurjection>(Orientation::Inference, dim);
      });

  add("abs_generative",
      {"generative surjection",
       "Generates x = |z|; the inference pass samples signs s ~ q(s|x) and outputs z = s*x.",
       "-log q(s|x): +d*log 2 for the uniform model. Lower bound (the dropped sign "
       "information makes the bound loose in general).",
       "Fiber check: |z| reproduces x bitwise across 1e5 draws; bound behavior is "
       "cross-checked against importance-weighted estimates."},
      [](const json& j, Rng& rng) -> LayerPtr {
        const auto dim = req_size(j, "dim", "abs_generative");
        if (opt_string(j, "sign_model", "uniform") == "classifier")
          return std::make_shared<AbsSurjection>(Orientation::Generative, dim, rng,
                                                 opt_sizes(j, "hidden", {200, 100}));
        return std::make_shared<AbsSurjection>(Orientation::Generative, dim);
      });

  const auto max_factory = [](const json& j, Rng& rng) -> LayerPtr {
    const std::string kind = j.at("kind").get<std::string>();
    const auto orient = detail::orientation_of(kind);
    const auto width = req_size(j, "width", kind);
    const std::string fill_name = opt_string(j, "fill", "half_normal");
    MaxSurjection::Fill fill;
    if (fill_name == "half_normal") {
      fill = MaxSurjection::Fill::HalfNormalDecrement;
    } else if (fill_name == "truncated_normal") {
      fill = MaxSurjection::Fill::TruncatedNormal;
    } else {
      fail("layer '", kind, "': unknown fill '", fill_name, "'");
    }
    const double scale = opt_double(j, "fill_scale", 1.0);
    if (opt_string(j, "index_model", "uniform") == "classifier")
      return std::make_shared<MaxSurjection>(orient, width, fill, scale, rng,
                                             opt_sizes(j, "hidden", {32, 32}));
    return std::make_shared<MaxSurjection>(orient, width, fill, scale);
  };

  add("max_inference",
      {"inference surjection",
       "z = max(x) over the row; the sampled inverse picks the argmax position from the "
       "index model and fills the remaining entries below z from the fill distribution "
       "(half-normal decrement or truncated normal).",
       "log p(k|z) plus the fill log-density of the non-maximal entries. Exact.",
       "With an order-statistic base, truncated-normal fills and a uniform index the flow "
       "must reproduce the i.i.d. standard normal density to 1e-8; fiber checks confirm "
       "fills never exceed the maximum.",},
      max_factory);

  add("max_generative",
      {"generative surjection",
       "Generates x = max(z); the inference pass samples the argmax position and fills the "
       "other entries below x.",
       "-log q(k|x) minus the sampled fills' log-density. Lower bound.",
       "Fiber check: max over the sampled vector reproduces x bitwise; index and classifier "
       "gradients are finite-difference checked.",},
      max_factory);

  const auto sort_factory = [](const json& j, Rng& rng) -> LayerPtr {
    const std::string kind = j.at("kind").get<std::string>();
    const auto orient = detail::orientation_of(kind);
    const auto dim = req_size(j, "dim", kind);
    if (opt_string(j, "perm_model", "uniform") == "classifier")
      return std::make_shared<SortSurjection>(orient, dim, rng, opt_sizes(j, "hidden", {32, 32}));
    return std::make_shared<SortSurjection>(orient, dim);
  };

  add("sort_inference",
      {"inference surjection",
       "z = sort(x) ascending; the discarded argsort permutation is modeled uniformly "
       "(1/d!) or by a categorical classifier over all d! permutations (d <= 5). The "
       "sampled inverse scatters z back through a drawn permutation.",
       "log p(I|z) with I the argsort of x. Exact; makes the density permutation-invariant "
       "by construction.",
       "With a sorted-normal base and the uniform model the flow must reproduce the i.i.d. "
       "standard normal density to 1e-8; permutation invariance is asserted exactly."},
      sort_factory);

  add("sort_generative",
      {"generative surjection",
       "Generates x = sort(z) (naturally ordered data); the inference pass draws a "
       "permutation I ~ q(I|x) and outputs z = x permuted by I.",
       "-log q(I|x). Lower bound.",
       "Fiber check: sorting the permuted vector reproduces x bitwise across draws."},
      sort_factory);

  add("slice_inference",
      {"inference surjection",
       "Keeps the first block of coordinates and drops the rest, scoring the dropped block "
       "under a model conditioned on the kept block (or a fixed distribution). The sampled "
       "inverse re-draws the dropped block.",
       "log p(x_dropped | z). Exact; this is the multi-scale factoring step.",
       "Quadrature cross-check of the joint density on small cases; fiber check on the "
       "kept block."},
      [](const json& j, Rng& rng) -> LayerPtr {
        const auto keep = req_size(j, "keep", "slice_inference");
        const auto extra = req_size(j, "extra", "slice_inference");
        return std::make_shared<SliceSurjection>(
            Orientation::Inference, keep, extra,
            make_slice_aux(j, rng, keep, extra, "slice_inference"),
            opt_string(j, "aux", "standard_normal") == "conditional_normal");
      });

  add("slice_generative",
      {"generative surjection",
       "Augmentation: appends extra coordinates drawn from q(z2|x) so downstream layers "
       "operate in a higher-dimensional space; generation simply drops them again.",
       "-log q(z2|x). Lower bound.",
       "Fiber check: dropping the appended block reproduces x bitwise; augmented flows are "
       "cross-checked against importance-weighted estimates."},
      [](const json& j, Rng& rng) -> LayerPtr {
        const auto keep = req_size(j, "keep", "slice_generative");
        const auto extra = req_size(j, "extra", "slice_generative");
        return std::make_shared<SliceSurjection>(
            Orientation::Generative, keep, extra,
            make_slice_aux(j, rng, keep, extra, "slice_generative"),
            opt_string(j, "aux", "standard_normal") == "conditional_normal");
      });

  add("rounding_generative",
      {"generative surjection",
       "Dequantization: z = x + u with x integral and u in the unit cube, drawn uniformly "
       "or from a conditional normal pushed through a sigmoid. Generation floors.",
       "-log q(u|x): zero for the uniform model, otherwise the normal log-density minus "
       "the sigmoid log-Jacobian. Lower bound.",
       "Quadrature over the unit bin must integrate the continuous density back to the "
       "discrete mass; floor-of-output fiber check."},
      [](const json& j, Rng& rng) -> LayerPtr {
        const auto dim = req_size(j, "dim", "rounding_generative");
        if (opt_string(j, "bin_model", "uniform") == "conditional")
          return std::make_shared<RoundingSurjection>(Orientation::Generative, dim, rng,
                                                      opt_sizes(j, "hidden", {32, 32}));
        return std::make_shared<RoundingSurjection>(Orientation::Generative, dim);
      });

  add("rounding_inference",
      {"inference surjection",
       "Quantization: z = floor(x), with the in-bin position scored by the bin model. The "
       "sampled inverse draws an in-bin offset.",
       "log p(x|z): zero for the uniform model, otherwise the in-bin log-density. Exact.",
       "Exactness checked against the generative orientation on integer lattices; "
       "floor/fiber round trips."},
      [](const json& j, Rng& rng) -> LayerPtr {
        const auto dim = req_size(j, "dim", "rounding_inference");
        if (opt_string(j, "bin_model", "uniform") == "conditional")
          return std::make_shared<RoundingSurjection>(Orientation::Inference, dim, rng,
                                                      opt_sizes(j, "hidden", {32, 32}));
        return std::make_shared<RoundingSurjection>(Orientation::Inference, dim);
      });

  add("relu_inference",
      {"inference surjection",
       "z = max(x, 0) elementwise; clipped (nonpositive) values are scored under a "
       "negative half-normal. The sampled inverse re-draws negatives at the zeros.",
       "Sum over clipped dimensions of the negative half-normal log-density. Exact.",
       "With a rectified-normal base the flow must reproduce the standard normal density "
       "for positive points and the clipped atom at zero; fiber checks at the zeros."},
      [](const json& j, Rng&) {
        return std::make_shared<ReluSurjection>(Orientation::Inference,
                                                req_size(j, "dim", "relu_inference"),
                                                opt_double(j, "scale", 1.0));
      });

  add("relu_generative",
      {"generative surjection",
       "Generates x = max(z, 0) (sparse nonnegative data); the inference pass draws "
       "negative values at the zeros from a negative half-normal.",
       "Minus the drawn values' log-density under the fill, summed over the zeros. Lower "
       "bound.",
       "With a standard normal base and matching fill the density must equal the standard "
       "normal for positive x and exactly half at x = 0; rectification fiber checks."},
      [](const json& j, Rng&) {
        return std::make_shared<ReluSurjection>(Orientation::Generative,
                                                req_size(j, "dim", "relu_generative"),
                                                opt_double(j, "scale", 1.0));
      });

  add("stochastic_permutation",
      {"stochastic layer",
       "Shuffles the columns of each row uniformly at random in both directions.",
       "Exactly zero: forward and inverse kernels are both uniform over permutations, so "
       "the log ratio cancels.",
       "Inserting the layer in front of an exchangeable base must leave the density "
       "estimate unchanged; the estimate remains a strict lower bound for "
       "non-exchangeable bases."},
      [](const json& j, Rng&) {
        return std::make_shared<StochasticPermutation>(
            req_size(j, "dim", "stochastic_permutation"));
      });

  add("vae",
      {"stochastic layer",
       "Conditional diagonal-normal encoder and decoder between data and latent spaces; "
       "the latent draw is reparameterized.",
       "log p(x|z) - log q(z|x), the single-sample variational bound integrand.",
       "Finite-difference gradient checks through both networks; bound ordering against "
       "importance-weighted estimates."},
      [](const json& j, Rng& rng) {
        return std::make_shared<VaeLayer>(rng, req_size(j, "data_dim", "vae"),
                                          req_size(j, "latent_dim", "vae"),
                                          detail::opt_sizes(j, "enc_hidden", {32, 32}),
                                          detail::opt_sizes(j, "dec_hidden", {32, 32}));
      });

  add("ppca",
      {"stochastic layer",
       "Linear-Gaussian map x = z W^T + sigma*eps with fixed W and sigma; the inference "
       "pass samples the exact closed-form posterior.",
       "log p(x|z) - log q(z|x) with q the exact posterior: the bound is tight and the "
       "per-sample estimate equals the analytic Gaussian marginal with zero variance.",
       "Per-sample estimates compared to the analytic marginal computed independently "
       "from W and sigma; the sample variance itself is asserted to be numerically zero."},
      [](const json& j, Rng&) {
        if (!j.contains("weight")) fail("layer 'ppca': missing required field 'weight'");
        const auto& wj = j.at("weight");
        if (!wj.is_array() || wj.empty() || !wj.front().is_array())
          fail("layer 'ppca': 'weight' must be a nested array of rows");
        const std::size_t rows = wj.size(), cols = wj.front().size();
        Tensor w = Tensor::zeros({rows, cols});
        for (std::size_t i = 0; i < rows; ++i) {
          if (wj[i].size() != cols) fail("layer 'ppca': ragged 'weight' rows");
          for (std::size_t c = 0; c < cols; ++c) w.data[i * cols + c] = wj[i][c].get<double>();
        }
        return std::make_shared<PpcaLayer>(std::move(w),
                                           detail::opt_double(j, "sigma", 1.0));
      });
}

// Builds the auxiliary model for slice layers: a fixed standard normal over
// the sliced block, or a conditional diagonal normal driven by the kept block.
inline dist::DistPtr make_slice_aux(const json& j, Rng& rng, std::size_t keep, std::size_t extra,
                                    const std::string& kind) {
  const std::string aux = detail::opt_string(j, "aux", "standard_normal");
  if (aux == "standard_normal") return std::make_shared<dist::StandardNormal>(extra);
  if (aux == "conditional_normal") {
    std::vector<std::size_t> sizes{keep};
    const auto hidden = detail::opt_sizes(j, "hidden", {32, 32});
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(2 * extra);
    return std::make_shared<dist::ConditionalDiagonalNormal>(
        nn::Mlp::create(rng, sizes, /*zero_init_last=*/true), extra);
  }
  fail("layer '", kind, "': unknown aux model '", aux, "'");
}

}  // namespace survae::registry
