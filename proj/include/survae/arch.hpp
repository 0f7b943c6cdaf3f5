#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "survae/flow.hpp"
#include "survae/registry.hpp"

namespace survae::arch {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Architecture descriptors.  A descriptor is a JSON document:
//
//   {
//     "base":   {"family": "standard_normal", "dim": 2},
//     "layers": [{"kind": "affine_coupling", "dim": 2, "hidden": [200, 100]},
//                {"kind": "abs", "orientation": "inference", "dim": 2}, ...]
//   }
//
// Layers are listed data side first.  A layer entry may either use the full
// registered kind name (e.g. "abs_inference") or split it into "kind" +
// "orientation" fields; the two spellings are equivalent.
// ---------------------------------------------------------------------------

inline dist::DistPtr make_base(const json& b) {
  if (!b.contains("family")) fail("base: missing 'family'");
  const std::string family = b.at("family").get<std::string>();
  const auto dim = [&]() -> std::size_t {
    if (!b.contains("dim")) fail("base '", family, "': missing 'dim'");
    return b.at("dim").get<std::size_t>();
  };
  const auto vec = [&](const char* key, double def) {
    const std::size_t d = dim();
    Tensor t = Tensor::full({d}, def);
    if (b.contains(key)) {
      const auto& v = b.at(key);
      if (v.is_number()) {
        for (auto& x : t.data) x = v.get<double>();
      } else {
        if (v.size() != d) fail("base '", family, "': '", key, "' length != dim");
        for (std::size_t i = 0; i < d; ++i) t.data[i] = v[i].get<double>();
      }
    }
    return t;
  };

  if (family == "standard_normal") return std::make_shared<dist::StandardNormal>(dim());
  if (family == "diagonal_normal")
    return std::make_shared<dist::DiagonalNormal>(vec("mu", 0.0), vec("log_sigma", 0.0));
  if (family == "uniform") return std::make_shared<dist::Uniform>(vec("lo", 0.0), vec("hi", 1.0));
  if (family == "half_normal")
    return std::make_shared<dist::HalfNormal>(
        b.contains("scale") ? b.at("scale").get<double>() : 1.0, dim());
  if (family == "ordered_normal") return std::make_shared<dist::OrderedNormal>(dim());
  if (family == "normal_max_order_statistic")
    return std::make_shared<dist::NormalMaxOrderStatistic>(b.at("k").get<std::size_t>());
  if (family == "rectified_normal") return std::make_shared<dist::RectifiedStandardNormal>(dim());
  fail("base: unknown family '", family, "'");
}

inline FlowPtr build_from_spec(const json& desc, Rng& rng) {
  if (!desc.is_object()) fail("architecture descriptor must be an object");
  if (!desc.contains("base")) fail("architecture descriptor missing 'base'");
  auto base = make_base(desc.at("base"));
  std::vector<layers::LayerPtr> stack;
  if (desc.contains("layers")) {
    std::size_t idx = 0;
    for (const auto& entry : desc.at("layers")) {
      json spec = entry;
      if (spec.contains("orientation")) {
        spec["kind"] = spec.at("kind").get<std::string>() + "_" +
                       spec.at("orientation").get<std::string>();
        spec.erase("orientation");
      }
      try {
        stack.push_back(registry::Registry::instance().create(spec, rng));
      } catch (const Error& e) {
        fail("layer ", idx, ": ", e.what());
      }
      ++idx;
    }
  }
  return std::make_shared<Flow>(std::move(base), std::move(stack));
}

// ---------------------------------------------------------------------------
// Named presets (embedded documents).
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{
      "baseline", "absflow-symmetric", "absflow-antisymmetric",
      "augmented", "sortflow-toy",      "permuteflow-toy"};
  return names;
}

inline json preset(const std::string& name) {
  const auto coupling = [](std::size_t dim, json hidden) {
    return json{{"kind", "affine_coupling"}, {"dim", dim}, {"hidden", std::move(hidden)}};
  };
  const json big_hidden = json::array({200, 100});
  const json toy_hidden = json::array({32, 32});

  if (name == "baseline") {
    return json{{"base", {{"family", "standard_normal"}, {"dim", 2}}},
                {"layers",
                 {coupling(2, big_hidden),
                  {{"kind", "reverse_permutation"}, {"dim", 2}},
                  coupling(2, big_hidden),
                  {{"kind", "reverse_permutation"}, {"dim", 2}},
                  coupling(2, big_hidden),
                  {{"kind", "reverse_permutation"}, {"dim", 2}},
                  coupling(2, big_hidden)}}};
  }
  if (name == "absflow-symmetric") {
    // Baseline plus a parameter-free fold: |x|, then inverse softplus to map
    // the nonnegative quadrant back to the full plane.  Parameter count is
    // identical to the baseline's.
    return json{{"base", {{"family", "standard_normal"}, {"dim", 2}}},
                {"layers",
                 {{{"kind", "abs_inference"}, {"dim", 2}, {"sign_model", "uniform"}},
                  {{"kind", "softplus_bijection"}, {"dim", 2}},
                  coupling(2, big_hidden),
                  {{"kind", "reverse_permutation"}, {"dim", 2}},
                  coupling(2, big_hidden),
                  {{"kind", "reverse_permutation"}, {"dim", 2}},
                  coupling(2, big_hidden),
                  {{"kind", "reverse_permutation"}, {"dim", 2}},
                  coupling(2, big_hidden)}}};
  }
  if (name == "absflow-antisymmetric") {
    // A single fold with a learned sign classifier over a uniform base on
    // [0,4]^2 (the folded image of data supported on [-4,4]^2).
    return json{{"base", {{"family", "uniform"}, {"dim", 2}, {"lo", 0.0}, {"hi", 4.0}}},
                {"layers",
                 {{{"kind", "abs_inference"},
                   {"dim", 2},
                   {"sign_model", "classifier"},
                   {"hidden", big_hidden}}}}};
  }
  if (name == "augmented") {
    // Append two sampled dimensions, then transform the 4-D state.
    return json{{"base", {{"family", "standard_normal"}, {"dim", 4}}},
                {"layers",
                 {{{"kind", "slice_generative"},
                   {"keep", 2},
                   {"extra", 2},
                   {"aux", "standard_normal"}},
                  coupling(4, toy_hidden),
                  {{"kind", "reverse_permutation"}, {"dim", 4}},
                  coupling(4, toy_hidden)}}};
  }
  if (name == "sortflow-toy") {
    return json{{"base", {{"family", "standard_normal"}, {"dim", 4}}},
                {"layers",
                 {{{"kind", "sort_inference"}, {"dim", 4}, {"perm_model", "uniform"}},
                  {{"kind", "actnorm"}, {"dim", 4}},
                  coupling(4, toy_hidden),
                  {{"kind", "reverse_permutation"}, {"dim", 4}},
                  coupling(4, toy_hidden)}}};
  }
  if (name == "permuteflow-toy") {
    return json{{"base", {{"family", "standard_normal"}, {"dim", 4}}},
                {"layers",
                 {{{"kind", "stochastic_permutation"}, {"dim", 4}},
                  {{"kind", "actnorm"}, {"dim", 4}},
                  coupling(4, toy_hidden),
                  {{"kind", "stochastic_permutation"}, {"dim", 4}},
                  coupling(4, toy_hidden)}}};
  }
  fail("unknown architecture preset '", name,
       "' (known: baseline, absflow-symmetric, absflow-antisymmetric, augmented, "
       "sortflow-toy, permuteflow-toy)");
}

// Resolves an --arch argument: a preset name or a path to a descriptor file.
inline json load_descriptor(const std::string& arg) {
  for (const auto& n : preset_names())
    if (arg == n) return preset(arg);
  std::ifstream in(arg);
  if (!in) fail("architecture '", arg, "' is neither a preset name nor a readable file");
  json desc;
  try {
    desc = json::parse(in);
  } catch (const std::exception& e) {
    fail("architecture file '", arg, "': ", e.what());
  }
  return desc;
}

}  // namespace survae::arch
