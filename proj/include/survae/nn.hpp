#pragma once

#include <string>
#include <vector>

#include "survae/ad.hpp"
#include "survae/rng.hpp"

namespace survae::nn {

// Fully connected network with ReLU hidden activations and a linear output
// layer.  With no hidden sizes it degenerates to a single affine map.
class Mlp {
 public:
  Mlp() = default;

  // sizes = {in, hidden..., out}.  When zero_init_last is set the output
  // layer starts at exactly zero so the surrounding transform starts as an
  // identity; hidden layers use He-style initialization.
  static Mlp create(Rng& rng, const std::vector<std::size_t>& sizes, bool zero_init_last) {
    if (sizes.size() < 2) fail("mlp: need at least input and output sizes");
    Mlp m;
    m.sizes_ = sizes;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const std::size_t fan_in = sizes[l], fan_out = sizes[l + 1];
      const bool last = (l + 2 == sizes.size());
      Tensor w = Tensor::zeros({fan_in, fan_out});
      if (!(last && zero_init_last)) {
        const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (auto& v : w.data) v = rng.normal() * scale;
      }
      m.weights_.push_back(ad::leaf(std::move(w)));
      m.biases_.push_back(ad::leaf(Tensor::zeros({fan_out})));
    }
    return m;
  }

  ad::NodePtr apply(const ad::NodePtr& input) const {
    if (input->value.ndim() != 2 || input->value.cols() != sizes_.front())
      fail("mlp: input shape ", shape_str(input->value.shape), " incompatible with fan-in ",
           sizes_.front());
    ad::NodePtr h = input;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      h = ad::affine(ad::matmul(h, weights_[l]), nullptr, biases_[l]);
      if (l + 1 < weights_.size()) h = ad::relu(h);
    }
    return h;
  }

  void collect_parameters(ad::ParamMap& out, const std::string& prefix) const {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.emplace(prefix + ".w" + std::to_string(l), weights_[l]);
      out.emplace(prefix + ".b" + std::to_string(l), biases_[l]);
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& w : weights_) n += w->value.numel();
    for (const auto& b : biases_) n += b->value.numel();
    return n;
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<ad::NodePtr> weights_;
  std::vector<ad::NodePtr> biases_;
};

}  // namespace survae::nn
