#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "survae/tensor.hpp"

namespace survae {

// Recorded raw draws; replaying a bundle freezes every stochastic choice made
// through an Rng (used by finite-difference checks on stochastic estimates).
struct NoiseBundle {
  std::vector<std::uint64_t> words;
};

// Deterministic random stream.  Every sampled quantity in the toolkit is
// derived from raw 64-bit words of a seeded mt19937_64, so identical seeds
// give bitwise-identical runs.  A stream can record its raw words and later
// be replayed from the recording.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  static Rng replay(const NoiseBundle& bundle) {
    Rng r;
    r.replay_ = std::make_shared<NoiseBundle>(bundle);
    r.replay_pos_ = 0;
    return r;
  }

  std::uint64_t next_u64() {
    std::uint64_t w;
    if (replay_) {
      if (replay_pos_ >= replay_->words.size())
        fail("rng: replay exhausted after ", replay_->words.size(), " draws");
      w = replay_->words[replay_pos_++];
    } else {
      w = engine_();
    }
    if (recording_) recording_->words.push_back(w);
    return w;
  }

  // Uniform on the open interval (0,1); safe as a quantile argument.
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() { return norm_quantile(uniform()); }

  // Uniform integer in [0, n) via rejection (unbiased, replay-stable).
  std::size_t uniform_int(std::size_t n) {
    if (n == 0) fail("rng: uniform_int(0)");
    const std::uint64_t span = UINT64_MAX - UINT64_MAX % n;
    for (;;) {
      std::uint64_t w = next_u64();
      if (w < span) return static_cast<std::size_t>(w % n);
    }
  }

  Tensor normal_tensor(const Shape& s) {
    Tensor t = Tensor::zeros(s);
    for (auto& v : t.data) v = normal();
    return t;
  }

  Tensor uniform_tensor(const Shape& s) {
    Tensor t = Tensor::zeros(s);
    for (auto& v : t.data) v = uniform();
    return t;
  }

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_int(i)]);
  }

  void start_recording() { recording_ = std::make_shared<NoiseBundle>(); }
  NoiseBundle stop_recording() {
    if (!recording_) fail("rng: stop_recording without start_recording");
    NoiseBundle out = *recording_;
    recording_.reset();
    return out;
  }

  std::string state_string() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }
  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (!is) fail("rng: malformed state string");
  }

 private:
  std::mt19937_64 engine_;
  std::shared_ptr<NoiseBundle> recording_;
  std::shared_ptr<NoiseBundle> replay_;
  std::size_t replay_pos_ = 0;
};

// Derives an independent stream seed from a base seed and an index
// (splitmix64 finalizer), so per-estimate streams are decorrelated and
// independent of any threading layout.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + (index + 1) * 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace survae
