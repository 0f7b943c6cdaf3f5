#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>

#include "survae/arch.hpp"
#include "survae/train.hpp"

// Single-file checkpoint container, explicitly little-endian, with
// length-prefixed sections:
//
//   magic "SURVAE01"
//   u64 len + metadata JSON  {"arch": <descriptor>, "actnorm": [flags]}
//   u64 count + parameter entries      (u64 name len, name, u64 ndim,
//                                       u64 dims..., raw f64 data)
//   u8 optimizer flag [+ u64 step + per-parameter first/second moments,
//                                       same entry encoding]
//   u64 len + RNG state bytes
//   u64 iteration
//
// Round trips are bitwise: save -> load -> save produces identical bytes,
// and training resumed from a checkpoint matches an uninterrupted run.
namespace survae::ckpt {

namespace detail {

constexpr char kMagic[8] = {'S', 'U', 'R', 'V', 'A', 'E', '0', '1'};

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

inline void put_f64(std::ostream& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

inline void put_bytes(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint64_t get_u64(std::istream& in) {
  char b[8];
  in.read(b, 8);
  if (in.gcount() != 8) fail("corrupt checkpoint: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i]))
                                   << (8 * i);
  return v;
}

inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

inline std::string get_bytes(std::istream& in, std::uint64_t max_len = 1ull << 32) {
  const std::uint64_t n = get_u64(in);
  if (n > max_len) fail("corrupt checkpoint: unreasonable section length ", n);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::uint64_t>(in.gcount()) != n) fail("corrupt checkpoint: truncated");
  return s;
}

inline void put_tensor_entry(std::ostream& out, const std::string& name, const Tensor& t) {
  put_bytes(out, name);
  put_u64(out, t.shape.size());
  for (auto d : t.shape) put_u64(out, d);
  for (double v : t.data) put_f64(out, v);
}

inline std::pair<std::string, Tensor> get_tensor_entry(std::istream& in) {
  std::string name = get_bytes(in, 1u << 16);
  const std::uint64_t ndim = get_u64(in);
  if (ndim > 8) fail("corrupt checkpoint: tensor rank ", ndim);
  Shape shape(ndim);
  for (auto& d : shape) d = get_u64(in);
  Tensor t = Tensor::zeros(shape);
  for (auto& v : t.data) v = get_f64(in);
  return {std::move(name), std::move(t)};
}

}  // namespace detail

inline void save(const std::string& path, const Flow& flow, const nlohmann::json& arch,
                 const train::TrainerState& state, const std::string& rng_state) {
  nlohmann::json meta;
  meta["arch"] = arch;
  nlohmann::json an = nlohmann::json::array();
  for (const auto& l : flow.layers()) {
    auto* a = dynamic_cast<layers::ActNorm*>(l.get());
    an.push_back(a != nullptr && a->initialized());
  }
  meta["actnorm"] = an;

  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot open '", path, "' for writing");
  out.write(detail::kMagic, 8);
  detail::put_bytes(out, meta.dump());

  const ad::ParamMap params = flow.parameters();
  detail::put_u64(out, params.size());
  for (const auto& [name, node] : params) detail::put_tensor_entry(out, name, node->value);

  const auto& m = state.adam.first_moments();
  const auto& v = state.adam.second_moments();
  const bool has_adam = !m.empty();
  out.put(has_adam ? '\1' : '\0');
  if (has_adam) {
    detail::put_u64(out, state.adam.step_count());
    detail::put_u64(out, params.size());
    for (const auto& [name, node] : params) {
      auto mi = m.find(name);
      auto vi = v.find(name);
      if (mi == m.end() || vi == v.end())
        fail("checkpoint: optimizer state missing for parameter '", name, "'");
      detail::put_tensor_entry(out, name, mi->second);
      detail::put_tensor_entry(out, name, vi->second);
    }
  }

  detail::put_bytes(out, rng_state);
  detail::put_u64(out, state.iteration);
  if (!out) fail("failed writing '", path, "'");
}

struct Loaded {
  FlowPtr flow;
  nlohmann::json arch;
  train::TrainerState state;
  std::string rng_state;
};

inline Loaded load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open '", path, "'");
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || !std::equal(magic, magic + 8, detail::kMagic))
    fail("'", path, "' is not a checkpoint file (bad magic)");

  Loaded out;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(detail::get_bytes(in));
  } catch (const std::exception& e) {
    fail("corrupt checkpoint: bad metadata (", e.what(), ")");
  }
  if (!meta.contains("arch")) fail("corrupt checkpoint: missing architecture descriptor");
  out.arch = meta.at("arch");
  Rng build_rng(0);  // constructor-time draws are overwritten by loaded values
  out.flow = arch::build_from_spec(out.arch, build_rng);
  if (meta.contains("actnorm")) {
    const auto& an = meta.at("actnorm");
    for (std::size_t i = 0; i < out.flow->layers().size() && i < an.size(); ++i)
      if (an[i].get<bool>())
        if (auto* a = dynamic_cast<layers::ActNorm*>(out.flow->layers()[i].get()))
          a->mark_initialized();
  }

  ad::ParamMap params = out.flow->parameters();
  const std::uint64_t n = detail::get_u64(in);
  if (n != params.size())
    fail("checkpoint parameter count ", n, " does not match architecture (", params.size(), ")");
  for (std::uint64_t i = 0; i < n; ++i) {
    auto [name, t] = detail::get_tensor_entry(in);
    auto it = params.find(name);
    if (it == params.end()) fail("checkpoint has unknown parameter '", name, "'");
    if (!it->second->value.same_shape(t))
      fail("checkpoint parameter '", name, "' has shape ", shape_str(t.shape), ", expected ",
           shape_str(it->second->value.shape));
    it->second->value = std::move(t);
  }

  int flag = in.get();
  if (flag == std::char_traits<char>::eof()) fail("corrupt checkpoint: truncated");
  if (flag == 1) {
    const std::uint64_t step = detail::get_u64(in);
    const std::uint64_t cnt = detail::get_u64(in);
    if (cnt != params.size()) fail("corrupt checkpoint: optimizer entry count mismatch");
    std::map<std::string, Tensor> m, v;
    for (std::uint64_t i = 0; i < cnt; ++i) {
      auto [mn, mt] = detail::get_tensor_entry(in);
      auto [vn, vt] = detail::get_tensor_entry(in);
      if (mn != vn || params.find(mn) == params.end())
        fail("corrupt checkpoint: optimizer entry for unknown parameter '", mn, "'");
      m.emplace(mn, std::move(mt));
      v.emplace(vn, std::move(vt));
    }
    out.state.adam.restore(std::move(m), std::move(v), step);
  } else if (flag != 0) {
    fail("corrupt checkpoint: bad optimizer flag");
  }

  out.rng_state = detail::get_bytes(in);
  out.state.iteration = detail::get_u64(in);
  return out;
}

}  // namespace survae::ckpt
