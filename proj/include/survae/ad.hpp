#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "survae/tensor.hpp"

namespace survae::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of an evaluation tape.  A fresh tape is built per evaluation;
// leaves (parameters) outlive tapes and accumulate gradients across backward
// calls until explicitly zeroed.  Interior gradients are reset per call.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool has_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(const Node&)> backward_fn;

  Tensor& ensure_grad() {
    if (!has_grad) {
      grad = Tensor::zeros(value.shape);
      has_grad = true;
    }
    return grad;
  }
  void zero_grad() {
    if (has_grad) std::fill(grad.data.begin(), grad.data.end(), 0.0);
  }
  bool is_leaf() const { return parents.empty(); }
};

using ParamMap = std::map<std::string, NodePtr>;

inline NodePtr constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return n;
}
inline NodePtr constant(double v) { return constant(Tensor::scalar(v)); }

inline NodePtr leaf(Tensor v, bool requires_grad = true) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  return n;
}

namespace detail {

inline NodePtr make(Tensor value, std::vector<NodePtr> parents,
                    std::function<void(const Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return n;
}

enum class Bcast { Same, LeftScalar, RightScalar };

inline Bcast bcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return Bcast::Same;
  // When both operands hold a single element (e.g. a [1,1] row against a
  // scalar constant) the higher-rank operand stays the shape carrier, so a
  // one-row matrix never collapses to the scalar's shape.
  if (a.is_scalar() && b.is_scalar())
    return a.ndim() >= b.ndim() ? Bcast::RightScalar : Bcast::LeftScalar;
  if (b.is_scalar()) return Bcast::RightScalar;
  if (a.is_scalar()) return Bcast::LeftScalar;
  fail("ad.", op, ": incompatible shapes ", shape_str(a.shape), " and ", shape_str(b.shape),
       " (only matching-shape or scalar broadcast)");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Binary elementwise ops (matching shapes, or scalar broadcast on either side)
// ---------------------------------------------------------------------------

inline NodePtr add(const NodePtr& a, const NodePtr& b) {
  auto k = detail::bcast_kind("add", a->value, b->value);
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  Tensor out = (k == detail::Bcast::LeftScalar) ? bv : av;
  if (k == detail::Bcast::Same) {
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] + bv.data[i];
  } else if (k == detail::Bcast::LeftScalar) {
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[0] + bv.data[i];
  } else {
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] + bv.data[0];
  }
  return detail::make(std::move(out), {a, b}, [](const Node& self) {
    const Tensor& g = self.grad;
    for (int s = 0; s < 2; ++s) {
      Node& p = *self.parents[s];
      if (!p.requires_grad) continue;
      Tensor& pg = p.ensure_grad();
      if (p.value.is_scalar())
        for (double gv : g.data) pg.data[0] += gv;
      else
        for (std::size_t i = 0; i < g.numel(); ++i) pg.data[i] += g.data[i];
    }
  });
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b) {
  auto k = detail::bcast_kind("sub", a->value, b->value);
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  Tensor out = (k == detail::Bcast::LeftScalar) ? bv : av;
  if (k == detail::Bcast::Same) {
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] - bv.data[i];
  } else if (k == detail::Bcast::LeftScalar) {
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[0] - bv.data[i];
  } else {
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] - bv.data[0];
  }
  return detail::make(std::move(out), {a, b}, [](const Node& self) {
    const Tensor& g = self.grad;
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor& pg = pa.ensure_grad();
      if (pa.value.is_scalar())
        for (double gv : g.data) pg.data[0] += gv;
      else
        for (std::size_t i = 0; i < g.numel(); ++i) pg.data[i] += g.data[i];
    }
    if (pb.requires_grad) {
      Tensor& pg = pb.ensure_grad();
      if (pb.value.is_scalar())
        for (double gv : g.data) pg.data[0] -= gv;
      else
        for (std::size_t i = 0; i < g.numel(); ++i) pg.data[i] -= g.data[i];
    }
  });
}

inline NodePtr mul(const NodePtr& a, const NodePtr& b) {
  auto k = detail::bcast_kind("mul", a->value, b->value);
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  Tensor out = (k == detail::Bcast::LeftScalar) ? bv : av;
  if (k == detail::Bcast::Same) {
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] * bv.data[i];
  } else if (k == detail::Bcast::LeftScalar) {
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[0] * bv.data[i];
  } else {
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] * bv.data[0];
  }
  return detail::make(std::move(out), {a, b}, [](const Node& self) {
    const Tensor& g = self.grad;
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const Tensor& av = pa.value;
    const Tensor& bv = pb.value;
    if (pa.requires_grad) {
      Tensor& pg = pa.ensure_grad();
      if (av.is_scalar()) {
        double s = 0;
        for (std::size_t i = 0; i < g.numel(); ++i)
          s += g.data[i] * (bv.is_scalar() ? bv.data[0] : bv.data[i]);
        pg.data[0] += s;
      } else {
        for (std::size_t i = 0; i < g.numel(); ++i)
          pg.data[i] += g.data[i] * (bv.is_scalar() ? bv.data[0] : bv.data[i]);
      }
    }
    if (pb.requires_grad) {
      Tensor& pg = pb.ensure_grad();
      if (bv.is_scalar()) {
        double s = 0;
        for (std::size_t i = 0; i < g.numel(); ++i)
          s += g.data[i] * (av.is_scalar() ? av.data[0] : av.data[i]);
        pg.data[0] += s;
      } else {
        for (std::size_t i = 0; i < g.numel(); ++i)
          pg.data[i] += g.data[i] * (av.is_scalar() ? av.data[0] : av.data[i]);
      }
    }
  });
}

inline NodePtr div(const NodePtr& a, const NodePtr& b) {
  auto k = detail::bcast_kind("div", a->value, b->value);
  for (double d : b->value.data)
    if (d == 0.0) fail("ad.div: division by zero");
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  Tensor out = (k == detail::Bcast::LeftScalar) ? bv : av;
  if (k == detail::Bcast::Same) {
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] / bv.data[i];
  } else if (k == detail::Bcast::LeftScalar) {
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[0] / bv.data[i];
  } else {
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = av.data[i] / bv.data[0];
  }
  return detail::make(std::move(out), {a, b}, [](const Node& self) {
    const Tensor& g = self.grad;
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const Tensor& av = pa.value;
    const Tensor& bv = pb.value;
    auto bval = [&](std::size_t i) { return bv.is_scalar() ? bv.data[0] : bv.data[i]; };
    auto aval = [&](std::size_t i) { return av.is_scalar() ? av.data[0] : av.data[i]; };
    if (pa.requires_grad) {
      Tensor& pg = pa.ensure_grad();
      if (av.is_scalar()) {
        double s = 0;
        for (std::size_t i = 0; i < g.numel(); ++i) s += g.data[i] / bval(i);
        pg.data[0] += s;
      } else {
        for (std::size_t i = 0; i < g.numel(); ++i) pg.data[i] += g.data[i] / bval(i);
      }
    }
    if (pb.requires_grad) {
      Tensor& pg = pb.ensure_grad();
      if (bv.is_scalar()) {
        double s = 0;
        for (std::size_t i = 0; i < g.numel(); ++i)
          s -= g.data[i] * aval(i) / (bval(i) * bval(i));
        pg.data[0] += s;
      } else {
        for (std::size_t i = 0; i < g.numel(); ++i)
          pg.data[i] -= g.data[i] * aval(i) / (bval(i) * bval(i));
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Matrix product
// ---------------------------------------------------------------------------

inline NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  Tensor out = matmul_value(a->value, b->value);
  return detail::make(std::move(out), {a, b}, [](const Node& self) {
    const Tensor& g = self.grad;
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const Tensor& av = pa.value;
    const Tensor& bv = pb.value;
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (pa.requires_grad) {
      Tensor& pg = pa.ensure_grad();
      // dA[i,p] += sum_j g[i,j] * B[p,j]
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = &g.data[i * n];
        double* arow = &pg.data[i * k];
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = &bv.data[p * n];
          double s = 0;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          arow[p] += s;
        }
      }
    }
    if (pb.requires_grad) {
      Tensor& pg = pb.ensure_grad();
      // dB[p,j] += sum_i A[i,p] * g[i,j]
      for (std::size_t i = 0; i < m; ++i) {
        const double* arow = &av.data[i * k];
        const double* grow = &g.data[i * n];
        for (std::size_t p = 0; p < k; ++p) {
          const double apv = arow[p];
          if (apv == 0.0) continue;
          double* brow = &pg.data[p * n];
          for (std::size_t j = 0; j < n; ++j) brow[j] += apv * grow[j];
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Unary elementwise ops
// ---------------------------------------------------------------------------

namespace detail {
// The gradient rule receives (input value, output value) per element.
template <typename Fwd, typename Bwd>
NodePtr unary(const NodePtr& a, Fwd fwd, Bwd bwd) {
  Tensor out = a->value;
  for (auto& v : out.data) v = fwd(v);
  return detail::make(std::move(out), {a}, [bwd](const Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& pg = p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.numel(); ++i)
      pg.data[i] += self.grad.data[i] * bwd(p.value.data[i], self.value.data[i]);
  });
}
}  // namespace detail

inline NodePtr neg(const NodePtr& a) {
  return detail::unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}
inline NodePtr exp(const NodePtr& a) {
  return detail::unary(a, [](double x) { return std::exp(x); },
                       [](double, double y) { return y; });
}
inline NodePtr log(const NodePtr& a) {
  for (double v : a->value.data)
    if (v < 0.0) fail("ad.log: negative input ", v);
  return detail::unary(a, [](double x) { return std::log(x); },
                       [](double x, double) { return 1.0 / x; });
}
inline NodePtr tanh(const NodePtr& a) {
  return detail::unary(a, [](double x) { return std::tanh(x); },
                       [](double, double y) { return 1.0 - y * y; });
}
inline NodePtr relu(const NodePtr& a) {
  return detail::unary(a, [](double x) { return x > 0 ? x : 0.0; },
                       [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}
inline NodePtr sigmoid(const NodePtr& a) {
  return detail::unary(a,
                       [](double x) {
                         if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
                         const double e = std::exp(x);
                         return e / (1.0 + e);
                       },
                       [](double, double y) { return y * (1.0 - y); });
}
inline NodePtr softplus(const NodePtr& a) {
  return detail::unary(a,
                       [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
                       [](double x, double) {
                         if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
                         const double e = std::exp(x);
                         return e / (1.0 + e);
                       });
}
// Absolute value; the subgradient at 0 follows the sign(0) := +1 convention.
inline NodePtr abs(const NodePtr& a) {
  return detail::unary(a, [](double x) { return std::abs(x); },
                       [](double x, double) { return x >= 0 ? 1.0 : -1.0; });
}
inline NodePtr square(const NodePtr& a) {
  return detail::unary(a, [](double x) { return x * x; },
                       [](double x, double) { return 2.0 * x; });
}
inline NodePtr sqrt(const NodePtr& a) {
  for (double v : a->value.data)
    if (v < 0.0) fail("ad.sqrt: negative input ", v);
  return detail::unary(a, [](double x) { return std::sqrt(x); },
                       [](double, double y) { return 0.5 / y; });
}
// log Phi(x): normal log-CDF, tail-stable in value and gradient.
inline NodePtr norm_log_cdf(const NodePtr& a) {
  return detail::unary(a, [](double x) { return norm_logcdf(x); },
                       [](double x, double) { return norm_logcdf_grad(x); });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline NodePtr sum(const NodePtr& a) {
  double s = 0;
  for (double v : a->value.data) s += v;
  return detail::make(Tensor::scalar(s), {a}, [](const Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& pg = p.ensure_grad();
    const double g = self.grad.data[0];
    for (auto& v : pg.data) v += g;
  });
}

inline NodePtr mean(const NodePtr& a) {
  double s = 0;
  for (double v : a->value.data) s += v;
  const double inv = 1.0 / static_cast<double>(a->value.numel());
  return detail::make(Tensor::scalar(s * inv), {a}, [inv](const Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& pg = p.ensure_grad();
    const double g = self.grad.data[0] * inv;
    for (auto& v : pg.data) v += g;
  });
}

// Per-row sum over the feature axis: [n,d] -> [n].
inline NodePtr rowsum(const NodePtr& a) {
  const std::size_t n = a->value.rows(), d = a->value.cols();
  Tensor out = Tensor::zeros({n});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) s += a->value.data[i * d + j];
    out.data[i] = s;
  }
  return detail::make(std::move(out), {a}, [n, d](const Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& pg = p.ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = self.grad.data[i];
      for (std::size_t j = 0; j < d; ++j) pg.data[i * d + j] += g;
    }
  });
}

// ---------------------------------------------------------------------------
// Structure ops: reshape, concat, split, gather, scatter, affine
// ---------------------------------------------------------------------------

inline NodePtr reshape(const NodePtr& a, Shape s) {
  if (Tensor::numel_of(s) != a->value.numel())
    fail("ad.reshape: cannot view ", shape_str(a->value.shape), " as ", shape_str(s));
  Tensor out(std::move(s), a->value.data);
  return detail::make(std::move(out), {a}, [](const Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& pg = p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) pg.data[i] += self.grad.data[i];
  });
}

// Concatenate 2-D tensors along the feature axis (axis 1).
inline NodePtr concat(const std::vector<NodePtr>& parts) {
  if (parts.empty()) fail("ad.concat: no inputs");
  const std::size_t n = parts[0]->value.rows();
  std::size_t dtot = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p->value.ndim() != 2 || p->value.rows() != n)
      fail("ad.concat: incompatible shape ", shape_str(p->value.shape));
    widths.push_back(p->value.cols());
    dtot += p->value.cols();
  }
  Tensor out = Tensor::zeros({n, dtot});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k]->value;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out.data[i * dtot + off + j] = v.data[i * widths[k] + j];
    off += widths[k];
  }
  return detail::make(std::move(out), parts, [n, dtot, widths](const Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (p.requires_grad) {
        Tensor& pg = p.ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j)
            pg.data[i * widths[k] + j] += self.grad.data[i * dtot + off + j];
      }
      off += widths[k];
    }
  });
}

// Split a 2-D tensor along the feature axis into pieces of the given widths.
inline std::vector<NodePtr> split(const NodePtr& a, const std::vector<std::size_t>& widths) {
  const std::size_t n = a->value.rows(), d = a->value.cols();
  std::size_t tot = 0;
  for (auto w : widths) tot += w;
  if (tot != d)
    fail("ad.split: widths sum to ", tot, " but input has ", d, " columns");
  std::vector<NodePtr> out;
  std::size_t off = 0;
  for (auto w : widths) {
    Tensor piece = Tensor::zeros({n, w});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) piece.data[i * w + j] = a->value.data[i * d + off + j];
    out.push_back(detail::make(std::move(piece), {a}, [n, d, w, off](const Node& self) {
      Node& p = *self.parents[0];
      if (!p.requires_grad) return;
      Tensor& pg = p.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j) pg.data[i * d + off + j] += self.grad.data[i * w + j];
    }));
    off += w;
  }
  return out;
}

// Per-row element pick: out[i] = a[i, idx[i]].
inline NodePtr gather(const NodePtr& a, const std::vector<std::size_t>& idx) {
  const std::size_t n = a->value.rows(), d = a->value.cols();
  if (idx.size() != n) fail("ad.gather: index count ", idx.size(), " != rows ", n);
  Tensor out = Tensor::zeros({n});
  for (std::size_t i = 0; i < n; ++i) {
    if (idx[i] >= d) fail("ad.gather: index ", idx[i], " out of range for ", d, " columns");
    out.data[i] = a->value.data[i * d + idx[i]];
  }
  return detail::make(std::move(out), {a}, [n, d, idx](const Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& pg = p.ensure_grad();
    for (std::size_t i = 0; i < n; ++i) pg.data[i * d + idx[i]] += self.grad.data[i];
  });
}

// Per-row element place: out[i, idx[i]] = a[i], zeros elsewhere; [n] -> [n,width].
inline NodePtr scatter(const NodePtr& a, const std::vector<std::size_t>& idx, std::size_t width) {
  const std::size_t n = a->value.numel();
  if (a->value.ndim() != 1) fail("ad.scatter: input must be 1-D, got ", shape_str(a->value.shape));
  if (idx.size() != n) fail("ad.scatter: index count ", idx.size(), " != length ", n);
  Tensor out = Tensor::zeros({n, width});
  for (std::size_t i = 0; i < n; ++i) {
    if (idx[i] >= width) fail("ad.scatter: index ", idx[i], " out of range for width ", width);
    out.data[i * width + idx[i]] = a->value.data[i];
  }
  return detail::make(std::move(out), {a}, [n, width, idx](const Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& pg = p.ensure_grad();
    for (std::size_t i = 0; i < n; ++i) pg.data[i] += self.grad.data[i * width + idx[i]];
  });
}

// Per-column affine map out[i,j] = x[i,j]*scale[j] + shift[j] on a 2-D input.
// scale/shift may each be null (skipped), length-d, or scalar (broadcast).
inline NodePtr affine(const NodePtr& x, const NodePtr& scale, const NodePtr& shift) {
  const std::size_t n = x->value.rows(), d = x->value.cols();
  auto check = [&](const NodePtr& p, const char* what) {
    if (p && !(p->value.numel() == d || p->value.is_scalar()))
      fail("ad.affine: ", what, " shape ", shape_str(p->value.shape), " incompatible with input ",
           shape_str(x->value.shape));
  };
  check(scale, "scale");
  check(shift, "shift");
  auto colv = [d](const Tensor& t, std::size_t j) { return t.is_scalar() ? t.data[0] : t.data[j]; };
  Tensor out = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double v = x->value.data[i * d + j];
      if (scale) v *= colv(scale->value, j);
      if (shift) v += colv(shift->value, j);
      out.data[i * d + j] = v;
    }
  std::vector<NodePtr> parents{x};
  const int si = scale ? static_cast<int>(parents.size()) : -1;
  if (scale) parents.push_back(scale);
  const int bi = shift ? static_cast<int>(parents.size()) : -1;
  if (shift) parents.push_back(shift);
  return detail::make(std::move(out), std::move(parents), [n, d, si, bi](const Node& self) {
    Node& px = *self.parents[0];
    Node* ps = si >= 0 ? self.parents[si].get() : nullptr;
    Node* pb = bi >= 0 ? self.parents[bi].get() : nullptr;
    auto colv = [d](const Tensor& t, std::size_t j) { return t.is_scalar() ? t.data[0] : t.data[j]; };
    if (px.requires_grad) {
      Tensor& pg = px.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          double g = self.grad.data[i * d + j];
          if (ps) g *= colv(ps->value, j);
          pg.data[i * d + j] += g;
        }
    }
    if (ps && ps->requires_grad) {
      Tensor& pg = ps->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          const double contrib = self.grad.data[i * d + j] * px.value.data[i * d + j];
          pg.data[ps->value.is_scalar() ? 0 : j] += contrib;
        }
    }
    if (pb && pb->requires_grad) {
      Tensor& pg = pb->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
          pg.data[pb->value.is_scalar() ? 0 : j] += self.grad.data[i * d + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Order statistics along the feature axis
// ---------------------------------------------------------------------------

struct MaxResult {
  NodePtr values;                   // [n]
  std::vector<std::size_t> indices; // argmax per row, ties -> lowest index
};

inline MaxResult max_along_axis(const NodePtr& a) {
  const std::size_t n = a->value.rows(), d = a->value.cols();
  if (d == 0) fail("ad.max_along_axis: zero-width input");
  Tensor out = Tensor::zeros({n});
  std::vector<std::size_t> idx(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = a->value.data[i * d];
    std::size_t bj = 0;
    for (std::size_t j = 1; j < d; ++j) {
      const double v = a->value.data[i * d + j];
      if (v > best) {
        best = v;
        bj = j;
      }
    }
    out.data[i] = best;
    idx[i] = bj;
  }
  auto node = detail::make(std::move(out), {a}, [n, d, idx](const Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& pg = p.ensure_grad();
    for (std::size_t i = 0; i < n; ++i) pg.data[i * d + idx[i]] += self.grad.data[i];
  });
  return {node, idx};
}

struct SortResult {
  NodePtr values;                 // [n,d], each row ascending
  std::vector<std::size_t> perm;  // flattened [n,d]: perm[i*d+j] = source column of out[i,j]
};

// Stable ascending sort per row (ties keep original order).
inline SortResult sort_along_axis(const NodePtr& a) {
  const std::size_t n = a->value.rows(), d = a->value.cols();
  Tensor out = Tensor::zeros({n, d});
  std::vector<std::size_t> perm(n * d);
  std::vector<std::size_t> order(d);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    const double* row = &a->value.data[i * d];
    std::stable_sort(order.begin(), order.end(),
                     [row](std::size_t x, std::size_t y) { return row[x] < row[y]; });
    for (std::size_t j = 0; j < d; ++j) {
      out.data[i * d + j] = row[order[j]];
      perm[i * d + j] = order[j];
    }
  }
  auto node = detail::make(std::move(out), {a}, [n, d, perm](const Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& pg = p.ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) pg.data[i * d + perm[i * d + j]] += self.grad.data[i * d + j];
  });
  return {node, perm};
}

// ---------------------------------------------------------------------------
// Convenience wrappers
// ---------------------------------------------------------------------------

inline NodePtr cscale(const NodePtr& a, double c) { return mul(a, constant(c)); }
inline NodePtr cadd(const NodePtr& a, double c) { return add(a, constant(c)); }

// Broadcast a column [n] across d columns: [n] -> [n,d].
inline NodePtr col_broadcast(const NodePtr& a, std::size_t d) {
  return matmul(reshape(a, {a->value.numel(), 1}), constant(Tensor::full({1, d}, 1.0)));
}

// Numerically stable per-row log(sum(exp(x))): [n,d] -> [n].
inline NodePtr logsumexp_rows(const NodePtr& a) {
  auto m = max_along_axis(a).values;                       // [n]
  auto shifted = sub(a, col_broadcast(m, a->value.cols()));  // [n,d]
  return add(m, log(rowsum(exp(shifted))));
}

// ---------------------------------------------------------------------------
// Reverse pass
// ---------------------------------------------------------------------------

// Accumulates d(root)/d(node) into every requires_grad node reachable from
// root.  Interior gradients are reset at the start of each call; leaf
// gradients accumulate across calls until zeroed by the caller.
inline void backward(const NodePtr& root) {
  if (!root) fail("ad.backward: null root");
  if (root->value.numel() != 1)
    fail("ad.backward: root must be scalar, got shape ", shape_str(root->value.shape));
  if (!root->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  struct Frame {
    Node* n;
    std::size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
  for (Node* n : order)
    if (!n->is_leaf()) n->zero_grad();
  root->ensure_grad().data[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->has_grad) n->backward_fn(*n);
  }
}

inline void zero_grads(const ParamMap& params) {
  for (const auto& [name, p] : params) p->zero_grad();
}

}  // namespace survae::ad
