#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cten/common.hpp"
#include "cten/tensor.hpp"

namespace cten {

class Tape;

/// Handle to a tensor recorded on a Tape. Cheap to copy; only valid as long
/// as the owning tape is alive.
class Var {
 public:
  Var() = default;
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }

  const Tensor& value() const;
  const Shape& shape() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

namespace detail {

// c[M,N] += a[M,K] * b[K,N]. Zero elements of `a` are skipped: event tensors
// are mostly zeros and skipping leaves the result bit-identical (adding
// 0*b[k,j] never changes the accumulator).
inline void gemm_accum(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k_dim, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k_dim;
    double* ci = c + i * n;
    for (std::size_t k = 0; k < k_dim; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b + k * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
}

// c[K,N] += a[M,K]^T * g[M,N]
inline void gemm_tn_accum(const double* a, const double* g, double* c,
                          std::size_t m, std::size_t k_dim, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k_dim;
    const double* gi = g + i * n;
    for (std::size_t k = 0; k < k_dim; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      double* ck = c + k * n;
      for (std::size_t j = 0; j < n; ++j) ck[j] += aik * gi[j];
    }
  }
}

inline void transpose_into(const double* a, double* at, std::size_t m,
                           std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) at[j * m + i] = a[i * n + j];
}

inline bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

}  // namespace detail

/// Record of primitive operations in execution order. Reverse-mode gradients
/// are obtained by replaying the record backwards; each node accumulates into
/// its parents' gradients, so fan-out adds up naturally.
///
/// A tape and the tensors recorded on it form a single-threaded unit of work;
/// independent tapes never share state.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that does not participate in gradients (data, constants).
  Var input(Tensor v) { return leaf(std::move(v), false); }

  /// Leaf whose gradient is wanted.
  Var param(Tensor v) { return leaf(std::move(v), true); }

  const Tensor& value(Var v) const { return at(v).value; }

  bool requires_grad(Var v) const { return at(v).requires_grad; }

  bool has_grad(Var v) const { return !at(v).grad.empty(); }

  /// Gradient of the last backward() root w.r.t. v.
  Tensor grad(Var v) const {
    const Node& n = at(v);
    if (n.grad.empty())
      throw DomainError("no gradient recorded for node " + std::to_string(v.id()) +
                        " (op '" + std::string(n.op) + "'); run backward() first");
    return Tensor(n.value.shape(), n.grad);
  }

  const std::vector<double>& grad_raw(Var v) const {
    const Node& n = at(v);
    if (n.grad.empty())
      throw DomainError("no gradient recorded; run backward() first");
    return n.grad;
  }

  /// Reverse sweep from a scalar root. Every requires_grad tensor reachable
  /// from `loss` ends up holding dLoss/dTensor. May only run once per tape.
  void backward(Var loss) {
    if (loss.tape() != this) throw DomainError("backward: root is not on this tape");
    if (backward_done_)
      throw DomainError("backward: already run on this tape; record a fresh tape");
    const Node& root = at(loss);
    if (root.value.size() != 1)
      throw DomainError("backward: root must be scalar, got shape " +
                        shape_str(root.value.shape()));
    if (!root.value.all_finite())
      throw NumericError("backward: loss value is not finite (op '" +
                         std::string(root.op) + "')");
    backward_done_ = true;
    if (!root.requires_grad) return;  // nothing reachable wants a gradient
    *grad_sink(loss.id()) = 1.0;
    for (std::uint32_t id = loss.id();; --id) {
      Node& n = nodes_[id];
      if (n.requires_grad && !n.grad.empty()) {
        for (double g : n.grad)
          if (!std::isfinite(g))
            throw NumericError("backward: non-finite gradient at output of op '" +
                               std::string(n.op) + "'" + stage_suffix(n));
        if (n.fn) n.fn(*this, id);
      }
      if (id == 0) break;
    }
  }

  bool backward_done() const { return backward_done_; }

  std::size_t node_count() const { return nodes_.size(); }

  /// Diagnostic label attached to nodes recorded from now on; reported in
  /// error messages so failures name the model stage, not just the primitive.
  void stage(std::string name) { stage_ = std::move(name); }

  // ---- extension points used by the op constructors ----------------------

  Var make_node(Tensor value, std::initializer_list<Var> parents,
                const char* op, BackwardFn fn) {
    bool rg = false;
    for (const Var& p : parents) {
      if (p.tape() != this)
        throw DomainError(std::string("op '") + op + "': inputs from different tapes");
      rg = rg || nodes_[p.id()].requires_grad;
    }
    return push_node(std::move(value), rg, op, std::move(fn));
  }

  /// n-ary variant addressing parents by node id.
  Var make_node_n(Tensor value, const std::vector<std::uint32_t>& parents,
                  const char* op, BackwardFn fn) {
    bool rg = false;
    for (std::uint32_t id : parents) rg = rg || nodes_[id].requires_grad;
    return push_node(std::move(value), rg, op, std::move(fn));
  }

  /// Gradient accumulation buffer for node `id`, or nullptr when that node
  /// does not participate in gradients. Allocated (zeroed) on first use.
  double* grad_sink(std::uint32_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad.data();
  }

  const Tensor& value_of(std::uint32_t id) const { return nodes_[id].value; }
  const std::vector<double>& grad_of(std::uint32_t id) const {
    return nodes_[id].grad;
  }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;  // empty until touched by backward
    bool requires_grad = false;
    const char* op = "leaf";
    std::string stage;
    BackwardFn fn;
  };

  Var leaf(Tensor v, bool requires_grad) {
    if (!v.all_finite())
      throw NumericError("leaf tensor contains non-finite values");
    Node n;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  Var push_node(Tensor value, bool rg, const char* op, BackwardFn fn) {
    if (!value.all_finite())
      throw NumericError(std::string("op '") + op +
                         "' produced a non-finite value" + stage_suffix_cur());
    Node n;
    n.value = std::move(value);
    n.requires_grad = rg;
    n.op = op;
    n.stage = stage_;
    if (rg) n.fn = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  const Node& at(Var v) const {
    if (v.tape() != this) throw DomainError("Var does not belong to this tape");
    return nodes_[v.id()];
  }

  static std::string stage_suffix(const Node& n) {
    return n.stage.empty() ? std::string() : " in stage '" + n.stage + "'";
  }
  std::string stage_suffix_cur() const {
    return stage_.empty() ? std::string() : " in stage '" + stage_ + "'";
  }

  std::vector<Node> nodes_;
  std::string stage_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }
inline const Shape& Var::shape() const { return tape_->value(*this).shape(); }

// ---------------------------------------------------------------------------
// Elementwise operations. Binary ops broadcast when the smaller operand's
// shape is a trailing suffix of the larger's (scalars included); nothing more.
// ---------------------------------------------------------------------------

namespace detail {

inline void check_same_tape(Var a, Var b, const char* op) {
  if (a.tape() != b.tape() || a.tape() == nullptr)
    throw DomainError(std::string("op '") + op + "': inputs from different tapes");
}

template <class F>
Tensor ew_forward(const Tensor& a, const Tensor& b, const char* op, F f) {
  const Tensor *big = &a, *small = &b;
  if (!is_suffix(small->shape(), big->shape())) {
    std::swap(big, small);
    if (!is_suffix(small->shape(), big->shape()))
      throw ShapeError(std::string("op '") + op + "': shapes " + shape_str(a.shape()) +
                       " and " + shape_str(b.shape()) + " are not broadcast-compatible");
  }
  Tensor out(big->shape());
  const std::size_t bs = small->size(), total = big->size();
  const bool a_is_big = (big == &a);
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  if (bs == total) {
    for (std::size_t i = 0; i < total; ++i) po[i] = f(pa[i], pb[i]);
  } else if (a_is_big) {
    for (std::size_t o = 0; o < total; o += bs)
      for (std::size_t j = 0; j < bs; ++j) po[o + j] = f(pa[o + j], pb[j]);
  } else {
    for (std::size_t o = 0; o < total; o += bs)
      for (std::size_t j = 0; j < bs; ++j) po[o + j] = f(pa[j], pb[o + j]);
  }
  return out;
}

// Accumulate `contrib[i]` (a function of the flat output index) into the
// gradient of an operand of size `opn`, reducing over broadcast copies.
template <class Contrib>
void ew_accumulate(double* gop, std::size_t opn, std::size_t total, Contrib contrib) {
  if (opn == total) {
    for (std::size_t i = 0; i < total; ++i) gop[i] += contrib(i);
  } else {
    for (std::size_t o = 0; o < total; o += opn)
      for (std::size_t j = 0; j < opn; ++j) gop[j] += contrib(o + j);
  }
}

}  // namespace detail

inline Var add(Var a, Var b) {
  detail::check_same_tape(a, b, "add");
  Tape& t = *a.tape();
  Tensor out = detail::ew_forward(t.value(a), t.value(b), "add",
                                  [](double x, double y) { return x + y; });
  return t.make_node(std::move(out), {a, b}, "add",
                     [ai = a.id(), bi = b.id()](Tape& t, std::uint32_t self) {
                       const auto& g = t.grad_of(self);
                       const std::size_t total = g.size();
                       if (double* ga = t.grad_sink(ai))
                         detail::ew_accumulate(ga, t.value_of(ai).size(), total,
                                               [&](std::size_t i) { return g[i]; });
                       if (double* gb = t.grad_sink(bi))
                         detail::ew_accumulate(gb, t.value_of(bi).size(), total,
                                               [&](std::size_t i) { return g[i]; });
                     });
}

inline Var sub(Var a, Var b) {
  detail::check_same_tape(a, b, "sub");
  Tape& t = *a.tape();
  Tensor out = detail::ew_forward(t.value(a), t.value(b), "sub",
                                  [](double x, double y) { return x - y; });
  return t.make_node(std::move(out), {a, b}, "sub",
                     [ai = a.id(), bi = b.id()](Tape& t, std::uint32_t self) {
                       const auto& g = t.grad_of(self);
                       const std::size_t total = g.size();
                       if (double* ga = t.grad_sink(ai))
                         detail::ew_accumulate(ga, t.value_of(ai).size(), total,
                                               [&](std::size_t i) { return g[i]; });
                       if (double* gb = t.grad_sink(bi))
                         detail::ew_accumulate(gb, t.value_of(bi).size(), total,
                                               [&](std::size_t i) { return -g[i]; });
                     });
}

inline Var mul(Var a, Var b) {
  detail::check_same_tape(a, b, "mul");
  Tape& t = *a.tape();
  Tensor out = detail::ew_forward(t.value(a), t.value(b), "mul",
                                  [](double x, double y) { return x * y; });
  return t.make_node(
      std::move(out), {a, b}, "mul",
      [ai = a.id(), bi = b.id()](Tape& t, std::uint32_t self) {
        const auto& g = t.grad_of(self);
        const Tensor& av = t.value_of(ai);
        const Tensor& bv = t.value_of(bi);
        const std::size_t total = g.size(), an = av.size(), bn = bv.size();
        if (double* ga = t.grad_sink(ai))
          detail::ew_accumulate(ga, an, total, [&](std::size_t i) {
            return g[i] * bv[bn == total ? i : i % bn];
          });
        if (double* gb = t.grad_sink(bi))
          detail::ew_accumulate(gb, bn, total, [&](std::size_t i) {
            return g[i] * av[an == total ? i : i % an];
          });
      });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

namespace detail {

// Unary elementwise node: dfdx receives (x, y) so implementations can reuse
// whichever is cheaper.
template <class F, class D>
Var ew_unary(Var x, const char* op, F f, D dfdx) {
  Tape& t = *x.tape();
  const Tensor& xv = t.value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return t.make_node(std::move(out), {x}, op,
                     [xi = x.id(), dfdx](Tape& t, std::uint32_t self) {
                       double* gx = t.grad_sink(xi);
                       if (!gx) return;
                       const auto& g = t.grad_of(self);
                       const Tensor& xv = t.value_of(xi);
                       const Tensor& yv = t.value_of(self);
                       for (std::size_t i = 0; i < g.size(); ++i)
                         gx[i] += g[i] * dfdx(xv[i], yv[i]);
                     });
}

}  // namespace detail

inline Var tanh(Var x) {
  return detail::ew_unary(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Var sin(Var x) {
  return detail::ew_unary(
      x, "sin", [](double v) { return std::sin(v); },
      [](double v, double) { return std::cos(v); });
}

inline Var cos(Var x) {
  return detail::ew_unary(
      x, "cos", [](double v) { return std::cos(v); },
      [](double v, double) { return -std::sin(v); });
}

inline Var square(Var x) {
  return detail::ew_unary(
      x, "square", [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

inline Var relu(Var x) {
  return detail::ew_unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Var exp(Var x) {
  return detail::ew_unary(
      x, "exp", [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

/// Exact GELU, x * Phi(x) with the error-function form (not the tanh
/// approximation).
inline Var gelu(Var x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return detail::ew_unary(
      x, "gelu",
      [=](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [=](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        return cdf + v * pdf;
      });
}

/// Elementwise max(x, c). Gradient flows only where x is strictly above c
/// (same subgradient convention as relu at the kink).
inline Var maximum(Var x, double c) {
  return detail::ew_unary(
      x, "maximum", [=](double v) { return v > c ? v : c; },
      [=](double v, double) { return v > c ? 1.0 : 0.0; });
}

inline Var scale(Var x, double s) {
  return detail::ew_unary(
      x, "scale", [=](double v) { return s * v; },
      [=](double, double) { return s; });
}

// ---------------------------------------------------------------------------
// Matrix product: a[..., M, K] * b[K, N]. Leading axes of `a` are batch axes;
// `b` must be exactly rank 2.
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
  detail::check_same_tape(a, b, "matmul");
  Tape& t = *a.tape();
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.rank() < 2 || bv.rank() != 2)
    throw ShapeError("matmul: need a rank>=2 left operand and rank-2 right operand, got " +
                     shape_str(av.shape()) + " * " + shape_str(bv.shape()));
  const std::size_t m = av.dim(av.rank() - 2);
  const std::size_t k = av.dim(av.rank() - 1);
  const std::size_t n = bv.dim(1);
  if (bv.dim(0) != k)
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(av.shape()) +
                     " * " + shape_str(bv.shape()));
  Shape out_shape(av.shape());
  out_shape.back() = n;
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < av.rank(); ++i) batch *= av.dim(i);
  Tensor out(std::move(out_shape));
  for (std::size_t s = 0; s < batch; ++s)
    detail::gemm_accum(av.data() + s * m * k, bv.data(), out.data() + s * m * n,
                       m, k, n);
  return t.make_node(
      std::move(out), {a, b}, "matmul",
      [ai = a.id(), bi = b.id(), m, k, n, batch](Tape& t, std::uint32_t self) {
        const auto& g = t.grad_of(self);
        const Tensor& av = t.value_of(ai);
        const Tensor& bv = t.value_of(bi);
        if (double* ga = t.grad_sink(ai)) {
          // dA = dC * B^T, done as a plain product against the transposed B.
          std::vector<double> bt(k * n);
          detail::transpose_into(bv.data(), bt.data(), k, n);
          for (std::size_t s = 0; s < batch; ++s)
            detail::gemm_accum(g.data() + s * m * n, bt.data(), ga + s * m * k,
                               m, n, k);
        }
        if (double* gb = t.grad_sink(bi)) {
          for (std::size_t s = 0; s < batch; ++s)
            detail::gemm_tn_accum(av.data() + s * m * k, g.data() + s * m * n,
                                  gb, m, k, n);
        }
      });
}

inline Var transpose(Var x) {
  Tape& t = *x.tape();
  const Tensor& xv = t.value(x);
  if (xv.rank() != 2)
    throw ShapeError("transpose: expected rank 2, got " + shape_str(xv.shape()));
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  Tensor out(Shape{n, m});
  detail::transpose_into(xv.data(), out.data(), m, n);
  return t.make_node(std::move(out), {x}, "transpose",
                     [xi = x.id(), m, n](Tape& t, std::uint32_t self) {
                       double* gx = t.grad_sink(xi);
                       if (!gx) return;
                       const auto& g = t.grad_of(self);
                       for (std::size_t j = 0; j < n; ++j)
                         for (std::size_t i = 0; i < m; ++i)
                           gx[i * n + j] += g[j * m + i];
                     });
}

inline Var reshape(Var x, Shape shape) {
  Tape& t = *x.tape();
  Tensor out = t.value(x).reshaped(std::move(shape));
  return t.make_node(std::move(out), {x}, "reshape",
                     [xi = x.id()](Tape& t, std::uint32_t self) {
                       double* gx = t.grad_sink(xi);
                       if (!gx) return;
                       const auto& g = t.grad_of(self);
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                     });
}

// ---------------------------------------------------------------------------
// Reductions over one axis. The axis is removed from the output shape.
// ---------------------------------------------------------------------------

namespace detail {

struct AxisSplit {
  std::size_t outer, len, inner;
  Shape out_shape;
};

inline AxisSplit split_axis(const Tensor& x, std::size_t axis, const char* op) {
  if (axis >= x.rank())
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(x.shape()));
  if (x.dim(axis) == 0)
    throw DomainError(std::string(op) + ": reduction over an empty axis");
  AxisSplit s{1, x.dim(axis), 1, x.shape()};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) s.inner *= x.dim(i);
  s.out_shape.erase(s.out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  return s;
}

}  // namespace detail

inline Var reduce_sum(Var x, std::size_t axis) {
  Tape& t = *x.tape();
  const Tensor& xv = t.value(x);
  auto s = detail::split_axis(xv, axis, "reduce_sum");
  Tensor out(s.out_shape);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l) {
      const double* px = xv.data() + (o * s.len + l) * s.inner;
      double* po = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) po[i] += px[i];
    }
  return t.make_node(std::move(out), {x}, "reduce_sum",
                     [xi = x.id(), s](Tape& t, std::uint32_t self) {
                       double* gx = t.grad_sink(xi);
                       if (!gx) return;
                       const auto& g = t.grad_of(self);
                       for (std::size_t o = 0; o < s.outer; ++o)
                         for (std::size_t l = 0; l < s.len; ++l) {
                           double* pgx = gx + (o * s.len + l) * s.inner;
                           const double* pg = g.data() + o * s.inner;
                           for (std::size_t i = 0; i < s.inner; ++i) pgx[i] += pg[i];
                         }
                     });
}

inline Var reduce_mean(Var x, std::size_t axis) {
  Tape& t = *x.tape();
  const Tensor& xv = t.value(x);
  auto s = detail::split_axis(xv, axis, "reduce_mean");
  const double inv = 1.0 / double(s.len);
  Tensor out(s.out_shape);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.len; ++l) {
      const double* px = xv.data() + (o * s.len + l) * s.inner;
      double* po = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) po[i] += px[i];
    }
    double* po = out.data() + o * s.inner;
    for (std::size_t i = 0; i < s.inner; ++i) po[i] *= inv;
  }
  return t.make_node(std::move(out), {x}, "reduce_mean",
                     [xi = x.id(), s, inv](Tape& t, std::uint32_t self) {
                       double* gx = t.grad_sink(xi);
                       if (!gx) return;
                       const auto& g = t.grad_of(self);
                       for (std::size_t o = 0; o < s.outer; ++o)
                         for (std::size_t l = 0; l < s.len; ++l) {
                           double* pgx = gx + (o * s.len + l) * s.inner;
                           const double* pg = g.data() + o * s.inner;
                           for (std::size_t i = 0; i < s.inner; ++i)
                             pgx[i] += pg[i] * inv;
                         }
                     });
}

/// Max over one axis. The backward pass routes the whole upstream gradient to
/// exactly one argmax element per reduced slice; ties break to the lowest
/// index so results are reproducible.
inline Var reduce_max(Var x, std::size_t axis) {
  Tape& t = *x.tape();
  const Tensor& xv = t.value(x);
  auto s = detail::split_axis(xv, axis, "reduce_max");
  Tensor out(s.out_shape);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      double best = xv.data()[(o * s.len) * s.inner + i];
      for (std::size_t l = 1; l < s.len; ++l) {
        const double v = xv.data()[(o * s.len + l) * s.inner + i];
        if (v > best) best = v;
      }
      out.data()[o * s.inner + i] = best;
    }
  return t.make_node(
      std::move(out), {x}, "reduce_max",
      [xi = x.id(), s](Tape& t, std::uint32_t self) {
        double* gx = t.grad_sink(xi);
        if (!gx) return;
        const auto& g = t.grad_of(self);
        const Tensor& xv = t.value_of(xi);
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t i = 0; i < s.inner; ++i) {
            std::size_t arg = 0;
            double best = xv.data()[(o * s.len) * s.inner + i];
            for (std::size_t l = 1; l < s.len; ++l) {
              const double v = xv.data()[(o * s.len + l) * s.inner + i];
              if (v > best) {
                best = v;
                arg = l;
              }
            }
            gx[(o * s.len + arg) * s.inner + i] += g[o * s.inner + i];
          }
      });
}

/// Sum of every element, as a rank-0 scalar.
inline Var sum_all(Var x) {
  Tape& t = *x.tape();
  const Tensor& xv = t.value(x);
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i];
  return t.make_node(Tensor::scalar(acc), {x}, "sum_all",
                     [xi = x.id()](Tape& t, std::uint32_t self) {
                       double* gx = t.grad_sink(xi);
                       if (!gx) return;
                       const double g = t.grad_of(self)[0];
                       const std::size_t n = t.value_of(xi).size();
                       for (std::size_t i = 0; i < n; ++i) gx[i] += g;
                     });
}

// ---------------------------------------------------------------------------
// Softmax over the last axis (numerically stabilized).
// ---------------------------------------------------------------------------

inline Var softmax(Var x) {
  Tape& t = *x.tape();
  const Tensor& xv = t.value(x);
  if (xv.rank() < 1)
    throw ShapeError("softmax: need rank >= 1");
  const std::size_t h = xv.dim(xv.rank() - 1);
  if (h == 0) throw DomainError("softmax: empty last axis");
  const std::size_t rows = xv.size() / h;
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* px = xv.data() + r * h;
    double* po = out.data() + r * h;
    double mx = px[0];
    for (std::size_t j = 1; j < h; ++j) mx = std::max(mx, px[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      po[j] = std::exp(px[j] - mx);
      z += po[j];
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < h; ++j) po[j] *= inv;
  }
  return t.make_node(std::move(out), {x}, "softmax",
                     [xi = x.id(), h, rows](Tape& t, std::uint32_t self) {
                       double* gx = t.grad_sink(xi);
                       if (!gx) return;
                       const auto& g = t.grad_of(self);
                       const Tensor& y = t.value_of(self);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* py = y.data() + r * h;
                         const double* pg = g.data() + r * h;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < h; ++j) dot += pg[j] * py[j];
                         double* pgx = gx + r * h;
                         for (std::size_t j = 0; j < h; ++j)
                           pgx[j] += py[j] * (pg[j] - dot);
                       }
                     });
}

// ---------------------------------------------------------------------------
// Mean negative log-likelihood of integer labels under softmax(logits).
// Stabilized by subtracting the row max; backward is (softmax - onehot) / B.
// ---------------------------------------------------------------------------

inline Var softmax_cross_entropy(Var logits, const std::vector<int>& labels) {
  Tape& t = *logits.tape();
  const Tensor& lv = t.value(logits);
  if (lv.rank() != 2)
    throw ShapeError("softmax_cross_entropy: logits must be [B,C], got " +
                     shape_str(lv.shape()));
  const std::size_t b = lv.dim(0), c = lv.dim(1);
  if (labels.size() != b)
    throw DomainError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                      " labels for batch of " + std::to_string(b));
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw DomainError("softmax_cross_entropy: label " + std::to_string(y) +
                        " out of range [0," + std::to_string(c) + ")");
  Tensor probs(Shape{b, c});
  double loss = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    const double* pl = lv.data() + r * c;
    double* pp = probs.data() + r * c;
    double mx = pl[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, pl[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      pp[j] = std::exp(pl[j] - mx);
      z += pp[j];
    }
    loss += std::log(z) + mx - pl[labels[r]];
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < c; ++j) pp[j] *= inv;
  }
  loss /= double(b);
  return t.make_node(
      Tensor::scalar(loss), {logits}, "softmax_cross_entropy",
      [li = logits.id(), probs = std::move(probs), labels, b, c](
          Tape& t, std::uint32_t self) {
        double* gl = t.grad_sink(li);
        if (!gl) return;
        const double g = t.grad_of(self)[0] / double(b);
        for (std::size_t r = 0; r < b; ++r)
          for (std::size_t j = 0; j < c; ++j)
            gl[r * c + j] +=
                g * (probs[r * c + j] -
                     (j == static_cast<std::size_t>(labels[r]) ? 1.0 : 0.0));
      });
}

// ---------------------------------------------------------------------------
// Layer normalization over the last axis (population variance, eps inside the
// square root), followed by the learned affine map.
// ---------------------------------------------------------------------------

inline Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
  detail::check_same_tape(x, gain, "layer_norm");
  detail::check_same_tape(x, bias, "layer_norm");
  Tape& t = *x.tape();
  const Tensor& xv = t.value(x);
  const Tensor& gv = t.value(gain);
  const Tensor& bv = t.value(bias);
  if (xv.rank() < 1) throw ShapeError("layer_norm: need rank >= 1");
  const std::size_t h = xv.dim(xv.rank() - 1);
  if (h < 2) throw DomainError("layer_norm: last axis must have length >= 2");
  if (gv.shape() != Shape{h} || bv.shape() != Shape{h})
    throw ShapeError("layer_norm: gain/bias must be shape [" + std::to_string(h) + "]");
  const std::size_t rows = xv.size() / h;
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* px = xv.data() + r * h;
    double* po = out.data() + r * h;
    double mu = 0.0;
    for (std::size_t j = 0; j < h; ++j) mu += px[j];
    mu /= double(h);
    double var = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      const double d = px[j] - mu;
      var += d * d;
    }
    var /= double(h);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < h; ++j)
      po[j] = (px[j] - mu) * inv * gv[j] + bv[j];
  }
  return t.make_node(
      std::move(out), {x, gain, bias}, "layer_norm",
      [xi = x.id(), gi = gain.id(), bi = bias.id(), h, rows, eps](
          Tape& t, std::uint32_t self) {
        const auto& g = t.grad_of(self);
        const Tensor& xv = t.value_of(xi);
        const Tensor& gv = t.value_of(gi);
        double* gx = t.grad_sink(xi);
        double* gg = t.grad_sink(gi);
        double* gb = t.grad_sink(bi);
        std::vector<double> xhat(h);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* px = xv.data() + r * h;
          const double* pg = g.data() + r * h;
          double mu = 0.0;
          for (std::size_t j = 0; j < h; ++j) mu += px[j];
          mu /= double(h);
          double var = 0.0;
          for (std::size_t j = 0; j < h; ++j) {
            const double d = px[j] - mu;
            var += d * d;
          }
          var /= double(h);
          const double inv = 1.0 / std::sqrt(var + eps);
          for (std::size_t j = 0; j < h; ++j) xhat[j] = (px[j] - mu) * inv;
          if (gb)
            for (std::size_t j = 0; j < h; ++j) gb[j] += pg[j];
          if (gg)
            for (std::size_t j = 0; j < h; ++j) gg[j] += pg[j] * xhat[j];
          if (gx) {
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < h; ++j) {
              const double dxhat = pg[j] * gv[j];
              sum_dxhat += dxhat;
              sum_dxhat_xhat += dxhat * xhat[j];
            }
            double* pgx = gx + r * h;
            for (std::size_t j = 0; j < h; ++j) {
              const double dxhat = pg[j] * gv[j];
              pgx[j] += inv * (dxhat - sum_dxhat / double(h) -
                               xhat[j] * sum_dxhat_xhat / double(h));
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Structural ops: concatenate / slice along the last axis, pick / stack along
// the first axis.
// ---------------------------------------------------------------------------

inline Var concat_last(std::span<const Var> parts) {
  if (parts.empty()) throw DomainError("concat_last: no inputs");
  Tape& t = *parts[0].tape();
  const Tensor& first = t.value(parts[0]);
  if (first.rank() < 1) throw ShapeError("concat_last: need rank >= 1");
  Shape lead(first.shape().begin(), first.shape().end() - 1);
  std::size_t total_last = 0;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    detail::check_same_tape(parts[0], p, "concat_last");
    const Tensor& pv = t.value(p);
    if (pv.rank() != first.rank() ||
        !std::equal(lead.begin(), lead.end(), pv.shape().begin()))
      throw ShapeError("concat_last: leading dimensions disagree");
    widths.push_back(pv.dim(pv.rank() - 1));
    total_last += widths.back();
    ids.push_back(p.id());
  }
  Shape out_shape = lead;
  out_shape.push_back(total_last);
  const std::size_t rows = shape_size(lead);
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    double* po = out.data() + r * total_last;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const Tensor& pv = t.value_of(ids[p]);
      const double* pp = pv.data() + r * widths[p];
      for (std::size_t j = 0; j < widths[p]; ++j) *po++ = pp[j];
    }
  }
  return t.make_node_n(std::move(out), ids, "concat_last",
                       [ids, widths, total_last, rows](Tape& t,
                                                       std::uint32_t self) {
                         const auto& g = t.grad_of(self);
                         for (std::size_t r = 0; r < rows; ++r) {
                           const double* pg = g.data() + r * total_last;
                           for (std::size_t p = 0; p < ids.size(); ++p) {
                             double* gp = t.grad_sink(ids[p]);
                             if (gp) {
                               double* dst = gp + r * widths[p];
                               for (std::size_t j = 0; j < widths[p]; ++j)
                                 dst[j] += pg[j];
                             }
                             pg += widths[p];
                           }
                         }
                       });
}

inline Var concat_last(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat_last(std::span<const Var>(parts, 2));
}

inline Var slice_last(Var x, std::size_t start, std::size_t len) {
  Tape& t = *x.tape();
  const Tensor& xv = t.value(x);
  if (xv.rank() < 1) throw ShapeError("slice_last: need rank >= 1");
  const std::size_t h = xv.dim(xv.rank() - 1);
  if (start + len > h)
    throw ShapeError("slice_last: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") exceeds axis length " +
                     std::to_string(h));
  Shape out_shape = xv.shape();
  out_shape.back() = len;
  const std::size_t rows = xv.size() / h;
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* px = xv.data() + r * h + start;
    double* po = out.data() + r * len;
    for (std::size_t j = 0; j < len; ++j) po[j] = px[j];
  }
  return t.make_node(std::move(out), {x}, "slice_last",
                     [xi = x.id(), start, len, h, rows](Tape& t,
                                                        std::uint32_t self) {
                       double* gx = t.grad_sink(xi);
                       if (!gx) return;
                       const auto& g = t.grad_of(self);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double* dst = gx + r * h + start;
                         const double* pg = g.data() + r * len;
                         for (std::size_t j = 0; j < len; ++j) dst[j] += pg[j];
                       }
                     });
}

/// x[index] along the first axis; output drops that axis.
inline Var select0(Var x, std::size_t index) {
  Tape& t = *x.tape();
  const Tensor& xv = t.value(x);
  if (xv.rank() < 1) throw ShapeError("select0: need rank >= 1");
  if (index >= xv.dim(0))
    throw ShapeError("select0: index " + std::to_string(index) +
                     " out of range for axis of length " + std::to_string(xv.dim(0)));
  Shape out_shape(xv.shape().begin() + 1, xv.shape().end());
  const std::size_t block = shape_size(out_shape);
  Tensor out(out_shape);
  std::copy_n(xv.data() + index * block, block, out.data());
  return t.make_node(std::move(out), {x}, "select0",
                     [xi = x.id(), index, block](Tape& t, std::uint32_t self) {
                       double* gx = t.grad_sink(xi);
                       if (!gx) return;
                       const auto& g = t.grad_of(self);
                       double* dst = gx + index * block;
                       for (std::size_t i = 0; i < block; ++i) dst[i] += g[i];
                     });
}

/// Stack equally-shaped tensors along a new leading axis.
inline Var stack0(std::span<const Var> parts) {
  if (parts.empty()) throw DomainError("stack0: no inputs");
  Tape& t = *parts[0].tape();
  const Shape& s0 = t.value(parts[0]).shape();
  const std::size_t block = shape_size(s0);
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) {
    detail::check_same_tape(parts[0], p, "stack0");
    if (t.value(p).shape() != s0) throw ShapeError("stack0: shapes disagree");
    ids.push_back(p.id());
  }
  Shape out_shape{parts.size()};
  out_shape.insert(out_shape.end(), s0.begin(), s0.end());
  Tensor out(out_shape);
  for (std::size_t p = 0; p < ids.size(); ++p)
    std::copy_n(t.value_of(ids[p]).data(), block, out.data() + p * block);
  return t.make_node_n(std::move(out), ids, "stack0",
                       [ids, block](Tape& t, std::uint32_t self) {
                         const auto& g = t.grad_of(self);
                         for (std::size_t p = 0; p < ids.size(); ++p) {
                           double* gp = t.grad_sink(ids[p]);
                           if (!gp) continue;
                           const double* pg = g.data() + p * block;
                           for (std::size_t i = 0; i < block; ++i)
                             gp[i] += pg[i];
                         }
                       });
}

}  // namespace cten
