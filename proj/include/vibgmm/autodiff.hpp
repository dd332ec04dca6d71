#pragma once

// Define-by-run reverse-mode automatic differentiation over Tensor values.
//
// A Tape records every operation applied to Var handles in execution order.
// backward() walks the recording in reverse, once, and accumulates gradients
// into every node that depends on a trainable leaf. Parameters bound with
// Tape::param() receive their gradient in Parameter::grad.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vibgmm/errors.hpp"
#include "vibgmm/tensor.hpp"

namespace vibgmm {

/// Trainable tensor. The gradient is filled by Tape::backward and consumed
/// by the optimizer.
struct Parameter {
  std::string name;
  Tensor value;
  std::optional<Tensor> grad;

  void zero_grad() { grad.reset(); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid until the tape is
/// cleared or destroyed.
class Var {
 public:
  Var() = default;

  bool attached() const;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
  Tape& tape() const;
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id, std::uint64_t generation)
      : tape_(tape), id_(id), generation_(generation) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
  std::uint64_t generation_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient (data, noise draws).
  Var constant(Tensor value) {
    return push(Node{std::move(value), {}, {}, nullptr, false}, "constant");
  }

  /// Leaf bound to a trainable parameter.
  Var param(Parameter& p) { return push(Node{p.value, {}, {}, &p, true}, p.name); }

  /// Records an operation result. `backward` is invoked with this tape and the
  /// new node's id once the node's gradient is known.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> parents,
             BackwardFn backward) {
    bool needs = false;
    for (const auto& p : parents) {
      check_owned(p);
      needs = needs || nodes_[p.id_].requires_grad;
    }
    if (!needs) backward = nullptr;
    return push(Node{std::move(value), {}, std::move(backward), nullptr, needs}, op);
  }

  Var record(std::string_view op, Tensor value, const std::vector<Var>& parents,
             BackwardFn backward) {
    bool needs = false;
    for (const auto& p : parents) {
      check_owned(p);
      needs = needs || nodes_[p.id_].requires_grad;
    }
    if (!needs) backward = nullptr;
    return push(Node{std::move(value), {}, std::move(backward), nullptr, needs}, op);
  }

  void backward(const Var& loss) {
    if (!loss.attached()) throw UsageError("backward() on a detached tensor");
    check_owned(loss);
    const auto& lv = nodes_[loss.id_].value;
    if (lv.size() != 1) {
      throw UsageError("backward() requires a scalar loss, got shape " +
                       shape_string(lv.shape()));
    }
    for (auto& n : nodes_) n.grad.reset();
    grad_buffer(loss.id_).fill(1.0);
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.grad) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param) {
        if (n.param->grad) {
          auto dst = n.param->grad->data();
          auto src = n.grad->data();
          for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        } else {
          n.param->grad = *n.grad;
        }
      }
    }
  }

  /// Gradient of the last backward() loss w.r.t. `v` (zeros if unreached).
  Tensor grad(const Var& v) const {
    check_owned(v);
    const auto& n = nodes_[v.id_];
    return n.grad ? *n.grad : Tensor(n.value.shape(), 0.0);
  }

  /// Drops all nodes; outstanding Var handles become detached.
  void clear() {
    nodes_.clear();
    ++generation_;
  }

  std::size_t size() const { return nodes_.size(); }

  // Accessors used by backward closures.
  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor& grad_of(std::size_t id) const { return *nodes_[id].grad; }
  Tensor& grad_buffer(std::size_t id) {
    auto& n = nodes_[id];
    if (!n.grad) n.grad.emplace(n.value.shape(), 0.0);
    return *n.grad;
  }

  void check_owned(const Var& v) const {
    if (v.tape_ != this) throw UsageError("tensor belongs to a different tape");
    if (v.generation_ != generation_) throw UsageError("tensor from a cleared tape");
  }

 private:
  friend class Var;

  struct Node {
    Tensor value;
    std::optional<Tensor> grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Node node, std::string_view op) {
    if (!node.value.all_finite()) {
      throw NumericError("non-finite value produced by '" + std::string(op) + "'");
    }
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1, generation_);
  }

  std::deque<Node> nodes_;  // deque keeps value references stable on growth
  std::uint64_t generation_ = 1;
};

inline bool Var::attached() const {
  return tape_ != nullptr && generation_ == tape_->generation_;
}

inline const Tensor& Var::value() const {
  if (!attached()) throw UsageError("access to a detached tensor");
  return tape_->nodes_[id_].value;
}

inline Tape& Var::tape() const {
  if (!attached()) throw UsageError("access to a detached tensor");
  return *tape_;
}

namespace detail {

inline Tape& common_tape(const Var& a, const Var& b) {
  Tape& t = a.tape();
  t.check_owned(b);
  return t;
}

template <class F, class D>
Var unary(std::string_view name, const Var& a, F f, D dfdx) {
  Tape& t = a.tape();
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  return t.record(name, std::move(y), {a}, [ia, dfdx](Tape& tp, std::size_t self) {
    const Tensor& xv = tp.value_of(ia);
    const Tensor& yv = tp.value_of(self);
    const Tensor& g = tp.grad_of(self);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(xv[i], yv[i]);
  });
}

enum class Broadcast { same, a_scalar, b_scalar, a_row, b_row };

inline bool is_row_of(const Tensor& row, const Tensor& mat) {
  if (mat.rank() != 2) return false;
  const bool shaped = row.rank() == 1 || (row.rank() == 2 && row.shape()[0] == 1);
  return shaped && row.size() == mat.shape()[1];
}

inline Broadcast broadcast_mode(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::same;
  if (a.size() == 1 && b.size() == 1) return a.rank() >= b.rank() ? Broadcast::b_scalar : Broadcast::a_scalar;
  if (b.size() == 1) return Broadcast::b_scalar;
  if (a.size() == 1) return Broadcast::a_scalar;
  if (is_row_of(b, a)) return Broadcast::b_row;
  if (is_row_of(a, b)) return Broadcast::a_row;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                       " and " + shape_string(b.shape()));
}

template <class F, class DA, class DB>
Var binary(std::string_view name, const Var& a, const Var& b, F f, DA dfda, DB dfdb) {
  Tape& t = common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast mode = broadcast_mode(name, av, bv);
  const bool a_is_out = mode == Broadcast::same || mode == Broadcast::b_scalar ||
                        mode == Broadcast::b_row;
  Tensor y(a_is_out ? av.shape() : bv.shape());
  const std::size_t n = y.cols();
  auto ia_of = [mode, n](std::size_t i) -> std::size_t {
    if (mode == Broadcast::a_scalar) return 0;
    if (mode == Broadcast::a_row) return i % n;
    return i;
  };
  auto ib_of = [mode, n](std::size_t i) -> std::size_t {
    if (mode == Broadcast::b_scalar) return 0;
    if (mode == Broadcast::b_row) return i % n;
    return i;
  };
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(av[ia_of(i)], bv[ib_of(i)]);
  const std::size_t ida = a.id();
  const std::size_t idb = b.id();
  return t.record(name, std::move(y), {a, b},
                  [ida, idb, ia_of, ib_of, dfda, dfdb](Tape& tp, std::size_t self) {
                    const Tensor& x1 = tp.value_of(ida);
                    const Tensor& x2 = tp.value_of(idb);
                    const Tensor& g = tp.grad_of(self);
                    if (tp.requires_grad(ida)) {
                      Tensor& ga = tp.grad_buffer(ida);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        const auto p = ia_of(i);
                        const auto q = ib_of(i);
                        ga[p] += g[i] * dfda(x1[p], x2[q]);
                      }
                    }
                    if (tp.requires_grad(idb)) {
                      Tensor& gb = tp.grad_buffer(idb);
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        const auto p = ia_of(i);
                        const auto q = ib_of(i);
                        gb[q] += g[i] * dfdb(x1[p], x2[q]);
                      }
                    }
                  });
}

// Splits `shape` around `axis` into (outer, length, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, length = 1, inner = 1;
  Shape reduced;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("reduction axis " + std::to_string(axis) + " invalid for shape " +
                         shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t d = 0; d < shape.size(); ++d) {
    if (d < axis) s.outer *= shape[d];
    if (d > axis) s.inner *= shape[d];
    if (d != axis) s.reduced.push_back(shape[d]);
  }
  s.length = shape[axis];
  if (s.length == 0) throw DimensionError("reduction over an empty axis");
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(const Var& a, const Var& b) {
  return detail::binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

inline Var sub(const Var& a, const Var& b) {
  return detail::binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

inline Var mul(const Var& a, const Var& b) {
  return detail::binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

inline Var div(const Var& a, const Var& b) {
  return detail::binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

inline Var neg(const Var& a) {
  return detail::unary(
      "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

inline Var scale(const Var& a, double c) {
  return detail::unary(
      "scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Var add_scalar(const Var& a, double c) {
  return detail::unary(
      "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Var exp(const Var& a) {
  return detail::unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(const Var& a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return detail::unary(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

inline Var relu(const Var& a) {
  return detail::unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(const Var& a) {
  return detail::unary(
      "sigmoid", a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

inline Var square(const Var& a) {
  return detail::unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// Clamps into [lo, hi]; the gradient is zero where the bound is active.
inline Var clamp(const Var& a, double lo, double hi) {
  return detail::unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

inline Var clamp_min(const Var& a, double lo) {
  return clamp(a, lo, std::numeric_limits<double>::infinity());
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }
inline Var operator+(const Var& a, double c) { return add_scalar(a, c); }
inline Var operator+(double c, const Var& a) { return add_scalar(a, c); }
inline Var operator-(const Var& a, double c) { return add_scalar(a, -c); }
inline Var operator-(double c, const Var& a) { return add_scalar(neg(a), c); }

// ---------------------------------------------------------------------------
// Linear algebra and structural ops

inline Var matmul(const Var& a, const Var& b) {
  Tape& t = detail::common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0]) {
    throw DimensionError("matmul: cannot multiply " + shape_string(av.shape()) + " by " +
                         shape_string(bv.shape()));
  }
  const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
  Tensor y(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) y[i * n + j] += aip * bv[p * n + j];
    }
  }
  const std::size_t ida = a.id(), idb = b.id();
  return t.record("matmul", std::move(y), {a, b},
                  [ida, idb, m, k, n](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad_of(self);
                    const Tensor& x1 = tp.value_of(ida);
                    const Tensor& x2 = tp.value_of(idb);
                    if (tp.requires_grad(ida)) {
                      Tensor& ga = tp.grad_buffer(ida);  // g * b^T
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          double acc = 0.0;
                          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * x2[p * n + j];
                          ga[i * k + p] += acc;
                        }
                    }
                    if (tp.requires_grad(idb)) {
                      Tensor& gb = tp.grad_buffer(idb);  // a^T * g
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          const double aip = x1[i * k + p];
                          if (aip == 0.0) continue;
                          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                        }
                    }
                  });
}

/// Columns [begin, end) of a matrix.
inline Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  if (av.rank() != 2 || begin >= end || end > av.shape()[1]) {
    throw DimensionError("slice_cols: invalid range for shape " + shape_string(av.shape()));
  }
  const std::size_t m = av.shape()[0], n = av.shape()[1], w = end - begin;
  Tensor y(Shape{m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) y[i * w + j] = av[i * n + begin + j];
  const std::size_t ia = a.id();
  return a.tape().record("slice_cols", std::move(y), {a},
                         [ia, m, n, w, begin](Tape& tp, std::size_t self) {
                           const Tensor& g = tp.grad_of(self);
                           Tensor& ga = tp.grad_buffer(ia);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < w; ++j)
                               ga[i * n + begin + j] += g[i * w + j];
                         });
}

/// Row `r` of a matrix as a rank-1 tensor.
inline Var select_row(const Var& a, std::size_t r) {
  const Tensor& av = a.value();
  if (av.rank() != 2 || r >= av.shape()[0]) {
    throw DimensionError("select_row: row " + std::to_string(r) + " out of range for " +
                         shape_string(av.shape()));
  }
  const std::size_t n = av.shape()[1];
  Tensor y(Shape{n}, av.row(r));
  const std::size_t ia = a.id();
  return a.tape().record("select_row", std::move(y), {a}, [ia, r, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += g[j];
  });
}

/// Stacks equal-length vectors as the columns of a [length x count] matrix.
inline Var stack_cols(const std::vector<Var>& columns) {
  if (columns.empty()) throw DimensionError("stack_cols: no columns");
  Tape& t = columns.front().tape();
  const std::size_t m = columns.front().value().size();
  const std::size_t k = columns.size();
  Tensor y(Shape{m, k});
  std::vector<std::size_t> ids;
  for (std::size_t c = 0; c < k; ++c) {
    t.check_owned(columns[c]);
    const Tensor& v = columns[c].value();
    if (v.rank() > 1 || v.size() != m) {
      throw DimensionError("stack_cols: column " + std::to_string(c) + " has shape " +
                           shape_string(v.shape()));
    }
    for (std::size_t i = 0; i < m; ++i) y[i * k + c] = v[i];
    ids.push_back(columns[c].id());
  }
  return t.record("stack_cols", std::move(y), columns, [ids, m, k](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    for (std::size_t c = 0; c < k; ++c) {
      if (!tp.requires_grad(ids[c])) continue;
      Tensor& gc = tp.grad_buffer(ids[c]);
      for (std::size_t i = 0; i < m; ++i) gc[i] += g[i * k + c];
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(const Var& a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (double v : av.data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record("sum", Tensor::scalar(s), {a}, [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad_of(self)[0];
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

inline Var sum(const Var& a, std::size_t axis) {
  const Tensor& av = a.value();
  const auto s = detail::split_axis(av.shape(), axis);
  Tensor y(s.reduced);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.length; ++l)
      for (std::size_t in = 0; in < s.inner; ++in)
        y[o * s.inner + in] += av[(o * s.length + l) * s.inner + in];
  const std::size_t ia = a.id();
  return a.tape().record("sum_axis", std::move(y), {a}, [ia, s](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t l = 0; l < s.length; ++l)
        for (std::size_t in = 0; in < s.inner; ++in)
          ga[(o * s.length + l) * s.inner + in] += g[o * s.inner + in];
  });
}

inline Var mean(const Var& a, std::size_t axis) {
  const auto len = detail::split_axis(a.value().shape(), axis).length;
  return scale(sum(a, axis), 1.0 / static_cast<double>(len));
}

/// log(sum(exp(v))) with max subtraction.
inline double logsumexp_values(std::span<const double> v) {
  if (v.empty()) throw DimensionError("logsumexp over an empty range");
  const double m = *std::max_element(v.begin(), v.end());
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline Var logsumexp(const Var& a, std::size_t axis) {
  const Tensor& av = a.value();
  const auto s = detail::split_axis(av.shape(), axis);
  Tensor y(s.reduced);
  std::vector<double> buf(s.length);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      for (std::size_t l = 0; l < s.length; ++l) buf[l] = av[(o * s.length + l) * s.inner + in];
      y[o * s.inner + in] = logsumexp_values(buf);
    }
  const std::size_t ia = a.id();
  return a.tape().record("logsumexp", std::move(y), {a}, [ia, s](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& x = tp.value_of(ia);
    const Tensor& out = tp.value_of(self);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t l = 0; l < s.length; ++l)
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t r = o * s.inner + in;
          const std::size_t i = (o * s.length + l) * s.inner + in;
          ga[i] += g[r] * std::exp(x[i] - out[r]);
        }
  });
}

inline Var logsumexp(const Var& a) {
  const Tensor& av = a.value();
  const double out = logsumexp_values(av.data());
  const std::size_t ia = a.id();
  return a.tape().record("logsumexp", Tensor::scalar(out), {a},
                         [ia](Tape& tp, std::size_t self) {
                           const double g = tp.grad_of(self)[0];
                           const double o = tp.value_of(self)[0];
                           const Tensor& x = tp.value_of(ia);
                           Tensor& ga = tp.grad_buffer(ia);
                           for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g * std::exp(x[i] - o);
                         });
}

/// x - logsumexp(x) along `axis`, keeping the input shape.
inline Var log_softmax(const Var& a, std::size_t axis) {
  const Tensor& av = a.value();
  const auto s = detail::split_axis(av.shape(), axis);
  Tensor y(av.shape());
  std::vector<double> buf(s.length);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      for (std::size_t l = 0; l < s.length; ++l) buf[l] = av[(o * s.length + l) * s.inner + in];
      const double lse = logsumexp_values(buf);
      for (std::size_t l = 0; l < s.length; ++l) {
        const std::size_t i = (o * s.length + l) * s.inner + in;
        y[i] = av[i] - lse;
      }
    }
  const std::size_t ia = a.id();
  return a.tape().record("log_softmax", std::move(y), {a}, [ia, s](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& out = tp.value_of(self);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in) {
        double gsum = 0.0;
        for (std::size_t l = 0; l < s.length; ++l) gsum += g[(o * s.length + l) * s.inner + in];
        for (std::size_t l = 0; l < s.length; ++l) {
          const std::size_t i = (o * s.length + l) * s.inner + in;
          ga[i] += g[i] - std::exp(out[i]) * gsum;
        }
      }
  });
}

}  // namespace vibgmm
