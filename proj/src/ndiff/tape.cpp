// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "vbpc/ndiff/tape.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "vbpc/error.hpp"
#include "vbpc/ndiff/kernels.hpp"
#include "vbpc/ndiff/linalg.hpp"

namespace vbpc::ndiff {

namespace {

[[noreturn]] void shape_fail(Prim op, const std::string& detail) {
  throw ShapeError(std::string(prim_name(op)) + ": " + detail);
}

enum class Bcast { same, row, col, scalar };

// How `b` broadcasts against `a`. `allow_col` admits a rows x 1 operand.
Bcast broadcast_kind(Prim op, const Array& a, const Array& b, bool allow_col) {
  if (a.same_shape(b)) return Bcast::same;
  if (b.is_scalar()) return Bcast::scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::row;
  if (allow_col && b.cols() == 1 && b.rows() == a.rows()) return Bcast::col;
  shape_fail(op, "cannot broadcast " + b.shape_str() + " against " + a.shape_str());
}

double bval(const Array& b, Bcast kind, std::size_t i, std::size_t j) {
  switch (kind) {
    case Bcast::same: return b(i, j);
    case Bcast::row: return b(0, j);
    case Bcast::col: return b(i, 0);
    case Bcast::scalar: return b(0, 0);
  }
  return 0.0;
}

// Sums a full-size gradient down to the shape of a broadcast operand.
Array reduce_to(const Array& g, Bcast kind) {
  switch (kind) {
    case Bcast::same: return g;
    case Bcast::row: {
      Array out(1, g.cols());
      auto o = out.mutable_values();
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) o[j] += g(i, j);
      return out;
    }
    case Bcast::col: {
      Array out(g.rows(), 1);
      auto o = out.mutable_values();
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) o[i] += g(i, j);
      return out;
    }
    case Bcast::scalar: {
      double s = 0.0;
      for (double v : g.values()) s += v;
      return Array::scalar(s);
    }
  }
  return g;
}

template <class F>
Array map(const Array& a, F f) {
  Array out(a.rows(), a.cols());
  auto o = out.mutable_values();
  auto av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) o[i] = f(av[i]);
  return out;
}

template <class F>
Array zip(const Array& a, const Array& b, Bcast kind, F f) {
  Array out(a.rows(), a.cols());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      o[i * a.cols() + j] = f(a(i, j), bval(b, kind, i, j));
  return out;
}

Array gemm(const Array& a, const Array& b) {
  Array c(a.rows(), b.cols());
  if (c.empty()) return c;
  auto cv = c.mutable_values();
  if (a.cols() == 0) return c;
  kernels::gemm(a.data(), b.data(), cv.data(), a.rows(), a.cols(), b.cols());
  return c;
}

Array transposed(const Array& a) {
  Array t(a.cols(), a.rows());
  if (t.empty()) return t;
  auto tv = t.mutable_values();
  kernels::transpose(a.data(), tv.data(), a.rows(), a.cols());
  return t;
}

Array accumulate(const Array& acc, const Array& g) {
  if (acc.empty()) return g.detached();
  Array out = acc;
  auto o = out.mutable_values();
  auto gv = g.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += gv[i];
  return out;
}

Array symmetric_inverse(const Array& factor) {
  return solve_with_factor(factor, Array::identity(factor.rows()));
}

struct Forward {
  Array out;
  std::shared_ptr<const Array> factor;
};

Forward forward(Prim op, std::span<const Array> x, const OpParams& p,
                const std::shared_ptr<const Array>& cached) {
  switch (op) {
    case Prim::matmul:
      if (x[0].cols() != x[1].rows())
        shape_fail(op, x[0].shape_str() + " times " + x[1].shape_str());
      return {gemm(x[0], x[1]), nullptr};
    case Prim::transpose:
      return {transposed(x[0]), nullptr};
    case Prim::add: {
      auto k = broadcast_kind(op, x[0], x[1], false);
      return {zip(x[0], x[1], k, [](double a, double b) { return a + b; }), nullptr};
    }
    case Prim::sub: {
      auto k = broadcast_kind(op, x[0], x[1], false);
      return {zip(x[0], x[1], k, [](double a, double b) { return a - b; }), nullptr};
    }
    case Prim::scale: {
      const double s = p.scalar;
      return {map(x[0], [s](double v) { return s * v; }), nullptr};
    }
    case Prim::hadamard: {
      auto k = broadcast_kind(op, x[0], x[1], true);
      return {zip(x[0], x[1], k, [](double a, double b) { return a * b; }), nullptr};
    }
    case Prim::relu:
      return {map(x[0], [](double v) { return v > 0.0 ? v : 0.0; }), nullptr};
    case Prim::row_log_softmax: {
      if (x[0].cols() == 0) shape_fail(op, "zero columns");
      Array out(x[0].rows(), x[0].cols());
      if (out.empty()) return {out, nullptr};
      auto o = out.mutable_values();
      kernels::row_log_softmax(x[0].data(), o.data(), x[0].rows(), x[0].cols());
      return {out, nullptr};
    }
    case Prim::rsqrt_shift: {
      const double alpha = p.scalar;
      for (double v : x[0].values()) {
        if (!(1.0 + alpha * v > 0.0)) {
          throw NonFiniteError("rsqrt_shift: 1 + alpha*x <= 0 for x = " + std::to_string(v));
        }
      }
      return {map(x[0], [alpha](double v) { return 1.0 / std::sqrt(1.0 + alpha * v); }),
              nullptr};
    }
    case Prim::cholesky_solve_spd: {
      if (x[0].rows() != x[0].cols()) shape_fail(op, "non-square " + x[0].shape_str());
      if (x[1].rows() != x[0].rows())
        shape_fail(op, "system " + x[0].shape_str() + " vs rhs " + x[1].shape_str());
      auto f = cached ? cached : std::make_shared<const Array>(cholesky_sym_part(x[0]));
      return {solve_with_factor(*f, x[1]), f};
    }
    case Prim::logdet_spd: {
      if (x[0].rows() != x[0].cols()) shape_fail(op, "non-square " + x[0].shape_str());
      auto f = cached ? cached : std::make_shared<const Array>(cholesky_sym_part(x[0]));
      return {Array::scalar(logdet_from_factor(*f)), f};
    }
    case Prim::trace_matmul: {
      const Array& a = x[0];
      const Array& b = x[1];
      if (a.cols() != b.rows() || a.rows() != b.cols())
        shape_fail(op, "Tr(" + a.shape_str() + " * " + b.shape_str() + ")");
      double s = 0.0;
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * b(j, i);
      return {Array::scalar(s), nullptr};
    }
    case Prim::row_gather: {
      const Array& a = x[0];
      Array out(p.indices.size(), a.cols());
      auto o = out.mutable_values();
      for (std::size_t r = 0; r < p.indices.size(); ++r) {
        const std::size_t src = p.indices[r];
        if (src >= a.rows())
          shape_fail(op, "row index " + std::to_string(src) + " out of " + a.shape_str());
        for (std::size_t j = 0; j < a.cols(); ++j) o[r * a.cols() + j] = a(src, j);
      }
      return {out, nullptr};
    }
    case Prim::sum: {
      const Array& a = x[0];
      Array out;
      switch (p.axis) {
        case SumAxis::all: out = reduce_to(a, Bcast::scalar); break;
        case SumAxis::rows: out = reduce_to(a, Bcast::col); break;
        case SumAxis::cols: out = reduce_to(a, Bcast::row); break;
      }
      return {out, nullptr};
    }
    case Prim::broadcast_div: {
      const Array& v = x[1];
      if (!(v.is_scalar() || (v.cols() == 1 && v.rows() == x[0].rows())))
        shape_fail(op, "divisor " + v.shape_str() + " against " + x[0].shape_str());
      auto k = v.is_scalar() ? Bcast::scalar : Bcast::col;
      return {zip(x[0], v, k, [](double a, double b) { return a / b; }), nullptr};
    }
  }
  shape_fail(op, "unknown primitive");
}

// Adjoints of every operand given the output adjoint `g`.
std::vector<Array> adjoints(Prim op, std::span<const Array> x, const Array& y, const Array& g,
                            const OpParams& p, const std::shared_ptr<const Array>& factor) {
  switch (op) {
    case Prim::matmul:
      return {gemm(g, transposed(x[1])), gemm(transposed(x[0]), g)};
    case Prim::transpose:
      return {transposed(g)};
    case Prim::add: {
      auto k = broadcast_kind(op, x[0], x[1], false);
      return {g, reduce_to(g, k)};
    }
    case Prim::sub: {
      auto k = broadcast_kind(op, x[0], x[1], false);
      return {g, map(reduce_to(g, k), [](double v) { return -v; })};
    }
    case Prim::scale: {
      const double s = p.scalar;
      return {map(g, [s](double v) { return s * v; })};
    }
    case Prim::hadamard: {
      auto k = broadcast_kind(op, x[0], x[1], true);
      Array ga = zip(g, x[1], k, [](double a, double b) { return a * b; });
      Array gb_full = zip(g, x[0], Bcast::same, [](double a, double b) { return a * b; });
      return {ga, reduce_to(gb_full, k)};
    }
    case Prim::relu:
      return {zip(g, x[0], Bcast::same, [](double gv, double xv) { return xv > 0.0 ? gv : 0.0; })};
    case Prim::row_log_softmax: {
      Array out(g.rows(), g.cols());
      auto o = out.mutable_values();
      for (std::size_t i = 0; i < g.rows(); ++i) {
        double gs = 0.0;
        for (std::size_t j = 0; j < g.cols(); ++j) gs += g(i, j);
        for (std::size_t j = 0; j < g.cols(); ++j)
          o[i * g.cols() + j] = g(i, j) - std::exp(y(i, j)) * gs;
      }
      return {out};
    }
    case Prim::rsqrt_shift: {
      const double alpha = p.scalar;
      return {zip(g, y, Bcast::same,
                  [alpha](double gv, double yv) { return -0.5 * alpha * yv * yv * yv * gv; })};
    }
    case Prim::cholesky_solve_spd: {
      // X = S^{-1} B with S = sym(A): dB = S^{-1} G, dA = -sym(dB X^T).
      Array gb = solve_with_factor(*factor, g);
      Array outer = gemm(gb, transposed(y));
      const std::size_t n = outer.rows();
      Array ga(n, n);
      auto o = ga.mutable_values();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) o[i * n + j] = -0.5 * (outer(i, j) + outer(j, i));
      return {ga, gb};
    }
    case Prim::logdet_spd: {
      const double gv = g.item();
      return {map(symmetric_inverse(*factor), [gv](double v) { return gv * v; })};
    }
    case Prim::trace_matmul: {
      const double gv = g.item();
      return {map(transposed(x[1]), [gv](double v) { return gv * v; }),
              map(transposed(x[0]), [gv](double v) { return gv * v; })};
    }
    case Prim::row_gather: {
      const Array& a = x[0];
      Array ga(a.rows(), a.cols());
      auto o = ga.mutable_values();
      for (std::size_t r = 0; r < p.indices.size(); ++r)
        for (std::size_t j = 0; j < a.cols(); ++j) o[p.indices[r] * a.cols() + j] += g(r, j);
      return {ga};
    }
    case Prim::sum: {
      const Array& a = x[0];
      Bcast k = p.axis == SumAxis::all ? Bcast::scalar
                : p.axis == SumAxis::rows ? Bcast::col
                                          : Bcast::row;
      Array ga(a.rows(), a.cols());
      auto o = ga.mutable_values();
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) o[i * a.cols() + j] = bval(g, k, i, j);
      return {ga};
    }
    case Prim::broadcast_div: {
      const Array& v = x[1];
      auto k = v.is_scalar() ? Bcast::scalar : Bcast::col;
      Array ga = zip(g, v, k, [](double gv, double vv) { return gv / vv; });
      Array gv_full(g.rows(), g.cols());
      auto o = gv_full.mutable_values();
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j)
          o[i * g.cols() + j] = -g(i, j) * y(i, j) / bval(v, k, i, j);
      return {ga, reduce_to(gv_full, k)};
    }
  }
  return {};
}

}  // namespace

std::string_view prim_name(Prim p) {
  switch (p) {
    case Prim::matmul: return "matmul";
    case Prim::transpose: return "transpose";
    case Prim::add: return "add";
    case Prim::sub: return "sub";
    case Prim::scale: return "scale";
    case Prim::hadamard: return "hadamard";
    case Prim::relu: return "relu";
    case Prim::row_log_softmax: return "row_log_softmax";
    case Prim::rsqrt_shift: return "rsqrt_shift";
    case Prim::cholesky_solve_spd: return "cholesky_solve_spd";
    case Prim::logdet_spd: return "logdet_spd";
    case Prim::trace_matmul: return "trace_matmul";
    case Prim::row_gather: return "row_gather";
    case Prim::sum: return "sum";
    case Prim::broadcast_div: return "broadcast_div";
  }
  return "?";
}

std::size_t prim_arity(Prim p) {
  switch (p) {
    case Prim::matmul:
    case Prim::add:
    case Prim::sub:
    case Prim::hadamard:
    case Prim::cholesky_solve_spd:
    case Prim::trace_matmul:
    case Prim::broadcast_div:
      return 2;
    default:
      return 1;
  }
}

Array Tape::leaf(Array value) {
  if (value.tracked()) value = value.detached();
  if (!all_finite(value)) throw NonFiniteError("leaf value is not finite");
  Node n;
  n.is_leaf = true;
  n.output = value;
  return record(std::move(n));
}

Array Tape::record(Node node) {
  Array out = node.output;
  nodes_.push_back(std::move(node));
  out.tape_ = this;
  out.node_ = nodes_.size() - 1;
  return out;
}

std::shared_ptr<const Array> Tape::cached_factor(const Array& a) {
  auto it = factor_cache_.find(a.node());
  return it == factor_cache_.end() ? nullptr : it->second;
}

std::shared_ptr<const Array> Tape::factor_of(const Array& a) {
  if (a.tape() != this) throw ShapeError("factor_of: array is not recorded on this tape");
  if (auto f = cached_factor(a)) return f;
  auto f = std::make_shared<const Array>(cholesky_sym_part(a));
  factor_cache_.emplace(a.node(), f);
  return f;
}

Array apply(Prim op, std::span<const Array> operands, const OpParams& params) {
  if (operands.size() != prim_arity(op)) {
    shape_fail(op, "expected " + std::to_string(prim_arity(op)) + " operands, got " +
                       std::to_string(operands.size()));
  }
  Tape* tape = nullptr;
  for (const Array& a : operands) {
    if (!a.tracked()) continue;
    if (tape && a.tape() != tape) shape_fail(op, "operands recorded on different tapes");
    tape = a.tape();
  }

  const bool factored = op == Prim::cholesky_solve_spd || op == Prim::logdet_spd;
  std::shared_ptr<const Array> cached;
  if (factored && tape && operands[0].tracked()) cached = tape->cached_factor(operands[0]);

  Forward fw = forward(op, operands, params, cached);
  if (!all_finite(fw.out)) {
    throw NonFiniteError(std::string(prim_name(op)) + ": non-finite result");
  }
  if (!tape) return fw.out;

  if (factored && operands[0].tracked() && !cached) {
    tape->factor_cache_.emplace(operands[0].node(), fw.factor);
  }
  Tape::Node node;
  node.op = op;
  node.params = params;
  node.factor = fw.factor;
  node.output = fw.out;
  for (const Array& a : operands) {
    node.inputs.push_back(a.tracked() ? a.node() : Tape::kNone);
    node.operands.push_back(a.detached());
  }
  return tape->record(std::move(node));
}

Gradients Tape::backward(const Array& seed) const {
  if (seed.tape() != this) throw ShapeError("backward: seed is not recorded on this tape");
  if (!seed.is_scalar()) throw ShapeError("backward: seed must be scalar, got " + seed.shape_str());

  Gradients grads;
  grads.tape_ = this;
  grads.adjoint_.resize(nodes_.size());
  grads.adjoint_[seed.node()] = Array::scalar(1.0);

  for (std::size_t id = seed.node() + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    const Array& g = grads.adjoint_[id];
    if (n.is_leaf || g.empty()) continue;
    bool needed = false;
    for (NodeId in : n.inputs) needed |= in != kNone;
    if (!needed) continue;
    std::vector<Array> parts = adjoints(n.op, n.operands, n.output, g, n.params, n.factor);
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const NodeId in = n.inputs[k];
      if (in == kNone) continue;
      grads.adjoint_[in] = accumulate(grads.adjoint_[in], parts[k]);
    }
  }
  return grads;
}

Array Gradients::wrt(const Array& a) const {
  if (a.tape() != tape_) throw ShapeError("wrt: array is not recorded on the differentiated tape");
  const Array& g = adjoint_[a.node()];
  if (g.empty() && !a.empty()) return Array(a.rows(), a.cols());
  return g;
}

Array matmul(const Array& a, const Array& b) { return ndiff::apply(Prim::matmul, std::array{a, b}); }
Array transpose(const Array& a) { return ndiff::apply(Prim::transpose, std::array{a}); }
Array add(const Array& a, const Array& b) { return ndiff::apply(Prim::add, std::array{a, b}); }
Array sub(const Array& a, const Array& b) { return ndiff::apply(Prim::sub, std::array{a, b}); }
Array scale(const Array& a, double s) {
  OpParams p;
  p.scalar = s;
  return ndiff::apply(Prim::scale, std::array{a}, p);
}
Array hadamard(const Array& a, const Array& b) {
  return ndiff::apply(Prim::hadamard, std::array{a, b});
}
Array relu(const Array& a) { return ndiff::apply(Prim::relu, std::array{a}); }
Array row_log_softmax(const Array& a) { return ndiff::apply(Prim::row_log_softmax, std::array{a}); }
Array rsqrt_shift(const Array& a, double alpha) {
  OpParams p;
  p.scalar = alpha;
  return ndiff::apply(Prim::rsqrt_shift, std::array{a}, p);
}
Array cholesky_solve_spd(const Array& a, const Array& b) {
  return ndiff::apply(Prim::cholesky_solve_spd, std::array{a, b});
}
Array logdet_spd(const Array& a) { return ndiff::apply(Prim::logdet_spd, std::array{a}); }
Array trace_matmul(const Array& a, const Array& b) {
  return ndiff::apply(Prim::trace_matmul, std::array{a, b});
}
Array row_gather(const Array& a, std::vector<std::size_t> indices) {
  OpParams p;
  p.indices = std::move(indices);
  return ndiff::apply(Prim::row_gather, std::array{a}, p);
}
Array sum(const Array& a, SumAxis axis) {
  OpParams p;
  p.axis = axis;
  return ndiff::apply(Prim::sum, std::array{a}, p);
}
Array broadcast_div(const Array& a, const Array& v) {
  return ndiff::apply(Prim::broadcast_div, std::array{a, v});
}

}  // namespace vbpc::ndiff
