// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vbpc/ndiff/array.hpp"

namespace vbpc::ndiff {

// The closed primitive set. Everything above this layer is composed from
// these, so one gradient-check suite over them certifies every downstream
// gradient.
enum class Prim {
  matmul,
  transpose,
  add,  // B same shape, a 1 x cols row (broadcast down rows) or 1 x 1
  sub,  // same broadcasting as add
  scale,
  hadamard,  // B same shape, rows x 1, 1 x cols or 1 x 1
  relu,
  row_log_softmax,
  rsqrt_shift,  // x -> 1/sqrt(1 + alpha x)
  cholesky_solve_spd,
  logdet_spd,
  trace_matmul,  // Tr(A B)
  row_gather,
  sum,
  broadcast_div,  // A_ij / v_i for v rows x 1 (or 1 x 1)
};

inline constexpr Prim kAllPrims[] = {
    Prim::matmul,          Prim::transpose,   Prim::add,
    Prim::sub,             Prim::scale,       Prim::hadamard,
    Prim::relu,            Prim::row_log_softmax, Prim::rsqrt_shift,
    Prim::cholesky_solve_spd, Prim::logdet_spd, Prim::trace_matmul,
    Prim::row_gather,      Prim::sum,         Prim::broadcast_div,
};

std::string_view prim_name(Prim p);
std::size_t prim_arity(Prim p);

enum class SumAxis { all, rows, cols };

// Non-array arguments. `scalar` is the factor of scale and alpha of
// rsqrt_shift; `axis` selects the reduction of sum (`rows` gives one value per
// row); `indices` are the rows picked by row_gather.
struct OpParams {
  double scalar = 0.0;
  SumAxis axis = SumAxis::all;
  std::vector<std::size_t> indices;
};

class Tape;

class Gradients {
 public:
  // Gradient of the seed with respect to `a` (zeros if `a` was not reached).
  Array wrt(const Array& a) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<Array> adjoint_;
};

// Records primitive applications whose operands live on it. A tape is owned
// by one thread; arrays recorded on it keep a pointer to it, so it is neither
// copyable nor movable and must outlive them.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a differentiable input.
  Array leaf(Array value);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Cholesky factor of sym(a) for an array recorded on this tape. Computed
  // once and shared with later cholesky_solve_spd / logdet_spd on `a`.
  std::shared_ptr<const Array> factor_of(const Array& a);

  // Reverse sweep from a scalar recorded on this tape.
  Gradients backward(const Array& seed) const;

 private:
  friend Array apply(Prim op, std::span<const Array> operands, const OpParams& params);
  friend class Gradients;

  static constexpr NodeId kNone = static_cast<NodeId>(-1);

  struct Node {
    Prim op = Prim::matmul;
    bool is_leaf = false;
    std::vector<NodeId> inputs;
    std::vector<Array> operands;
    Array output;
    OpParams params;
    std::shared_ptr<const Array> factor;
  };

  Array record(Node node);
  std::shared_ptr<const Array> cached_factor(const Array& a);

  std::vector<Node> nodes_;
  std::unordered_map<NodeId, std::shared_ptr<const Array>> factor_cache_;
};

// Generic dispatch. If any operand is tracked, the result is recorded on that
// tape (all tracked operands must share one tape). Throws ShapeError,
// NotSpdError or NonFiniteError.
Array apply(Prim op, std::span<const Array> operands, const OpParams& params = {});

Array matmul(const Array& a, const Array& b);
Array transpose(const Array& a);
Array add(const Array& a, const Array& b);
Array sub(const Array& a, const Array& b);
Array scale(const Array& a, double s);
Array hadamard(const Array& a, const Array& b);
Array relu(const Array& a);
Array row_log_softmax(const Array& a);
Array rsqrt_shift(const Array& a, double alpha);
// X = sym(A)^{-1} B with sym(A) = (A + A^T)/2.
Array cholesky_solve_spd(const Array& a, const Array& b);
Array logdet_spd(const Array& a);
Array trace_matmul(const Array& a, const Array& b);
Array row_gather(const Array& a, std::vector<std::size_t> indices);
Array sum(const Array& a, SumAxis axis = SumAxis::all);
Array broadcast_div(const Array& a, const Array& v);

}  // namespace vbpc::ndiff
