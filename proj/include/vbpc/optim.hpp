// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vbpc/ndiff/array.hpp"

namespace vbpc {

using ndiff::Array;

enum class OptimizerKind { adam, sgd };

// Per-block moment accumulators. Moments are created lazily on the first step
// so one state can be attached to any parameter list.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Array> m;
  std::vector<Array> v;
};

// One bias-corrected adaptive-moment update (or a plain gradient step for
// OptimizerKind::sgd) of `params` in place. Throws ShapeError on mismatch.
void adam_step(OptimizerState& state, std::span<Array> params, std::span<const Array> grads,
               double lr);

// base * (1 + cos(pi * step / total)) / 2 for 0 <= step <= total.
double cosine_lr(std::uint64_t step, std::uint64_t total, double base);

}  // namespace vbpc
