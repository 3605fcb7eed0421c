// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "vbpc/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "vbpc/error.hpp"

namespace vbpc {

void adam_step(OptimizerState& state, std::span<Array> params, std::span<const Array> grads,
               double lr) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters vs " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (!params[b].same_shape(grads[b])) {
      throw ShapeError("adam_step: block " + std::to_string(b) + " parameter " +
                       params[b].shape_str() + " vs gradient " + grads[b].shape_str());
    }
  }
  ++state.step;

  if (state.kind == OptimizerKind::sgd) {
    for (std::size_t b = 0; b < params.size(); ++b) {
      auto p = params[b].mutable_values();
      auto g = grads[b].values();
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    }
    return;
  }

  if (state.m.empty()) {
    for (const Array& p : params) {
      state.m.emplace_back(p.rows(), p.cols());
      state.v.emplace_back(p.rows(), p.cols());
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: state holds " + std::to_string(state.m.size()) +
                     " blocks, got " + std::to_string(params.size()));
  }
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (!state.m[b].same_shape(params[b])) {
      throw ShapeError("adam_step: moment shape " + state.m[b].shape_str() + " vs parameter " +
                       params[b].shape_str());
    }
    auto p = params[b].mutable_values();
    auto m = state.m[b].mutable_values();
    auto v = state.v[b].mutable_values();
    auto g = grads[b].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
}

double cosine_lr(std::uint64_t step, std::uint64_t total, double base) {
  if (total == 0) return base;
  if (step > total) throw Error("cosine_lr: step beyond the schedule horizon");
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace vbpc
