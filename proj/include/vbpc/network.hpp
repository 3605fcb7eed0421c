// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "vbpc/ndiff/array.hpp"
#include "vbpc/optim.hpp"

namespace vbpc {

using ndiff::Array;

enum class InitKind { lecun, zero };

// Multilayer perceptron feature map with a linear head. widths = [d, w1, ..., h];
// every layer is affine followed by ReLU, and a single-entry width list is the
// identity feature map (h = d).
struct FeatureNet {
  std::vector<std::size_t> widths;
  std::vector<Array> weights;  // widths[l] x widths[l+1]
  std::vector<Array> biases;   // 1 x widths[l+1]
  Array head;                  // h x k
  std::uint64_t seed = 0;

  std::size_t input_dim() const { return widths.front(); }
  std::size_t feature_dim() const { return widths.back(); }
  std::size_t classes() const { return head.cols(); }

  // Weights, biases, then head; the order used by gaussian_step's optimizer.
  std::vector<Array> parameters() const;
  void set_parameters(std::vector<Array> params);
};

// Weights ~ N(0, 1/fan_in) (head included), biases 0. Throws ConfigError on
// empty or zero widths or k == 0.
FeatureNet init_net(const std::vector<std::size_t>& widths, std::size_t classes,
                    std::uint64_t seed, InitKind kind = InitKind::lecun);

// Phi = features before the head (n x h). Tracks whatever operands are on a tape.
Array features(const FeatureNet& net, const Array& x);

// One optimizer step on (gamma/2) |Y - features(X) W|_F^2 over all
// parameters. Returns the loss before the step; throws NonFiniteError.
double gaussian_step(FeatureNet& net, const Array& images, const Array& labels, double gamma,
                     double lr, OptimizerState& state);

struct ModelPool {
  std::vector<FeatureNet> nets;
  std::vector<OptimizerState> states;
  std::vector<std::uint64_t> counters;
  std::uint64_t period = 100;
  std::vector<std::size_t> widths;
  std::size_t classes = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::mt19937_64 seed_stream;
};

ModelPool pool_new(std::size_t size, const std::vector<std::size_t>& widths, std::size_t classes,
                   std::uint64_t period, std::uint64_t seed,
                   OptimizerKind optimizer = OptimizerKind::adam);

// Uniform slot index and the live net in it.
std::pair<std::size_t, const FeatureNet*> pool_sample(const ModelPool& pool, std::mt19937_64& rng);

// gaussian_step on slot `index`; once the slot has been updated `period` times
// it is replaced by a freshly seeded net with a zero counter.
void pool_update(ModelPool& pool, std::size_t index, const Array& images, const Array& labels,
                 double gamma, double lr);

}  // namespace vbpc
