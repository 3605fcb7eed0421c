// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "vbpc/network.hpp"

#include <cmath>
#include <string>

#include "vbpc/error.hpp"
#include "vbpc/ndiff/tape.hpp"

namespace vbpc {

using namespace ndiff;

namespace {

OptimizerState fresh_state(OptimizerKind kind) {
  OptimizerState s;
  s.kind = kind;
  return s;
}

}  // namespace

std::vector<Array> FeatureNet::parameters() const {
  std::vector<Array> out;
  out.reserve(weights.size() + biases.size() + 1);
  out.insert(out.end(), weights.begin(), weights.end());
  out.insert(out.end(), biases.begin(), biases.end());
  out.push_back(head);
  return out;
}

void FeatureNet::set_parameters(std::vector<Array> params) {
  const std::size_t layers = weights.size();
  if (params.size() != 2 * layers + 1) {
    throw ShapeError("set_parameters: expected " + std::to_string(2 * layers + 1) +
                     " blocks, got " + std::to_string(params.size()));
  }
  for (std::size_t l = 0; l < layers; ++l) {
    weights[l] = std::move(params[l]);
    biases[l] = std::move(params[layers + l]);
  }
  head = std::move(params.back());
}

FeatureNet init_net(const std::vector<std::size_t>& widths, std::size_t classes,
                    std::uint64_t seed, InitKind kind) {
  if (widths.empty()) throw ConfigError("init_net: empty width list");
  for (std::size_t w : widths) {
    if (w == 0) throw ConfigError("init_net: widths must be >= 1");
  }
  if (classes == 0) throw ConfigError("init_net: classes must be >= 1");

  FeatureNet net;
  net.widths = widths;
  net.seed = seed;
  std::mt19937_64 rng(seed);
  auto draw = [&](std::size_t fan_in, std::size_t fan_out) {
    Array w(fan_in, fan_out);
    if (kind == InitKind::zero) return w;
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    for (double& v : w.mutable_values()) v = normal(rng);
    return w;
  };
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    net.weights.push_back(draw(widths[l], widths[l + 1]));
    net.biases.emplace_back(1, widths[l + 1]);
  }
  net.head = draw(widths.back(), classes);
  return net;
}

Array features(const FeatureNet& net, const Array& x) {
  if (x.cols() != net.input_dim()) {
    throw ShapeError("features: input " + x.shape_str() + " vs input dim " +
                     std::to_string(net.input_dim()));
  }
  Array h = x;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    h = relu(add(matmul(h, net.weights[l]), net.biases[l]));
  }
  return h;
}

double gaussian_step(FeatureNet& net, const Array& images, const Array& labels, double gamma,
                     double lr, OptimizerState& state) {
  if (images.rows() != labels.rows() || labels.cols() != net.classes()) {
    throw ShapeError("gaussian_step: images " + images.shape_str() + ", labels " +
                     labels.shape_str() + ", net classes " + std::to_string(net.classes()));
  }
  Tape tape;
  FeatureNet live = net;
  std::vector<Array> leaves;
  for (Array& p : live.weights) leaves.push_back(p = tape.leaf(p));
  for (Array& p : live.biases) leaves.push_back(p = tape.leaf(p));
  leaves.push_back(live.head = tape.leaf(live.head));

  const Array resid = sub(matmul(features(live, images.detached()), live.head), labels.detached());
  const Array loss = scale(sum(hadamard(resid, resid)), 0.5 * gamma);
  const double value = loss.item();
  if (!std::isfinite(value)) throw NonFiniteError("gaussian_step: non-finite loss");

  const Gradients grads = tape.backward(loss);
  std::vector<Array> g;
  g.reserve(leaves.size());
  for (const Array& leaf : leaves) g.push_back(grads.wrt(leaf));
  std::vector<Array> params = net.parameters();
  adam_step(state, params, g, lr);
  net.set_parameters(std::move(params));
  return value;
}

ModelPool pool_new(std::size_t size, const std::vector<std::size_t>& widths, std::size_t classes,
                   std::uint64_t period, std::uint64_t seed, OptimizerKind optimizer) {
  if (size == 0) throw ConfigError("pool_new: pool size must be >= 1");
  if (period == 0) throw ConfigError("pool_new: rotation period must be >= 1");
  ModelPool pool;
  pool.period = period;
  pool.widths = widths;
  pool.classes = classes;
  pool.optimizer = optimizer;
  pool.seed_stream.seed(seed);
  for (std::size_t i = 0; i < size; ++i) {
    pool.nets.push_back(init_net(widths, classes, pool.seed_stream()));
    pool.states.push_back(fresh_state(optimizer));
    pool.counters.push_back(0);
  }
  return pool;
}

std::pair<std::size_t, const FeatureNet*> pool_sample(const ModelPool& pool,
                                                      std::mt19937_64& rng) {
  if (pool.nets.empty()) throw Error("pool_sample: empty pool");
  std::uniform_int_distribution<std::size_t> pick(0, pool.nets.size() - 1);
  const std::size_t i = pick(rng);
  return {i, &pool.nets[i]};
}

void pool_update(ModelPool& pool, std::size_t index, const Array& images, const Array& labels,
                 double gamma, double lr) {
  if (index >= pool.nets.size()) {
    throw Error("pool_update: index " + std::to_string(index) + " outside pool of " +
                std::to_string(pool.nets.size()));
  }
  gaussian_step(pool.nets[index], images, labels, gamma, lr, pool.states[index]);
  if (++pool.counters[index] >= pool.period) {
    pool.nets[index] = init_net(pool.widths, pool.classes, pool.seed_stream());
    pool.states[index] = fresh_state(pool.optimizer);
    pool.counters[index] = 0;
  }
}

}  // namespace vbpc
