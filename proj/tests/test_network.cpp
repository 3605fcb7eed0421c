// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "vbpc/error.hpp"
#include "vbpc/ndiff/tape.hpp"
#include "vbpc/network.hpp"

using namespace vbpc;
using namespace vbpc::ndiff;

namespace {

bool same_parameters(const FeatureNet& a, const FeatureNet& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!bit_equal(pa[i], pb[i])) return false;
  return true;
}

OptimizerState sgd_state() {
  OptimizerState s;
  s.kind = OptimizerKind::sgd;
  return s;
}

}  // namespace

TEST_CASE("init_net is deterministic with zero biases") {
  const FeatureNet a = init_net({3, 8, 5}, 4, 17);
  const FeatureNet b = init_net({3, 8, 5}, 4, 17);
  CHECK(same_parameters(a, b));
  CHECK_FALSE(same_parameters(a, init_net({3, 8, 5}, 4, 18)));
  for (const Array& bias : a.biases)
    for (double v : bias.values()) CHECK(v == 0.0);
  CHECK(a.feature_dim() == 5);
  CHECK(a.head.rows() == 5);
  CHECK(a.head.cols() == 4);
}

TEST_CASE("init_net weight variance is 1 / fan_in") {
  const FeatureNet net = init_net({100, 100}, 2, 5);
  const auto w = net.weights[0].values();
  double mean = 0.0;
  for (double v : w) mean += v;
  mean /= static_cast<double>(w.size());
  double var = 0.0;
  for (double v : w) var += (v - mean) * (v - mean);
  var /= static_cast<double>(w.size() - 1);
  CHECK(w.size() == 10000);
  CHECK(var >= 0.008);
  CHECK(var <= 0.012);
}

TEST_CASE("init_net rejects invalid widths") {
  CHECK_THROWS_AS(init_net({}, 2, 0), ConfigError);
  CHECK_THROWS_AS(init_net({3, 0, 2}, 2, 0), ConfigError);
  CHECK_THROWS_AS(init_net({3, 2}, 0, 0), ConfigError);
}

TEST_CASE("features") {
  SUBCASE("zero weights give zero features") {
    const FeatureNet net = init_net({3, 4}, 2, 0, InitKind::zero);
    const Array phi = features(net, Array(2, 3, {1, -2, 3, 4, 5, -6}));
    for (double v : phi.values()) CHECK(v == 0.0);
  }
  SUBCASE("identity layer passes non-negative inputs through") {
    FeatureNet net = init_net({3, 3}, 2, 0);
    net.weights[0] = Array::identity(3);
    const Array x(2, 3, {0.5, 0, 2, 1, 3, 0.25});
    CHECK(bit_equal(features(net, x), x));
  }
  SUBCASE("zero-depth net is the identity map") {
    const FeatureNet net = init_net({4}, 2, 0);
    const Array x(1, 4, {-1, 2, -3, 4});
    CHECK(bit_equal(features(net, x), x));
  }
  SUBCASE("input width mismatch") {
    CHECK_THROWS_AS(features(init_net({3, 4}, 2, 0), Array(2, 2)), ShapeError);
  }
}

TEST_CASE("feature gradients match finite differences") {
  std::mt19937_64 rng(30);
  // Random biases keep every pre-activation away from the ReLU kink.
  FeatureNet net = init_net({3, 5, 4}, 2, 31);
  for (Array& b : net.biases) b = oracle::randn(1, b.cols(), rng, 0.5);
  const Array x = oracle::randn(6, 3, rng);
  const Array probe = oracle::randn(6, 4, rng);
  const auto params = net.parameters();
  for (std::size_t p = 0; p + 1 < params.size(); ++p) {
    CAPTURE(p);
    auto value = [&](const Array& theta) {
      FeatureNet moved = net;
      auto ps = moved.parameters();
      ps[p] = theta;
      moved.set_parameters(ps);
      return sum(hadamard(features(moved, x), probe)).item();
    };
    Tape tape;
    FeatureNet tracked = net;
    auto ps = tracked.parameters();
    const Array leaf = tape.leaf(ps[p]);
    ps[p] = leaf;
    tracked.set_parameters(ps);
    const Gradients g = tape.backward(sum(hadamard(features(tracked, x), probe)));
    CHECK(rel_frobenius_diff(g.wrt(leaf), oracle::central_diff(value, params[p])) <= 1e-5);
  }
}

TEST_CASE("gaussian_step") {
  SUBCASE("hand-computed plain gradient step") {
    FeatureNet net = init_net({1}, 1, 0, InitKind::zero);
    OptimizerState st = sgd_state();
    const double loss = gaussian_step(net, Array(1, 1, {1.0}), Array(1, 1, {1.0}), 1.0, 0.1, st);
    CHECK(loss == doctest::Approx(0.5));
    CHECK(net.head(0, 0) == doctest::Approx(0.1).epsilon(1e-15));
  }
  SUBCASE("labels equal to predictions leave parameters unchanged") {
    std::mt19937_64 rng(32);
    FeatureNet net = init_net({3, 6, 4}, 2, 33);
    const Array x = oracle::randn(5, 3, rng);
    const Array y = oracle::matmul(features(net, x), net.head);
    const FeatureNet before = net;
    OptimizerState st = sgd_state();
    gaussian_step(net, x, y, 1.0, 0.5, st);
    const auto a = before.parameters();
    const auto b = net.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t j = 0; j < a[i].size(); ++j)
        CHECK(std::abs(a[i].values()[j] - b[i].values()[j]) <= 1e-14);
    }
  }
  SUBCASE("loss decreases over 50 steps") {
    std::mt19937_64 rng(34);
    FeatureNet net = init_net({3, 16, 8}, 3, 35);
    const Array x = oracle::randn(6, 3, rng);
    const Array y = oracle::randn(6, 3, rng);
    OptimizerState st;
    std::vector<double> losses;
    for (int t = 0; t < 50; ++t) losses.push_back(gaussian_step(net, x, y, 1.0, 1e-3, st));
    int rises = 0;
    for (std::size_t t = 1; t < losses.size(); ++t) rises += losses[t] > losses[t - 1];
    CHECK(rises <= 5);
    CHECK(losses.back() < losses.front());
  }
  SUBCASE("gradient of the Gaussian loss matches finite differences") {
    std::mt19937_64 rng(36);
    const FeatureNet net = init_net({2, 4, 3}, 2, 37);
    const Array x = oracle::randn(4, 2, rng);
    const Array y = oracle::randn(4, 2, rng);
    const double gamma = 2.0;
    const double lr = 1e-3;
    const auto params = net.parameters();
    auto loss_at = [&](const std::vector<Array>& ps) {
      FeatureNet moved = net;
      moved.set_parameters(ps);
      const Array r = sub(y, matmul(features(moved, x), moved.head));
      return 0.5 * gamma * sum(hadamard(r, r)).item();
    };
    // A plain step moves each block by -lr * gradient.
    FeatureNet stepped = net;
    OptimizerState st = sgd_state();
    gaussian_step(stepped, x, y, gamma, lr, st);
    const auto after = stepped.parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
      CAPTURE(p);
      const Array fd = oracle::central_diff(
          [&](const Array& theta) {
            auto ps = params;
            ps[p] = theta;
            return loss_at(ps);
          },
          params[p]);
      Array implied(params[p].rows(), params[p].cols());
      auto iv = implied.mutable_values();
      for (std::size_t i = 0; i < implied.size(); ++i)
        iv[i] = (params[p].values()[i] - after[p].values()[i]) / lr;
      CHECK(rel_frobenius_diff(implied, fd) <= 1e-5);
    }
  }
  SUBCASE("non-finite loss throws") {
    FeatureNet net = init_net({1}, 1, 0);
    OptimizerState st;
    CHECK_THROWS_AS(gaussian_step(net, Array(1, 1, {1e300}), Array(1, 1, {-1e300}), 1e300, 0.1, st),
                    NonFiniteError);
  }
}

TEST_CASE("model pool construction") {
  const ModelPool one = pool_new(1, {2, 4}, 2, 5, 1);
  CHECK(one.nets.size() == 1);
  std::mt19937_64 rng(0);
  for (int i = 0; i < 20; ++i) CHECK(pool_sample(one, rng).first == 0);

  const ModelPool a = pool_new(4, {2, 4}, 2, 5, 9);
  const ModelPool b = pool_new(4, {2, 4}, 2, 5, 9);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(same_parameters(a.nets[i], b.nets[i]));
    CHECK(a.counters[i] == 0);
    for (std::size_t j = i + 1; j < 4; ++j) CHECK_FALSE(same_parameters(a.nets[i], a.nets[j]));
  }
}

TEST_CASE("pool sampling is uniform and reproducible") {
  const ModelPool pool = pool_new(10, {2, 3}, 2, 5, 3);
  std::mt19937_64 rng(40);
  std::vector<int> counts(10, 0);
  for (int t = 0; t < 10000; ++t) {
    const auto [idx, net] = pool_sample(pool, rng);
    CHECK(net == &pool.nets[idx]);
    ++counts[idx];
  }
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
  // 0.999 quantile of chi-squared with 9 degrees of freedom.
  CHECK(chi2 < 27.877);

  std::mt19937_64 r1(41);
  std::mt19937_64 r2(41);
  for (int t = 0; t < 50; ++t) CHECK(pool_sample(pool, r1).first == pool_sample(pool, r2).first);
}

TEST_CASE("pool rotation") {
  std::mt19937_64 rng(42);
  const Array x = oracle::randn(4, 2, rng);
  const Array y = oracle::randn(4, 2, rng);
  SUBCASE("period 3") {
    ModelPool pool = pool_new(2, {2, 4}, 2, 3, 7);
    pool_update(pool, 0, x, y, 1.0, 1e-2);
    pool_update(pool, 0, x, y, 1.0, 1e-2);
    CHECK(pool.counters[0] == 2);
    FeatureNet trained = pool.nets[0];
    OptimizerState st = pool.states[0];
    gaussian_step(trained, x, y, 1.0, 1e-2, st);
    pool_update(pool, 0, x, y, 1.0, 1e-2);
    CHECK(pool.counters[0] == 0);
    CHECK(pool.counters[1] == 0);
    CHECK_FALSE(same_parameters(pool.nets[0], trained));
    CHECK(pool.states[0].step == 0);
  }
  SUBCASE("period 1 reinitializes on every update") {
    ModelPool pool = pool_new(1, {2, 4}, 2, 1, 8);
    FeatureNet prev = pool.nets[0];
    for (int t = 0; t < 5; ++t) {
      pool_update(pool, 0, x, y, 1.0, 1e-2);
      CHECK(pool.counters[0] == 0);
      CHECK_FALSE(same_parameters(pool.nets[0], prev));
      prev = pool.nets[0];
    }
  }
  SUBCASE("counters stay below the period") {
    ModelPool pool = pool_new(5, {2, 3}, 2, 4, 11);
    std::mt19937_64 pick(12);
    for (int t = 0; t < 1000; ++t) {
      const std::size_t idx = pool_sample(pool, pick).first;
      pool_update(pool, idx, x, y, 1.0, 1e-3);
      for (std::uint64_t c : pool.counters) CHECK(c < pool.period);
    }
  }
  SUBCASE("identical update sequences give identical pools") {
    ModelPool a = pool_new(3, {2, 3}, 2, 2, 13);
    ModelPool b = pool_new(3, {2, 3}, 2, 2, 13);
    for (std::size_t t = 0; t < 10; ++t) {
      pool_update(a, t % 3, x, y, 1.0, 1e-2);
      pool_update(b, t % 3, x, y, 1.0, 1e-2);
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(same_parameters(a.nets[i], b.nets[i]));
  }
}
