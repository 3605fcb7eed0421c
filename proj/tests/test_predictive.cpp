// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "oracles.hpp"
#include "vbpc/error.hpp"
#include "vbpc/ndiff/tape.hpp"
#include "vbpc/predictive.hpp"

using namespace vbpc;
using namespace vbpc::ndiff;

namespace {

Hyperparams unit_hyper() {
  Hyperparams hp;
  hp.rho = 1.0;
  hp.gamma = 1.0;
  hp.beta_s = 1.0;
  return hp;
}

CoresetPosterior small_instance() {
  return solve_posterior(Array(2, 3, {1, 0, 0, 0, 1, 0}), Array(2, 2, {1, 0, 0, 0}), unit_hyper());
}

double row_prob_sum(const Array& lp, std::size_t i) {
  double s = 0.0;
  for (std::size_t j = 0; j < lp.cols(); ++j) s += std::exp(lp(i, j));
  return s;
}

}  // namespace

TEST_CASE("prior predictive variance with zero coreset features") {
  Hyperparams hp;
  hp.rho = 4.0;
  const CoresetPosterior p = solve_posterior(Array(3, 4), Array(3, 2), hp);
  const Array te(2, 4, {1, 2, 0, -1, 0.5, 0, 0, 0});
  const PredictiveBatch b = predictive_moments(p, te);
  CHECK(b.variance(0, 0) == doctest::Approx(6.0 / 4.0).epsilon(1e-14));
  CHECK(b.variance(1, 0) == doctest::Approx(0.25 / 4.0).epsilon(1e-14));
  for (double m : b.mean.values()) CHECK(m == 0.0);
}

TEST_CASE("null test feature gives zero moments") {
  const PredictiveBatch b = predictive_moments(small_instance(), Array(1, 3));
  CHECK(b.mean(0, 0) == 0.0);
  CHECK(b.mean(0, 1) == 0.0);
  CHECK(b.variance(0, 0) == 0.0);
}

TEST_CASE("2x3 instance predictive variance") {
  const CoresetPosterior p = small_instance();
  const PredictiveBatch b = predictive_moments(p, Array(1, 3, {1, 0, 0}));
  CHECK(b.variance(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(b.mean(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("predictive variance matches the dense quadratic form") {
  std::mt19937_64 rng(20);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    Hyperparams hp;
    hp.rho = oracle::log_uniform(rng, 0.1, 100.0);
    hp.gamma = oracle::log_uniform(rng, 0.1, 100.0);
    hp.beta_s = oracle::log_uniform(rng, 0.1, 100.0);
    const std::size_t h = oracle::uniform_int(rng, 2, 40);
    const std::size_t n = oracle::uniform_int(rng, 1, 12);
    const Array phi = oracle::randn(n, h, rng);
    const Array y = oracle::randn(n, 3, rng);
    const Array te = oracle::randn(5, h, rng);
    const PredictiveBatch b = predictive_moments(solve_posterior(phi, y, hp), te);
    const oracle::Dense d = oracle::dense_posterior(phi, y, hp);
    const auto q = oracle::quad_forms(te, d.cov);
    for (std::size_t i = 0; i < te.rows(); ++i) {
      worst = std::max(worst, oracle::rel_err(b.variance(i, 0), q[i]));
    }
    CHECK(rel_frobenius_diff(b.mean, oracle::matmul(te, d.means)) <= 1e-10);
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("predictive moments reject a feature-dimension mismatch") {
  CHECK_THROWS_AS(predictive_moments(small_instance(), Array(2, 4)), ShapeError);
}

TEST_CASE("probit log softmax examples") {
  SUBCASE("zero variance is the plain log softmax") {
    const Array lp = probit_log_softmax(Array(1, 2, {1, 0}), Array(1, 1));
    CHECK(lp(0, 0) == doctest::Approx(-0.31326168751822286).epsilon(1e-15));
    CHECK(lp(0, 1) == doctest::Approx(-1.3132616875182228).epsilon(1e-15));
  }
  SUBCASE("constant means give ln(1/k)") {
    const Array lp = probit_log_softmax(Array(2, 4, {3, 3, 3, 3, -1, -1, -1, -1}),
                                        Array(2, 1, {0.7, 9.0}));
    for (double v : lp.values()) CHECK(v == doctest::Approx(-std::log(4.0)).epsilon(1e-14));
  }
  SUBCASE("unit variance") {
    const Array lp = probit_log_softmax(Array(1, 2, {1, 0}), Array(1, 1, {1.0}));
    const double s = 1.0 / std::sqrt(1.0 + std::numbers::pi / 8.0);
    CHECK(lp(0, 0) == doctest::Approx(-std::log1p(std::exp(-s))).epsilon(1e-14));
    CHECK(lp(0, 0) == doctest::Approx(-0.3564).epsilon(1e-3));
    CHECK(lp(0, 1) == doctest::Approx(-1.2038).epsilon(1e-3));
  }
  SUBCASE("negative variance beyond tolerance throws") {
    CHECK_THROWS_AS(probit_log_softmax(Array(1, 2), Array(1, 1, {-1e-6})), NonFiniteError);
    const Array lp = probit_log_softmax(Array(1, 2, {1, 0}), Array(1, 1, {-1e-13}));
    CHECK(lp(0, 0) == doctest::Approx(-0.31326168751822286).epsilon(1e-15));
  }
  SUBCASE("shape mismatch throws") {
    CHECK_THROWS_AS(probit_log_softmax(Array(2, 2), Array(1, 1)), ShapeError);
  }
}

TEST_CASE("probit rows normalize and shrink with variance") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 30; ++t) {
    const std::size_t k = oracle::uniform_int(rng, 2, 10);
    const Array m = oracle::randn(1, k, rng, 3.0);
    double prev = 2.0;
    for (double s2 : {0.0, 0.1, 0.5, 1.0, 4.0, 20.0}) {
      const Array lp = probit_log_softmax(m, Array(1, 1, {s2}));
      CHECK(std::abs(row_prob_sum(lp, 0) - 1.0) <= 1e-12);
      double mx = -1e300;
      for (double v : lp.values()) mx = std::max(mx, v);
      CHECK(std::exp(mx) <= prev + 1e-15);
      prev = std::exp(mx);
    }
  }
}

TEST_CASE("Monte-Carlo expected log softmax") {
  SUBCASE("zero variance is exact") {
    const std::vector<double> m = {0.3, -1.0, 2.0};
    const McEstimate e = mc_log_softmax(m, 0.0, 10, 1);
    const Array ref = probit_log_softmax(Array(1, 3, {0.3, -1.0, 2.0}), Array(1, 1));
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(e.mean[j] - ref(0, j)) <= 1e-12);
  }
  SUBCASE("uniform means sit at ln(1/k) for small variance and below it otherwise") {
    const std::vector<double> m(5, 0.7);
    const McEstimate tight = mc_log_softmax(m, 1e-4, 100000, 3);
    for (double v : tight.mean) CHECK(std::abs(v + std::log(5.0)) <= 0.01);
    const McEstimate wide = mc_log_softmax(m, 1.0, 100000, 3);
    for (double v : wide.mean) CHECK(v < -std::log(5.0));
  }
  SUBCASE("deterministic for a fixed seed") {
    const std::vector<double> m = {1.0, 0.0};
    const McEstimate a = mc_log_softmax(m, 2.0, 5000, 9);
    const McEstimate b = mc_log_softmax(m, 2.0, 5000, 9);
    CHECK(a.mean == b.mean);
    CHECK(a.stderr_ == b.stderr_);
    const McEstimate c = mc_log_softmax(m, 2.0, 5000, 10);
    CHECK(a.mean != c.mean);
  }
  SUBCASE("invalid arguments") {
    const std::vector<double> m = {1.0, 0.0};
    CHECK_THROWS_AS(mc_log_softmax(m, 1.0, 0, 1), Error);
    CHECK_THROWS_AS(mc_log_softmax(m, -1.0, 10, 1), Error);
  }
}

// For k = 2, E[log softmax(z)]_0 = E[log sigmoid(d)] with d ~ N(m0 - m1, 2 s2);
// a fine trapezoid over +-12 standard deviations is the reference.
TEST_CASE("Monte-Carlo estimate agrees with one-dimensional quadrature") {
  const double mu = 1.0;
  const double s2 = 1.0;
  const double sd = std::sqrt(2.0 * s2);
  const int steps = 200000;
  const double lo = mu - 12.0 * sd;
  const double dx = 24.0 * sd / steps;
  double e0 = 0.0;
  double e1 = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double d = lo + i * dx;
    const double w = (i == 0 || i == steps ? 0.5 : 1.0) * dx *
                     std::exp(-0.5 * (d - mu) * (d - mu) / (sd * sd)) / (sd * std::sqrt(2.0 * std::numbers::pi));
    e0 += w * -std::log1p(std::exp(-d));
    e1 += w * -std::log1p(std::exp(d));
  }
  const std::vector<double> m = {1.0, 0.0};
  const McEstimate e = mc_log_softmax(m, s2, 1000000, 42);
  CHECK(std::abs(e.mean[0] - e0) <= 4.0 * e.stderr_[0]);
  CHECK(std::abs(e.mean[1] - e1) <= 4.0 * e.stderr_[1]);
}

TEST_CASE("BMA predictions") {
  SUBCASE("prior posterior predicts uniformly") {
    const CoresetPosterior p = solve_posterior(Array(4, 3), Array(4, 5), Hyperparams{});
    const Array probs = bma_predict(p, Array(2, 3, {1, 2, 3, -1, 0, 4}));
    for (double v : probs.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-14));
  }
  SUBCASE("2x3 instance by hand") {
    const Array probs = bma_predict(small_instance(), Array(1, 3, {1, 0, 0}));
    const double z = 0.5 / std::sqrt(1.0 + std::numbers::pi / 8.0 * 0.5);
    const double p0 = 1.0 / (1.0 + std::exp(-z));
    CHECK(probs(0, 0) == doctest::Approx(p0).epsilon(1e-14));
    CHECK(probs(0, 1) == doctest::Approx(1.0 - p0).epsilon(1e-14));
  }
  SUBCASE("argmax and normalization") {
    std::mt19937_64 rng(22);
    Hyperparams hp;
    hp.gamma = 3.0;
    const Array phi = oracle::randn(8, 6, rng);
    const Array y = oracle::randn(8, 4, rng);
    const CoresetPosterior p = solve_posterior(phi, y, hp);
    const Array te = oracle::randn(40, 6, rng);
    const Array probs = bma_predict(p, te);
    const Array mean = predictive_moments(p, te).mean;
    for (std::size_t i = 0; i < te.rows(); ++i) {
      std::size_t a = 0;
      std::size_t b = 0;
      double s = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        s += probs(i, j);
        if (probs(i, j) > probs(i, a)) a = j;
        if (mean(i, j) > mean(i, b)) b = j;
      }
      CHECK(a == b);
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(bma_predict(small_instance(), Array(1, 2)), ShapeError);
  }
}

TEST_CASE("predictive variance gradients flow to coreset leaves") {
  std::mt19937_64 rng(23);
  Hyperparams hp;
  hp.gamma = 2.0;
  const Array phi = oracle::randn(3, 4, rng);
  const Array y = oracle::randn(3, 2, rng);
  const Array te = oracle::randn(5, 4, rng);
  auto value = [&](const Array& x) {
    return sum(predictive_moments(solve_posterior(x, y, hp), te).variance).item();
  };
  Tape tape;
  const Array leaf = tape.leaf(phi);
  const Array total = sum(predictive_moments(solve_posterior(leaf, y, hp), te).variance);
  const Gradients g = tape.backward(total);
  CHECK(rel_frobenius_diff(g.wrt(leaf), oracle::central_diff(value, phi)) <= 1e-6);
}

TEST_CASE("predictive path never allocates an h x h buffer") {
  std::mt19937_64 rng(24);
  const std::size_t h = 800;
  const CoresetPosterior p = solve_posterior(oracle::randn(10, h, rng), oracle::randn(10, 3, rng),
                                             Hyperparams{});
  const Array te = oracle::randn(30, h, rng);
  AllocScope scope;
  (void)bma_predict(p, te);
  CHECK(scope.largest() < h * h);
}

TEST_CASE("metrics") {
  SUBCASE("hand example") {
    const Array lp(2, 2, {std::log(0.7), std::log(0.3), std::log(0.4), std::log(0.6)});
    const std::vector<int> y = {0, 0};
    const Metrics m = metrics(lp, y);
    CHECK(m.acc == 0.5);
    CHECK(m.nll == doctest::Approx(-(std::log(0.7) + std::log(0.4)) / 2).epsilon(1e-15));
    CHECK(m.nll == doctest::Approx(0.6364).epsilon(1e-4));
  }
  SUBCASE("perfect predictions") {
    const Array lp(2, 3, {0, -50, -50, -50, -50, 0});
    const std::vector<int> y = {0, 2};
    const Metrics m = metrics(lp, y);
    CHECK(m.acc == 1.0);
    CHECK(m.nll == 0.0);
  }
  SUBCASE("uniform predictions over ten classes, ties to the lowest index") {
    Array lp(10, 10);
    for (double& v : lp.mutable_values()) v = -std::log(10.0);
    std::vector<int> y(10);
    for (int i = 0; i < 10; ++i) y[static_cast<std::size_t>(i)] = i;
    const Metrics m = metrics(lp, y);
    CHECK(m.acc == doctest::Approx(0.1));
    CHECK(m.nll == doctest::Approx(std::log(10.0)).epsilon(1e-15));
  }
  SUBCASE("errors") {
    const std::vector<int> bad = {2};
    CHECK_THROWS_AS(metrics(Array(1, 2), bad), ShapeError);
    const std::vector<int> two = {0, 1};
    CHECK_THROWS_AS(metrics(Array(1, 2), two), ShapeError);
  }
}
