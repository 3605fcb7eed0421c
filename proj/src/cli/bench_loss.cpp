// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <cmath>
#include <random>

#include "vbpc/cli.hpp"
#include "vbpc/error.hpp"
#include "vbpc/objective.hpp"

namespace vbpc::cli {

namespace {

// ReLU-like nonnegative random features with unit expected row norm.
Array random_features(std::size_t rows, std::size_t h, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double s = std::sqrt(2.0 / static_cast<double>(h));
  Array a(rows, h);
  for (double& v : a.mutable_values()) v = s * std::abs(normal(rng));
  return a;
}

}  // namespace

BenchResult run_bench(BenchMode mode, std::size_t h, std::size_t n_hat, std::size_t reps,
                      std::size_t k, std::size_t batch, std::uint64_t seed) {
  if (h == 0 || n_hat == 0 || k < 2 || batch == 0 || reps == 0) {
    throw ConfigError("bench: h, nhat, batch and reps must be >= 1 and k >= 2");
  }
  if (mode == BenchMode::naive && h > 8192) {
    throw ConfigError("bench: naive mode refuses h = " + std::to_string(h) + " > 8192");
  }
  std::mt19937_64 rng(seed);
  const Array phi_c = random_features(n_hat, h, rng);
  const Array phi_b = random_features(batch, h, rng);
  Array labels(n_hat, k);
  Array y_b(batch, k);
  {
    auto lv = labels.mutable_values();
    for (std::size_t i = 0; i < n_hat; ++i) {
      const auto row = init_label_row(i % k, k);
      for (std::size_t j = 0; j < k; ++j) lv[i * k + j] = row[j];
    }
    auto yv = y_b.mutable_values();
    for (std::size_t i = 0; i < batch; ++i) yv[i * k + i % k] = 1.0;
  }
  Hyperparams hyper;
  hyper.beta_s = static_cast<double>(n_hat);
  const std::size_t n_total = 2000;

  auto eval = [&] {
    if (mode == BenchMode::naive) {
      return loss_from_features_naive(phi_c, labels, phi_b, y_b, n_total, hyper).total;
    }
    return loss_from_features(phi_c, labels, phi_b, y_b, n_total, hyper).breakdown.total;
  };

  BenchResult r;
  r.mode = mode;
  r.h = h;
  r.n_hat = n_hat;
  r.k = k;
  r.batch = batch;
  r.reps = reps;
  const auto t0 = std::chrono::steady_clock::now();
  {
    ndiff::AllocScope scope;
    r.loss = eval();
    r.peak_f64 = scope.peak_above_base();
    r.largest_f64 = scope.largest();
  }
  for (std::size_t i = 1; i < reps; ++i) eval();
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  r.ms_per_100 = ms / static_cast<double>(reps) * 100.0;
  return r;
}

}  // namespace vbpc::cli
