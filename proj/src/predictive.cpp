// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "vbpc/predictive.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "vbpc/error.hpp"
#include "vbpc/ndiff/kernels.hpp"
#include "vbpc/ndiff/tape.hpp"

namespace vbpc {

using namespace ndiff;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Fixed so that results never depend on the thread count.
constexpr std::uint64_t kMcChunks = 64;

}  // namespace

PredictiveBatch predictive_moments(const CoresetPosterior& p, const Array& phi_b) {
  if (phi_b.cols() != p.feature_dim()) {
    throw ShapeError("predictive_moments: batch features " + phi_b.shape_str() +
                     " vs feature dim " + std::to_string(p.feature_dim()));
  }
  const Hyperparams& hp = p.hyper();
  PredictiveBatch out;
  out.mean = matmul(phi_b, p.means());

  // phi_i Phi^T A^{-1} Phi phi_i^T for every row, through the n_hat x n system.
  const Array cross = matmul(phi_b, transpose(p.features()));  // n x n_hat
  const Array solved = transpose(p.solve(transpose(cross)));    // n x n_hat
  const Array quad = sum(hadamard(cross, solved), SumAxis::rows);
  const Array norms = sum(hadamard(phi_b, phi_b), SumAxis::rows);
  Array var = scale(sub(norms, scale(quad, hp.ratio())), 1.0 / hp.rho);

  bool clamp = false;
  for (std::size_t i = 0; i < var.rows(); ++i) {
    const double v = var(i, 0);
    if (v >= 0.0) continue;
    const double tol = 1e-12 * std::max(1.0, norms(i, 0) / hp.rho);
    if (v < -tol) {
      throw NonFiniteError("predictive_moments: variance " + std::to_string(v) + " at row " +
                           std::to_string(i) + " is negative beyond round-off");
    }
    clamp = true;
  }
  out.variance = clamp ? relu(var) : var;
  return out;
}

Array probit_log_softmax(const Array& mean, const Array& variance, double alpha, double tol) {
  if (variance.cols() != 1 || variance.rows() != mean.rows()) {
    throw ShapeError("probit_log_softmax: variance " + variance.shape_str() + " vs mean " +
                     mean.shape_str());
  }
  bool clamp = false;
  for (double v : variance.values()) {
    if (v < -tol) {
      throw NonFiniteError("probit_log_softmax: negative variance " + std::to_string(v));
    }
    clamp = clamp || v < 0.0;
  }
  const Array var = clamp ? relu(variance) : variance;
  return row_log_softmax(hadamard(mean, rsqrt_shift(var, alpha)));
}

McEstimate mc_log_softmax(std::span<const double> mean, double sigma2, std::uint64_t samples,
                          std::uint64_t seed) {
  const std::size_t k = mean.size();
  if (k == 0) throw ShapeError("mc_log_softmax: empty mean vector");
  if (samples == 0) throw Error("mc_log_softmax: samples must be >= 1");
  if (!(sigma2 >= 0.0)) throw Error("mc_log_softmax: sigma2 must be >= 0");

  McEstimate est;
  est.mean.assign(k, 0.0);
  est.stderr_.assign(k, 0.0);
  if (sigma2 == 0.0) {
    kernels::serial::row_log_softmax(mean.data(), est.mean.data(), 1, k);
    return est;
  }

  const double sd = std::sqrt(sigma2);
  std::vector<double> sums(kMcChunks * k, 0.0);
  std::vector<double> sq(kMcChunks * k, 0.0);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t c = 0; c < static_cast<std::int64_t>(kMcChunks); ++c) {
    const std::uint64_t uc = static_cast<std::uint64_t>(c);
    const std::uint64_t begin = samples * uc / kMcChunks;
    const std::uint64_t end = samples * (uc + 1) / kMcChunks;
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(uc)));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> z(k);
    std::vector<double> lp(k);
    double* s = sums.data() + uc * k;
    double* q = sq.data() + uc * k;
    for (std::uint64_t t = begin; t < end; ++t) {
      for (std::size_t j = 0; j < k; ++j) z[j] = mean[j] + sd * normal(rng);
      kernels::serial::row_log_softmax(z.data(), lp.data(), 1, k);
      for (std::size_t j = 0; j < k; ++j) {
        s[j] += lp[j];
        q[j] += lp[j] * lp[j];
      }
    }
  }

  const double n = static_cast<double>(samples);
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    double q = 0.0;
    for (std::uint64_t c = 0; c < kMcChunks; ++c) {
      s += sums[c * k + j];
      q += sq[c * k + j];
    }
    const double m = s / n;
    est.mean[j] = m;
    const double var = samples > 1 ? std::max(0.0, (q - n * m * m) / (n - 1.0)) : 0.0;
    est.stderr_[j] = std::sqrt(var / n);
  }
  return est;
}

Array bma_predict(const CoresetPosterior& p, const Array& phi_te) {
  const PredictiveBatch mom = predictive_moments(p, phi_te);
  Array probs = probit_log_softmax(mom.mean, mom.variance).detached();
  for (double& v : probs.mutable_values()) v = std::exp(v);
  return probs;
}

Metrics metrics(const Array& log_probs, std::span<const int> labels) {
  if (labels.size() != log_probs.rows()) {
    throw ShapeError("metrics: " + std::to_string(labels.size()) + " labels for " +
                     log_probs.shape_str() + " predictions");
  }
  if (labels.empty()) throw ShapeError("metrics: empty batch");
  const std::size_t k = log_probs.cols();
  std::size_t correct = 0;
  double nll = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw ShapeError("metrics: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(k) + ")");
    }
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (log_probs(i, j) > log_probs(i, best)) best = j;
    }
    if (best == static_cast<std::size_t>(y)) ++correct;
    nll -= log_probs(i, static_cast<std::size_t>(y));
  }
  const double n = static_cast<double>(labels.size());
  return {static_cast<double>(correct) / n, nll / n};
}

}  // namespace vbpc
