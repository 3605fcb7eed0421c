// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vbpc/posterior.hpp"

namespace vbpc {

// Logit means (n x k) and the per-input variance shared by all classes (n x 1).
struct PredictiveBatch {
  Array mean;
  Array variance;
};

// Moments of the last-layer logits for batch features phi_b (n x h), using
// the posterior's stored factor. Differentiable on the posterior's tape.
// Round-off negatives down to -1e-12 * max(1, |phi_i|^2 / rho) are clamped to
// zero; anything more negative throws NonFiniteError.
PredictiveBatch predictive_moments(const CoresetPosterior& p, const Array& phi_b);

// Row-wise log softmax(mean_i / sqrt(1 + alpha var_i)). `variance` is n x 1.
// Throws if a variance is below -tol.
Array probit_log_softmax(const Array& mean, const Array& variance,
                         double alpha = kProbitAlpha, double tol = 1e-12);

struct McEstimate {
  std::vector<double> mean;
  std::vector<double> stderr_;
};

// Monte-Carlo E[log softmax(z)], z ~ N(mean, sigma2 I). Deterministic for a
// fixed seed and independent of the thread count.
McEstimate mc_log_softmax(std::span<const double> mean, double sigma2, std::uint64_t samples,
                          std::uint64_t seed);

// Class probabilities from one feature evaluation per test input.
Array bma_predict(const CoresetPosterior& p, const Array& phi_te);

struct Metrics {
  double acc = 0.0;
  double nll = 0.0;
};

// Accuracy (argmax, ties to the lowest index) and mean negative log-likelihood.
Metrics metrics(const Array& log_probs, std::span<const int> labels);

}  // namespace vbpc
