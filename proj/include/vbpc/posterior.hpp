// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <numbers>

#include "vbpc/ndiff/array.hpp"

namespace vbpc {

using ndiff::Array;

// Constant of the probit approximation to the expected softmax.
inline constexpr double kProbitAlpha = std::numbers::pi / 8.0;

struct Hyperparams {
  double rho = 1.0;      // prior precision
  double gamma = 100.0;  // Gaussian-likelihood precision of the coreset
  double beta_s = 1.0;   // KL temperature of the coreset objective
  double beta_d = 1e-8;  // KL temperature of the dataset objective
  static constexpr double alpha = kProbitAlpha;

  // Throws ConfigError unless rho, gamma, beta_s > 0 and beta_d >= 0.
  void validate() const;

  // gamma / (rho * beta_s), the coefficient of Phi Phi^T in the system matrix.
  double ratio() const noexcept { return gamma / (rho * beta_s); }

  bool operator==(const Hyperparams&) const = default;
};

// Closed-form last-layer posterior of a coreset, kept in the n x n form:
// features Phi (n x h), labels (n x k), Gram G = Phi Phi^T, system matrix
// A = I + ratio * G with its Cholesky factor, and means M (h x k). The shared
// h x h covariance is never stored.
//
// When Phi or the labels are recorded on a tape, every derived array is too,
// and the tape reuses the single factorization of A for all later solves.
class CoresetPosterior {
 public:
  const Array& features() const noexcept { return phi_; }
  const Array& labels() const noexcept { return labels_; }
  const Array& gram() const noexcept { return gram_; }
  const Array& system() const noexcept { return system_; }
  const Array& factor() const noexcept { return factor_; }
  const Array& means() const noexcept { return means_; }
  const Hyperparams& hyper() const noexcept { return hyper_; }

  std::size_t coreset_size() const noexcept { return phi_.rows(); }
  std::size_t feature_dim() const noexcept { return phi_.cols(); }
  std::size_t classes() const noexcept { return labels_.cols(); }

  // A^{-1} rhs; recorded on the tape if A or rhs is tracked.
  Array solve(const Array& rhs) const;
  // log det A as a 1 x 1 array.
  Array logdet_system() const;

  // Copy with the means replaced (used to probe the fixed-point residual).
  CoresetPosterior with_means(Array means) const;

 private:
  friend CoresetPosterior solve_posterior(const Array&, const Array&, const Hyperparams&);

  Array phi_;
  Array labels_;
  Array gram_;
  Array system_;
  Array factor_;
  Array means_;
  Hyperparams hyper_;
};

// M = Phi^T (rho beta_s / gamma I + Phi Phi^T)^{-1} Y through one Cholesky of
// A = I + (gamma / rho beta_s) Phi Phi^T.
CoresetPosterior solve_posterior(const Array& phi, const Array& labels, const Hyperparams& hyper);

// Materialized V* = I/rho - (gamma / rho^2 beta_s) Phi^T A^{-1} Phi. Test and
// benchmark oracle only; refuses h > max_dim.
Array dense_variance(const CoresetPosterior& p, std::size_t max_dim = 4096);

// log det V* = -h log rho - log det A (1 x 1).
Array logdet_v(const CoresetPosterior& p);

// Tr V* from the n x n system (1 x 1).
Array trace_v(const CoresetPosterior& p);

// Exact KL(q || p0) between the posterior and the N(0, I/rho) prior over all
// k columns, constants included (1 x 1, differentiable on a tape).
Array kl_to_prior(const CoresetPosterior& p);

// max_j || V*^{-1} m_j - (gamma / beta_s) Phi^T y_j ||: distance of the first
// natural-parameter block from the coreset VI fixed point.
double fixed_point_residual(const CoresetPosterior& p);

}  // namespace vbpc
