// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "vbpc/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vbpc/error.hpp"
#include "vbpc/ndiff/linalg.hpp"
#include "vbpc/ndiff/tape.hpp"

namespace vbpc {

using namespace ndiff;

void Hyperparams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError(std::string(name) + " must be > 0, got " + std::to_string(v));
    }
  };
  positive(rho, "rho");
  positive(gamma, "gamma");
  positive(beta_s, "beta_s");
  if (!(beta_d >= 0.0) || !std::isfinite(beta_d)) {
    throw ConfigError("beta_d must be >= 0, got " + std::to_string(beta_d));
  }
}

Array CoresetPosterior::solve(const Array& rhs) const {
  if (system_.tracked() || rhs.tracked()) return cholesky_solve_spd(system_, rhs);
  return solve_with_factor(factor_, rhs);
}

Array CoresetPosterior::logdet_system() const {
  if (system_.tracked()) return logdet_spd(system_);
  return Array::scalar(logdet_from_factor(factor_));
}

CoresetPosterior CoresetPosterior::with_means(Array means) const {
  if (!means.same_shape(means_)) {
    throw ShapeError("with_means: expected " + means_.shape_str() + ", got " + means.shape_str());
  }
  CoresetPosterior out = *this;
  out.means_ = std::move(means);
  return out;
}

CoresetPosterior solve_posterior(const Array& phi, const Array& labels, const Hyperparams& hyper) {
  hyper.validate();
  if (phi.rows() == 0 || phi.cols() == 0) {
    throw ShapeError("solve_posterior: empty feature matrix " + phi.shape_str());
  }
  if (labels.rows() != phi.rows() || labels.cols() == 0) {
    throw ShapeError("solve_posterior: features " + phi.shape_str() + " vs labels " +
                     labels.shape_str());
  }
  if (!all_finite(phi) || !all_finite(labels)) {
    throw NonFiniteError("solve_posterior: non-finite features or labels");
  }

  const double c = hyper.ratio();
  CoresetPosterior p;
  p.hyper_ = hyper;
  p.phi_ = phi;
  p.labels_ = labels;
  const Array phi_t = transpose(phi);
  p.gram_ = matmul(phi, phi_t);
  p.system_ = add(scale(p.gram_, c), Array::identity(phi.rows()));
  if (p.system_.tracked()) {
    p.factor_ = *p.system_.tape()->factor_of(p.system_);
  } else {
    p.factor_ = cholesky_sym_part(p.system_);
  }
  // c Phi^T A^{-1} Y == Phi^T (I/c + Phi Phi^T)^{-1} Y.
  p.means_ = scale(matmul(phi_t, p.solve(labels)), c);
  return p;
}

Array dense_variance(const CoresetPosterior& p, std::size_t max_dim) {
  const std::size_t h = p.feature_dim();
  if (h > max_dim) {
    throw Error("dense_variance: h = " + std::to_string(h) + " exceeds the guard of " +
                std::to_string(max_dim));
  }
  const Hyperparams& hp = p.hyper();
  const Array phi = p.features().detached();
  const Array s = solve_with_factor(p.factor(), phi);
  Array v = matmul(transpose(phi), s);
  auto vv = v.mutable_values();
  const double c = hp.ratio();
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      vv[i * h + j] = (i == j ? 1.0 : 0.0) / hp.rho - (c / hp.rho) * vv[i * h + j];
    }
  }
  return v;
}

Array logdet_v(const CoresetPosterior& p) {
  const double h = static_cast<double>(p.feature_dim());
  return sub(Array::scalar(-h * std::log(p.hyper().rho)), p.logdet_system());
}

Array trace_v(const CoresetPosterior& p) {
  const Hyperparams& hp = p.hyper();
  const double c = hp.ratio();
  const double h = static_cast<double>(p.feature_dim());
  // (beta_s / gamma) (c h - c^2 Tr(A^{-1} G)) = h / rho - (c / rho) Tr(A^{-1} G)
  const Array t = trace_matmul(p.solve(p.gram()), Array::identity(p.coreset_size()));
  return add(scale(t, -c / hp.rho), Array::scalar(h / hp.rho));
}

namespace {

// log(1 + x) - x / (1 + x) without cancellation for small x.
double kl_eigen_term(double x) {
  if (x < 1e-3) {
    double s = 0.0;
    double pw = x * x;
    for (int n = 2; n < 12; ++n) {
      s += ((n % 2 == 0) ? 1.0 : -1.0) * (n - 1) / static_cast<double>(n) * pw;
      pw *= x;
    }
    return s;
  }
  return std::log1p(x) - x / (1.0 + x);
}

}  // namespace

Array kl_to_prior(const CoresetPosterior& p) {
  const Hyperparams& hp = p.hyper();
  const double k = static_cast<double>(p.classes());
  const double c = hp.ratio();
  // k (log det A - c Tr(A^{-1} G)) equals k (-h log rho - log det V* - h + rho Tr V*).
  const Array trace_part = trace_matmul(p.solve(p.gram()), Array::identity(p.coreset_size()));
  const Array cov_term = scale(sub(p.logdet_system(), scale(trace_part, c)), k);
  const Array mean_term = scale(sum(hadamard(p.means(), p.means())), hp.rho);

  // The difference above cancels when c G is small. Its value is recomputed
  // from the eigenvalues of c G; the tape keeps the matrix form for gradients.
  double stable = 0.0;
  for (double ev : sym_eigenvalues(scale(p.gram().detached(), c))) {
    stable += kl_eigen_term(std::max(0.0, ev));
  }
  const double correction = k * stable - cov_term.item();
  return scale(add(add(cov_term, Array::scalar(correction)), mean_term), 0.5);
}

double fixed_point_residual(const CoresetPosterior& p) {
  const Hyperparams& hp = p.hyper();
  const Array phi = p.features().detached();
  const Array m = p.means().detached();
  const Array y = p.labels().detached();
  // V*^{-1} m - (gamma/beta_s) Phi^T y = rho m + (gamma/beta_s) Phi^T (Phi m - y)
  const Array r = add(scale(m, hp.rho),
                      scale(matmul(transpose(phi), sub(matmul(phi, m), y)), hp.gamma / hp.beta_s));
  double worst = 0.0;
  for (std::size_t j = 0; j < r.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < r.rows(); ++i) s += r(i, j) * r(i, j);
    worst = std::max(worst, std::sqrt(s));
  }
  return worst;
}

}  // namespace vbpc
