// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "vbpc/objective.hpp"

#include <cmath>
#include <string>

#include "vbpc/error.hpp"
#include "vbpc/ndiff/linalg.hpp"
#include "vbpc/ndiff/tape.hpp"
#include "vbpc/predictive.hpp"

namespace vbpc {

using namespace ndiff;

namespace {

void check_batch(const Array& phi_c, const Array& labels, const Array& phi_b, const Array& y_b) {
  if (phi_b.rows() == 0) throw ShapeError("outer loss: empty batch");
  if (y_b.rows() != phi_b.rows() || y_b.cols() != labels.cols() ||
      phi_b.cols() != phi_c.cols()) {
    throw ShapeError("outer loss: batch features " + phi_b.shape_str() + ", targets " +
                     y_b.shape_str() + ", coreset features " + phi_c.shape_str() + ", labels " +
                     labels.shape_str());
  }
}

}  // namespace

OuterLoss loss_from_features(const Array& phi_c, const Array& labels, const Array& phi_b,
                             const Array& y_b, std::size_t n_total, const Hyperparams& hyper) {
  check_batch(phi_c, labels, phi_b, y_b);
  const CoresetPosterior post = solve_posterior(phi_c, labels, hyper);
  const PredictiveBatch mom = predictive_moments(post, phi_b);
  const Array logp = probit_log_softmax(mom.mean, mom.variance, hyper.alpha);
  const double scale_n = static_cast<double>(n_total) / static_cast<double>(phi_b.rows());
  const Array lik = scale(sum(hadamard(y_b, logp)), -scale_n);
  const Array kl = scale(kl_to_prior(post), hyper.beta_d);
  OuterLoss out;
  out.value = add(lik, kl);
  out.breakdown = {out.value.item(), lik.item(), kl.item()};
  return out;
}

OuterLossBreakdown loss_from_features_naive(const Array& phi_c, const Array& labels,
                                            const Array& phi_b, const Array& y_b,
                                            std::size_t n_total, const Hyperparams& hyper,
                                            std::size_t max_dim) {
  check_batch(phi_c, labels, phi_b, y_b);
  const CoresetPosterior post =
      solve_posterior(phi_c.detached(), labels.detached(), hyper);
  const Array v = dense_variance(post, max_dim);
  const std::size_t h = v.rows();
  const double k = static_cast<double>(labels.cols());

  // Batch variances from the explicit covariance.
  const Array pv = matmul(phi_b.detached(), v);
  Array var(phi_b.rows(), 1);
  auto vv = var.mutable_values();
  for (std::size_t i = 0; i < phi_b.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < h; ++j) s += pv(i, j) * phi_b(i, j);
    vv[i] = s;
  }
  const Array logp = probit_log_softmax(matmul(phi_b.detached(), post.means()), var, hyper.alpha,
                                        1e-12 * std::max(1.0, frobenius_norm(pv)));
  double lik = 0.0;
  for (std::size_t i = 0; i < logp.rows(); ++i)
    for (std::size_t j = 0; j < logp.cols(); ++j) lik -= y_b(i, j) * logp(i, j);
  lik *= static_cast<double>(n_total) / static_cast<double>(phi_b.rows());

  const double logdet = logdet_from_factor(cholesky_sym_part(v));
  double trace = 0.0;
  for (std::size_t i = 0; i < h; ++i) trace += v(i, i);
  double msq = 0.0;
  for (double m : post.means().values()) msq += m * m;
  const double hd = static_cast<double>(h);
  const double kl = 0.5 * (k * (-hd * std::log(hyper.rho) - logdet) - k * hd +
                           k * hyper.rho * trace + hyper.rho * msq);
  return {lik + hyper.beta_d * kl, lik, hyper.beta_d * kl};
}

OuterLoss outer_loss(const Array& images, const Array& labels, const FeatureNet& net,
                     const Batch& batch, std::size_t n_total, const Hyperparams& hyper) {
  const Array phi_c = features(net, images);
  const Array phi_b = features(net, batch.x.detached());
  return loss_from_features(phi_c, labels, phi_b, batch.y.detached(), n_total, hyper);
}

CoresetGrad coreset_grad(const OuterLoss& loss, const Array& image_leaf, const Array& label_leaf) {
  Tape* tape = loss.value.tape();
  if (tape == nullptr) throw Error("coreset_grad: loss was not recorded on a tape");
  if (image_leaf.tape() != tape || label_leaf.tape() != tape) {
    throw Error("coreset_grad: coreset leaves are not on the loss tape");
  }
  const Gradients g = tape->backward(loss.value);
  return {g.wrt(image_leaf), g.wrt(label_leaf)};
}

CoresetGrad fd_grad_oracle(const Array& images, const Array& labels, const FeatureNet& net,
                           const Batch& batch, std::size_t n_total, const Hyperparams& hyper,
                           double eps) {
  const std::size_t coords = images.size() + labels.size();
  if (coords > 2000) {
    throw Error("fd_grad_oracle: " + std::to_string(coords) + " coordinates exceed the limit of 2000");
  }
  auto eval = [&](const Array& x, const Array& y) {
    return outer_loss(x, y, net, batch, n_total, hyper).breakdown.total;
  };
  auto central = [&](const Array& target, bool is_images) {
    Array grad(target.rows(), target.cols());
    auto gv = grad.mutable_values();
    for (std::size_t i = 0; i < target.size(); ++i) {
      Array plus = target.detached();
      Array minus = target.detached();
      plus.mutable_values()[i] += eps;
      minus.mutable_values()[i] -= eps;
      const double fp = is_images ? eval(plus, labels.detached()) : eval(images.detached(), plus);
      const double fm = is_images ? eval(minus, labels.detached()) : eval(images.detached(), minus);
      gv[i] = (fp - fm) / (2.0 * eps);
    }
    return grad;
  };
  return {central(images, true), central(labels, false)};
}

}  // namespace vbpc
