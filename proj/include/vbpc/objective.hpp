// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "vbpc/network.hpp"
#include "vbpc/posterior.hpp"

namespace vbpc {

// A minibatch of training inputs with one-hot (or soft) targets.
struct Batch {
  Array x;  // |B| x d
  Array y;  // |B| x k
};

struct OuterLossBreakdown {
  double total = 0.0;
  double likelihood = 0.0;  // already scaled by n / |B|
  double kl = 0.0;          // already multiplied by beta_d
};

struct OuterLoss {
  Array value;  // 1 x 1, on the tape when the coreset leaves are
  OuterLossBreakdown breakdown;
};

// -(n/|B|) sum_i y_i . probit_log_softmax(x_i) + beta_d KL(q || p0) given
// coreset features phi_c with labels, and batch features phi_b with targets.
// Uses only n_hat x n_hat systems.
OuterLoss loss_from_features(const Array& phi_c, const Array& labels, const Array& phi_b,
                             const Array& y_b, std::size_t n_total, const Hyperparams& hyper);

// The same value through the materialized h x h covariance: log det and trace
// from V* itself and the batch variances from phi_b V*. Forward only; refuses
// h > max_dim. Benchmark baseline.
OuterLossBreakdown loss_from_features_naive(const Array& phi_c, const Array& labels,
                                            const Array& phi_b, const Array& y_b,
                                            std::size_t n_total, const Hyperparams& hyper,
                                            std::size_t max_dim = 8192);

// Outer loss of the coreset (images, labels) under the feature map of `net`.
// Batch features are constants; only the coreset operands can be tracked.
OuterLoss outer_loss(const Array& images, const Array& labels, const FeatureNet& net,
                     const Batch& batch, std::size_t n_total, const Hyperparams& hyper);

struct CoresetGrad {
  Array images;
  Array labels;
};

// Reverse sweep of `loss` onto the two coreset leaves. Throws if the loss is
// not on a tape or a leaf belongs to another tape.
CoresetGrad coreset_grad(const OuterLoss& loss, const Array& image_leaf, const Array& label_leaf);

// Central differences of outer_loss, two evaluations per coordinate. Refuses
// instances with more than 2000 coordinates.
CoresetGrad fd_grad_oracle(const Array& images, const Array& labels, const FeatureNet& net,
                           const Batch& batch, std::size_t n_total, const Hyperparams& hyper,
                           double eps = 1e-5);

}  // namespace vbpc
