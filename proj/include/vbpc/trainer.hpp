// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "vbpc/data.hpp"
#include "vbpc/network.hpp"
#include "vbpc/objective.hpp"
#include "vbpc/predictive.hpp"

namespace vbpc {

struct TrainConfig {
  Hyperparams hyper;
  bool beta_s_auto = true;  // beta_s := n_hat
  std::size_t ipc = 5;
  std::uint64_t steps = 5000;
  std::size_t batch_size = 256;
  double coreset_lr = 0.003;
  double pool_lr = 0.0003;
  std::size_t pool_size = 10;
  std::uint64_t pool_period = 100;
  double noise_sigma = 0.1;
  bool noise_aug = true;
  bool learn_labels = true;
  bool random_init = false;
  std::vector<std::size_t> arch = {32, 32};  // widths after the input layer
  std::uint64_t seed_data = 0;
  std::uint64_t seed_pool = 0;
  std::uint64_t seed_noise = 0;
  std::uint64_t seed_init = 0;
  std::uint64_t log_every = 1;

  // Throws ConfigError naming the first violated constraint. Learning rates
  // must be > 0 unless `allow_zero_lr`.
  void validate(bool allow_zero_lr = false) const;
  // Hyperparameters with beta_s resolved for a coreset of n_hat points.
  Hyperparams resolved_hyper(std::size_t n_hat) const;

  bool operator==(const TrainConfig&) const = default;
};

struct MetricsRecord {
  std::uint64_t step = 0;
  double loss = 0.0;
  double lik = 0.0;
  double kl = 0.0;
  double lr = 0.0;
  double ms = 0.0;
};

class MetricsSink {
 public:
  virtual ~MetricsSink() = default;
  virtual void record(const MetricsRecord& r) = 0;
  // Called once before train() throws on a non-finite loss or gradient.
  virtual void abort(std::uint64_t step, const std::string& diagnostic) = 0;
};

// Test hook run on the coreset gradient before the finiteness check.
struct TrainHooks {
  std::function<void(std::uint64_t step, CoresetGrad& grad)> on_grad;
};

// Uniform minibatches without replacement within an epoch, reshuffled
// between epochs.
class BatchSampler {
 public:
  BatchSampler(const Dataset& data, std::size_t size, std::uint64_t seed);
  std::vector<std::size_t> next_indices();
  Batch next();

 private:
  const Dataset* data_;
  std::size_t size_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> perm_;
  std::size_t pos_ = 0;
};

// images + sigma * N(0, 1) draws; sigma == 0 returns `images` itself.
Array augment_noise(const Array& images, double sigma, std::mt19937_64& rng);

// Coreset learning loop over `steps` outer iterations. Throws NonFiniteError
// (after sink.abort) on a non-finite loss or gradient.
PseudoCoreset train(const TrainConfig& config, const Dataset& data, MetricsSink& sink,
                    const TrainHooks& hooks = {});

// Same loop from a given starting coreset.
PseudoCoreset train_from(const TrainConfig& config, const Dataset& data, PseudoCoreset start,
                         MetricsSink& sink, const TrainHooks& hooks = {});

struct EvalConfig {
  std::vector<std::size_t> arch = {32, 32};
  std::uint64_t tprime = 2000;
  double lr = 0.0003;
  std::uint64_t seed = 0;
  InitKind init = InitKind::lecun;
};

// Fresh net trained for T' Gaussian-likelihood steps on the coreset, then the
// closed-form posterior and probit BMA on `test`.
Metrics evaluate_coreset(const PseudoCoreset& coreset, const Dataset& test,
                         const EvalConfig& config);

}  // namespace vbpc
