// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "vbpc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "vbpc/error.hpp"
#include "vbpc/ndiff/tape.hpp"
#include "vbpc/optim.hpp"

namespace vbpc {

using namespace ndiff;

void TrainConfig::validate(bool allow_zero_lr) const {
  hyper.validate();
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (ipc < 1) fail("ipc must be >= 1");
  if (steps < 1) fail("steps must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  auto check_lr = [&](double lr, const char* name) {
    const bool ok = allow_zero_lr ? lr >= 0.0 : lr > 0.0;
    if (!ok || !std::isfinite(lr)) {
      fail(std::string(name) + (allow_zero_lr ? " must be >= 0" : " must be > 0"));
    }
  };
  check_lr(coreset_lr, "coreset_lr");
  check_lr(pool_lr, "pool_lr");
  if (pool_size < 1) fail("pool_size must be >= 1");
  if (pool_period < 1) fail("pool_period must be >= 1");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma must be >= 0");
  if (arch.empty()) fail("arch must list at least one width");
  for (std::size_t w : arch) {
    if (w < 1) fail("arch widths must be >= 1");
  }
  if (log_every < 1) fail("log_every must be >= 1");
}

Hyperparams TrainConfig::resolved_hyper(std::size_t n_hat) const {
  Hyperparams h = hyper;
  if (beta_s_auto) h.beta_s = static_cast<double>(n_hat);
  return h;
}

BatchSampler::BatchSampler(const Dataset& data, std::size_t size, std::uint64_t seed)
    : data_(&data), size_(size), rng_(seed), perm_(data.size()) {
  if (size == 0 || size > data.size()) {
    throw ConfigError("batch size " + std::to_string(size) + " must be in [1, " +
                      std::to_string(data.size()) + "]");
  }
  for (std::size_t i = 0; i < perm_.size(); ++i) perm_[i] = i;
  std::shuffle(perm_.begin(), perm_.end(), rng_);
}

std::vector<std::size_t> BatchSampler::next_indices() {
  // A batch never straddles epochs: a short tail is dropped and the order is
  // reshuffled, so each epoch's batches are disjoint.
  if (pos_ + size_ > perm_.size()) {
    std::shuffle(perm_.begin(), perm_.end(), rng_);
    pos_ = 0;
  }
  std::vector<std::size_t> idx(perm_.begin() + static_cast<std::ptrdiff_t>(pos_),
                               perm_.begin() + static_cast<std::ptrdiff_t>(pos_ + size_));
  pos_ += size_;
  return idx;
}

Batch BatchSampler::next() {
  const auto idx = next_indices();
  return {data_->rows(idx), data_->one_hot_rows(idx)};
}

Array augment_noise(const Array& images, double sigma, std::mt19937_64& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("augment_noise: sigma must be >= 0");
  if (sigma == 0.0) return images;
  std::normal_distribution<double> normal(0.0, 1.0);
  Array noise(images.rows(), images.cols());
  for (double& v : noise.mutable_values()) v = sigma * normal(rng);
  return add(images, noise);
}

PseudoCoreset train(const TrainConfig& config, const Dataset& data, MetricsSink& sink,
                    const TrainHooks& hooks) {
  const Hyperparams hyper = config.resolved_hyper(config.ipc * data.k);
  PseudoCoreset start =
      init_coreset(data, config.ipc, config.random_init ? InitMode::uniform : InitMode::sample,
                   config.seed_init, hyper);
  return train_from(config, data, std::move(start), sink, hooks);
}

PseudoCoreset train_from(const TrainConfig& config, const Dataset& data, PseudoCoreset start,
                         MetricsSink& sink, const TrainHooks& hooks) {
  config.validate(true);
  if (data.size() == 0) throw ConfigError("train: empty dataset");
  if (start.images.cols() != data.dim() || start.classes() != data.k) {
    throw ShapeError("train: coreset " + start.images.shape_str() + " / " +
                     start.labels.shape_str() + " vs dataset d = " + std::to_string(data.dim()) +
                     ", k = " + std::to_string(data.k));
  }
  start.hyper.validate();
  const Hyperparams& hyper = start.hyper;

  std::vector<std::size_t> widths = {data.dim()};
  widths.insert(widths.end(), config.arch.begin(), config.arch.end());
  ModelPool pool = pool_new(config.pool_size, widths, data.k, config.pool_period, config.seed_pool);
  std::mt19937_64 pick_rng(config.seed_pool ^ 0x5bd1e995ULL);
  std::mt19937_64 noise_rng(config.seed_noise);
  BatchSampler sampler(data, std::min(config.batch_size, data.size()), config.seed_data);
  OptimizerState image_opt;
  OptimizerState label_opt;

  PseudoCoreset c = std::move(start);
  const auto t0 = std::chrono::steady_clock::now();
  std::uint64_t s = 0;
  try {
    for (; s < config.steps; ++s) {
      const double lr = cosine_lr(s, config.steps, config.coreset_lr);
      const Batch batch = sampler.next();
      const auto [slot, net] = pool_sample(pool, pick_rng);

      Tape tape;
      const Array x_leaf = tape.leaf(c.images);
      const Array y_leaf = tape.leaf(c.labels);
      const Array x_in = config.noise_aug ? augment_noise(x_leaf, config.noise_sigma, noise_rng)
                                          : x_leaf;
      const OuterLoss loss = outer_loss(x_in, y_leaf, *net, batch, data.size(), hyper);
      if (!std::isfinite(loss.breakdown.total)) {
        throw NonFiniteError("non-finite outer loss at step " + std::to_string(s));
      }
      CoresetGrad grad = coreset_grad(loss, x_leaf, y_leaf);
      if (hooks.on_grad) hooks.on_grad(s, grad);
      if (!all_finite(grad.images) || !all_finite(grad.labels)) {
        throw NonFiniteError("non-finite coreset gradient at step " + std::to_string(s));
      }

      Array images = c.images.detached();
      adam_step(image_opt, std::span<Array>(&images, 1),
                std::span<const Array>(&grad.images, 1), lr);
      c.images = images;
      if (config.learn_labels) {
        Array labels = c.labels.detached();
        adam_step(label_opt, std::span<Array>(&labels, 1), std::span<const Array>(&grad.labels, 1),
                  lr);
        c.labels = labels;
      }
      pool_update(pool, slot, c.images, c.labels, hyper.gamma, config.pool_lr);

      if (s % config.log_every == 0 || s + 1 == config.steps) {
        const double ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
        sink.record(
            {s, loss.breakdown.total, loss.breakdown.likelihood, loss.breakdown.kl, lr, ms});
      }
    }
  } catch (const NonFiniteError& e) {
    // Covers the checks above and non-finite results raised inside kernels,
    // for example by the pool update.
    sink.abort(s, e.what());
    throw;
  }
  return c;
}

Metrics evaluate_coreset(const PseudoCoreset& coreset, const Dataset& test,
                         const EvalConfig& config) {
  if (coreset.images.cols() != test.dim() || coreset.classes() != test.k) {
    throw ShapeError("eval: coreset " + coreset.images.shape_str() + " / " +
                     coreset.labels.shape_str() + " vs test d = " + std::to_string(test.dim()) +
                     ", k = " + std::to_string(test.k));
  }
  coreset.hyper.validate();
  std::vector<std::size_t> widths = {test.dim()};
  widths.insert(widths.end(), config.arch.begin(), config.arch.end());
  FeatureNet net = init_net(widths, test.k, config.seed, config.init);
  OptimizerState state;
  for (std::uint64_t t = 0; t < config.tprime; ++t) {
    gaussian_step(net, coreset.images, coreset.labels, coreset.hyper.gamma, config.lr, state);
  }
  const CoresetPosterior post =
      solve_posterior(features(net, coreset.images), coreset.labels, coreset.hyper);
  const PredictiveBatch mom = predictive_moments(post, features(net, test.x));
  return metrics(probit_log_softmax(mom.mean, mom.variance, coreset.hyper.alpha), test.labels);
}

}  // namespace vbpc
