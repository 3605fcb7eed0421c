// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "oracles.hpp"
#include "vbpc/error.hpp"
#include "vbpc/ndiff/tape.hpp"
#include "vbpc/optim.hpp"
#include "vbpc/trainer.hpp"

using namespace vbpc;
using namespace vbpc::ndiff;

namespace {

struct VectorSink : MetricsSink {
  std::vector<MetricsRecord> records;
  std::vector<std::string> aborts;
  void record(const MetricsRecord& r) override { records.push_back(r); }
  void abort(std::uint64_t step, const std::string& d) override {
    aborts.push_back(std::to_string(step) + ": " + d);
  }
};

Dataset small_blobs(std::size_t n = 120, std::size_t k = 3) {
  Dataset d = gen_synthetic(SyntheticKind::blobs, n, k, 0.5, 7);
  normalize(d);
  return d;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.ipc = 2;
  c.steps = 30;
  c.batch_size = 32;
  c.pool_size = 3;
  c.pool_period = 10;
  c.arch = {8, 8};
  return c;
}

bool same_coreset(const PseudoCoreset& a, const PseudoCoreset& b) {
  return bit_equal(a.images, b.images) && bit_equal(a.labels, b.labels);
}

}  // namespace

TEST_CASE("adaptive-moment step") {
  SUBCASE("first step with unit gradient moves by lr") {
    OptimizerState st;
    Array p(1, 1, {0.5});
    const Array g(1, 1, {1.0});
    adam_step(st, std::span<Array>(&p, 1), std::span<const Array>(&g, 1), 0.1);
    CHECK(p(0, 0) == doctest::Approx(0.5 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(st.step == 1);
  }
  SUBCASE("zero gradient from a fresh state leaves parameters unchanged") {
    OptimizerState st;
    Array p(2, 2, {1, 2, 3, 4});
    const Array before = p.detached();
    const Array g(2, 2);
    adam_step(st, std::span<Array>(&p, 1), std::span<const Array>(&g, 1), 0.1);
    CHECK(bit_equal(p, before));
  }
  SUBCASE("moments decay under zero gradient") {
    OptimizerState st;
    Array p(1, 1, {0.0});
    Array g(1, 1, {2.0});
    adam_step(st, std::span<Array>(&p, 1), std::span<const Array>(&g, 1), 0.01);
    const double m1 = st.m[0](0, 0);
    const double v1 = st.v[0](0, 0);
    g = Array(1, 1);
    adam_step(st, std::span<Array>(&p, 1), std::span<const Array>(&g, 1), 0.01);
    CHECK(st.m[0](0, 0) == doctest::Approx(0.9 * m1).epsilon(1e-15));
    CHECK(st.v[0](0, 0) == doctest::Approx(0.999 * v1).epsilon(1e-15));
  }
  SUBCASE("deterministic per state") {
    std::mt19937_64 rng(60);
    const Array g = oracle::randn(3, 3, rng);
    OptimizerState a;
    OptimizerState b;
    Array pa = oracle::randn(3, 3, rng);
    Array pb = pa.detached();
    for (int t = 0; t < 5; ++t) {
      adam_step(a, std::span<Array>(&pa, 1), std::span<const Array>(&g, 1), 0.01);
      adam_step(b, std::span<Array>(&pb, 1), std::span<const Array>(&g, 1), 0.01);
    }
    CHECK(bit_equal(pa, pb));
  }
  SUBCASE("plain gradient mode") {
    OptimizerState st;
    st.kind = OptimizerKind::sgd;
    Array p(1, 2, {1.0, -1.0});
    const Array g(1, 2, {0.5, 2.0});
    adam_step(st, std::span<Array>(&p, 1), std::span<const Array>(&g, 1), 0.1);
    CHECK(p(0, 0) == doctest::Approx(0.95));
    CHECK(p(0, 1) == doctest::Approx(-1.2));
  }
  SUBCASE("shape mismatch") {
    OptimizerState st;
    Array p(1, 2);
    const Array g(2, 1);
    CHECK_THROWS_AS(adam_step(st, std::span<Array>(&p, 1), std::span<const Array>(&g, 1), 0.1),
                    ShapeError);
  }
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0, 100, 0.003) == 0.003);
  CHECK(cosine_lr(100, 100, 0.003) == doctest::Approx(0.0));
  CHECK(cosine_lr(50, 100, 0.003) == doctest::Approx(0.0015).epsilon(1e-14));
  double prev = 1.0;
  for (std::uint64_t s = 0; s <= 100; ++s) {
    const double lr = cosine_lr(s, 100, 0.003);
    CHECK(lr <= prev);
    prev = lr;
  }
  CHECK_THROWS(cosine_lr(101, 100, 0.003));
}

TEST_CASE("noise augmentation") {
  std::mt19937_64 rng(61);
  const Array x = oracle::randn(1000, 100, rng);
  SUBCASE("zero sigma is the identity") {
    std::mt19937_64 r(1);
    CHECK(bit_equal(augment_noise(x, 0.0, r), x));
  }
  SUBCASE("sample variance of the added noise") {
    std::mt19937_64 r(2);
    const Array y = augment_noise(x, 0.1, r);
    double mean = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) mean += y.values()[i] - x.values()[i];
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = y.values()[i] - x.values()[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(x.size() - 1);
    CHECK(var >= 0.009);
    CHECK(var <= 0.011);
  }
  SUBCASE("deterministic per seed") {
    std::mt19937_64 r1(3);
    std::mt19937_64 r2(3);
    CHECK(bit_equal(augment_noise(x, 0.1, r1), augment_noise(x, 0.1, r2)));
  }
  SUBCASE("negative sigma") {
    std::mt19937_64 r(4);
    CHECK_THROWS_AS(augment_noise(x, -0.1, r), ConfigError);
  }
}

TEST_CASE("batch sampler") {
  const Dataset d = small_blobs(60, 3);
  SUBCASE("full-size batches are permutations") {
    BatchSampler s(d, 60, 1);
    for (int e = 0; e < 3; ++e) {
      const auto idx = s.next_indices();
      CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 60);
    }
  }
  SUBCASE("each epoch partitions the data") {
    BatchSampler s(d, 12, 2);
    std::vector<int> seen(60, 0);
    for (int b = 0; b < 5; ++b)
      for (std::size_t i : s.next_indices()) ++seen[i];
    for (int c : seen) CHECK(c == 1);
  }
  SUBCASE("reproducible per seed") {
    BatchSampler a(d, 7, 3);
    BatchSampler b(d, 7, 3);
    for (int t = 0; t < 30; ++t) CHECK(a.next_indices() == b.next_indices());
  }
  SUBCASE("batch rows and one-hot targets line up") {
    BatchSampler s(d, 5, 4);
    BatchSampler twin(d, 5, 4);
    const Batch b = s.next();
    const auto idx = twin.next_indices();
    for (std::size_t r = 0; r < 5; ++r) {
      CHECK(b.x(r, 0) == d.x(idx[r], 0));
      CHECK(b.y(r, static_cast<std::size_t>(d.labels[idx[r]])) == 1.0);
    }
  }
  SUBCASE("oversized batch") { CHECK_THROWS_AS(BatchSampler(d, 61, 0), ConfigError); }
}

TEST_CASE("training toggles") {
  const Dataset d = small_blobs();
  SUBCASE("zero learning rate leaves the coreset unchanged") {
    TrainConfig c = quick_config();
    c.steps = 1;
    c.coreset_lr = 0.0;
    const Hyperparams hp = c.resolved_hyper(c.ipc * d.k);
    const PseudoCoreset start = init_coreset(d, c.ipc, InitMode::sample, c.seed_init, hp);
    VectorSink sink;
    const PseudoCoreset out = train_from(c, d, start, sink);
    CHECK(same_coreset(out, start));
    CHECK(sink.records.size() == 1);
  }
  SUBCASE("frozen labels stay bit-identical while images move") {
    TrainConfig c = quick_config();
    c.learn_labels = false;
    const Hyperparams hp = c.resolved_hyper(c.ipc * d.k);
    const PseudoCoreset start = init_coreset(d, c.ipc, InitMode::sample, c.seed_init, hp);
    VectorSink sink;
    const PseudoCoreset out = train(c, d, sink);
    CHECK(bit_equal(out.labels, start.labels));
    CHECK_FALSE(bit_equal(out.images, start.images));
  }
  SUBCASE("zero noise sigma matches disabled augmentation") {
    TrainConfig a = quick_config();
    a.noise_sigma = 0.0;
    TrainConfig b = quick_config();
    b.noise_aug = false;
    VectorSink sa;
    VectorSink sb;
    CHECK(same_coreset(train(a, d, sa), train(b, d, sb)));
  }
  SUBCASE("uniform initialization trains and improves its own loss") {
    TrainConfig c = quick_config();
    c.random_init = true;
    c.steps = 200;
    VectorSink sink;
    (void)train(c, d, sink);
    double tail = 0.0;
    for (std::size_t i = sink.records.size() - 20; i < sink.records.size(); ++i)
      tail += sink.records[i].loss;
    CHECK(tail / 20.0 < sink.records.front().loss);
  }
}

TEST_CASE("metrics records") {
  const Dataset d = small_blobs();
  TrainConfig c = quick_config();
  c.steps = 25;
  c.log_every = 10;
  VectorSink sink;
  (void)train(c, d, sink);
  REQUIRE(sink.records.size() == 4);
  CHECK(sink.records[0].step == 0);
  CHECK(sink.records[1].step == 10);
  CHECK(sink.records[3].step == 24);
  for (const MetricsRecord& r : sink.records) {
    CHECK(std::abs(r.loss - (r.lik + r.kl)) <= 1e-12 * std::abs(r.loss));
    CHECK(r.lr == doctest::Approx(cosine_lr(r.step, 25, c.coreset_lr)));
  }
}

TEST_CASE("training is deterministic") {
  const Dataset d = small_blobs();
  const TrainConfig c = quick_config();
  VectorSink a;
  VectorSink b;
  const PseudoCoreset ca = train(c, d, a);
  const PseudoCoreset cb = train(c, d, b);
  CHECK(same_coreset(ca, cb));
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].loss == b.records[i].loss);
    CHECK(a.records[i].lik == b.records[i].lik);
    CHECK(a.records[i].kl == b.records[i].kl);
  }
  TrainConfig other = c;
  other.seed_pool = 99;
  VectorSink s;
  CHECK_FALSE(same_coreset(train(other, d, s), ca));
}

TEST_CASE("an injected non-finite gradient aborts with a diagnostic") {
  const Dataset d = small_blobs();
  TrainConfig c = quick_config();
  TrainHooks hooks;
  hooks.on_grad = [](std::uint64_t step, CoresetGrad& g) {
    if (step == 3) g.images.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
  };
  VectorSink sink;
  CHECK_THROWS_AS(train(c, d, sink, hooks), NonFiniteError);
  CHECK(sink.records.size() == 3);
  REQUIRE(sink.aborts.size() == 1);
  CHECK(sink.aborts[0].find("gradient") != std::string::npos);
}

TEST_CASE("a training step never allocates h x h at h = 4096") {
  const Dataset d = small_blobs(40, 2);
  TrainConfig c;
  c.ipc = 3;
  c.steps = 1;
  c.batch_size = 16;
  c.pool_size = 1;
  c.arch = {4096};
  VectorSink sink;
  AllocScope scope;
  (void)train(c, d, sink);
  CHECK(scope.largest() < std::size_t{4096} * 4096);
}

TEST_CASE("configuration validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.steps = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.coreset_lr = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(c.validate(true));
  c = TrainConfig{};
  c.arch = {};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.hyper.gamma = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  CHECK(c.resolved_hyper(20).beta_s == 20.0);
  c.beta_s_auto = false;
  c.hyper.beta_s = 3.0;
  CHECK(c.resolved_hyper(20).beta_s == 3.0);
}

TEST_CASE("dimension mismatch between coreset and data") {
  const Dataset d = small_blobs();
  PseudoCoreset bad;
  bad.images = Array(6, 3);
  bad.labels = Array(6, 3);
  bad.ipc = 2;
  VectorSink sink;
  CHECK_THROWS_AS(train_from(quick_config(), d, bad, sink), ShapeError);
}

TEST_CASE("coreset evaluation") {
  const Dataset d = small_blobs(90, 3);
  TrainConfig c = quick_config();
  const PseudoCoreset core =
      init_coreset(d, c.ipc, InitMode::sample, 0, c.resolved_hyper(c.ipc * d.k));
  SUBCASE("untrained zero net predicts near-uniformly") {
    EvalConfig e;
    e.tprime = 0;
    e.init = InitKind::zero;
    const Metrics m = evaluate_coreset(core, d, e);
    CHECK(std::abs(m.nll - std::log(3.0)) <= 0.05);
  }
  SUBCASE("deterministic per seed") {
    EvalConfig e;
    e.tprime = 50;
    const Metrics a = evaluate_coreset(core, d, e);
    const Metrics b = evaluate_coreset(core, d, e);
    CHECK(a.acc == b.acc);
    CHECK(a.nll == b.nll);
  }
  SUBCASE("dimension mismatch") {
    Dataset other = gen_synthetic(SyntheticKind::blobs, 40, 2, 0.5, 1);
    CHECK_THROWS_AS(evaluate_coreset(core, other, EvalConfig{}), ShapeError);
  }
}
