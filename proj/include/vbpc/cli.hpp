// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vbpc/data.hpp"
#include "vbpc/trainer.hpp"

namespace vbpc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// `key = value` lines, `#` comments. Unknown keys and bad values throw
// ConfigError; missing keys keep TrainConfig defaults.
TrainConfig parse_config(const std::filesystem::path& path);
TrainConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
// Every key with its value, in a form parse_config_text reads back to an
// equal TrainConfig.
std::string format_config(const TrainConfig& config, std::optional<std::size_t> n_hat = {});
const std::vector<std::string>& config_keys();

struct DataSpec {
  bool synthetic = true;
  SyntheticKind kind = SyntheticKind::moons;
  std::size_t n = 2000;
  std::size_t k = 2;
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::filesystem::path train_images, train_labels;
  std::filesystem::path test_images, test_labels;  // empty: evaluate on train
};

// synthetic:<blobs|moons|circles>:n=N,k=K,noise=F[,seed=S] or
// idx:<images>,<labels>[;test=<images>,<labels>]
DataSpec parse_data_spec(const std::string& text);

struct Splits {
  Dataset train;
  Dataset test;
};

// Loads (or generates, the test split with seed + 1) both splits and
// normalizes them with the training statistics.
Splits load_splits(const DataSpec& spec);

enum class BenchMode { naive, efficient };

struct BenchResult {
  BenchMode mode = BenchMode::efficient;
  std::size_t h = 0, n_hat = 0, k = 0, batch = 0, reps = 0;
  std::size_t peak_f64 = 0;     // peak live tracked f64 above the inputs
  std::size_t largest_f64 = 0;  // largest single tracked allocation
  double ms_per_100 = 0.0;
  double loss = 0.0;
};

// Forward outer loss + KL on random features; naive refuses h > 8192.
BenchResult run_bench(BenchMode mode, std::size_t h, std::size_t n_hat, std::size_t reps,
                      std::size_t k = 10, std::size_t batch = 256, std::uint64_t seed = 0);

// Full command-line entry point; returns the process exit code.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace vbpc::cli
