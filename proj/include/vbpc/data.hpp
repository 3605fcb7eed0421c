// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vbpc/ndiff/array.hpp"
#include "vbpc/posterior.hpp"

namespace vbpc {

using ndiff::Array;

// Per-feature affine normalization (x - mean) / std.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;

  bool empty() const { return mean.empty(); }
  // Identity stats for d features.
  static NormStats identity(std::size_t d);
};

struct Dataset {
  Array x;                  // n x d
  std::vector<int> labels;  // n, in [0, k)
  std::size_t k = 0;
  NormStats stats;          // set by normalize / apply_stats

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return x.cols(); }
  Array one_hot() const;
  // Rows `idx` with their one-hot labels.
  Array rows(const std::vector<std::size_t>& idx) const;
  Array one_hot_rows(const std::vector<std::size_t>& idx) const;
};

enum class SyntheticKind { blobs, moons, circles };

SyntheticKind parse_synthetic_kind(const std::string& name);

// blobs: k isotropic clusters centered on a circle of radius 4; moons and
// circles: the usual interleaved half-circles / concentric rings (k must be
// 2). Class counts are balanced to within one and rows are shuffled.
Dataset gen_synthetic(SyntheticKind kind, std::size_t n, std::size_t k, double noise,
                      std::uint64_t seed);

// Big-endian IDX pair: u8 images (magic 2051) scaled to [0, 1] and u8 labels
// (magic 2049). k is max label + 1. Throws FormatError.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// Population mean and std per feature, std floored at 1e-8.
NormStats compute_stats(const Array& x);
// Normalizes with the dataset's own stats and stores them. Requires n >= 2.
void normalize(Dataset& data);
// Normalizes with given stats (e.g. the training split's).
void apply_stats(Dataset& data, const NormStats& stats);
// Inverse of the normalization for one value of feature j.
double denormalize(const NormStats& stats, std::size_t j, double v);

struct PseudoCoreset {
  Array images;  // n_hat x d
  Array labels;  // n_hat x k, class-major rows
  std::size_t ipc = 0;
  Hyperparams hyper;

  std::size_t size() const { return images.rows(); }
  std::size_t classes() const { return labels.cols(); }
};

enum class InitMode { sample, uniform };

// Row of the initial soft labels: (e_c - 1/k) / sqrt(k / 10).
std::vector<double> init_label_row(std::size_t c, std::size_t k);

// ipc rows per class, class-major. `sample` draws distinct examples of each
// class; `uniform` draws pixels in [0, 1] and passes them through the
// dataset's normalization.
PseudoCoreset init_coreset(const Dataset& data, std::size_t ipc, InitMode mode,
                           std::uint64_t seed, const Hyperparams& hyper);

inline constexpr std::uint32_t kCoresetVersion = 1;

void save_coreset(const PseudoCoreset& c, const std::filesystem::path& path);
// Throws FormatError on bad magic, unsupported version, truncation or a
// checksum mismatch.
PseudoCoreset load_coreset(const std::filesystem::path& path);

// Writes coreset_<class>_<idx>.pgm per row when d is a perfect square, or
// coreset.csv (x, y, argmax label) when d == 2. Returns the number of files
// written; throws FormatError for any other d.
std::size_t export_coreset(const PseudoCoreset& c, const NormStats& stats,
                           const std::filesystem::path& dir);

}  // namespace vbpc
