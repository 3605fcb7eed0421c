// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "vbpc/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

#include "vbpc/error.hpp"

namespace vbpc {

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void require_bytes(const std::filesystem::path& path, std::size_t expected, std::size_t actual) {
  if (actual != expected) {
    throw FormatError(path.string() + ": expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(actual));
  }
}

// Little-endian byte writer/reader for the coreset format.
struct LeWriter {
  std::vector<unsigned char> bytes;
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
};

struct LeReader {
  const std::vector<unsigned char>& bytes;
  std::size_t at = 0;
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes[at++]} << (8 * i);
    return v;
  }
  double f64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes[at++]} << (8 * i);
    return std::bit_cast<double>(v);
  }
};

std::uint32_t crc32_of(const unsigned char* p, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), p, static_cast<uInt>(n)));
}

constexpr std::size_t kHeaderBytes = 4 + 4 + 4 * 4 + 4 * 8;

}  // namespace

NormStats NormStats::identity(std::size_t d) {
  return {std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
}

Array Dataset::one_hot() const {
  Array y(size(), k);
  auto v = y.mutable_values();
  for (std::size_t i = 0; i < size(); ++i) v[i * k + static_cast<std::size_t>(labels[i])] = 1.0;
  return y;
}

Array Dataset::rows(const std::vector<std::size_t>& idx) const {
  const std::size_t d = dim();
  Array out(idx.size(), d);
  auto o = out.mutable_values();
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(x.data() + idx[r] * d, d, o.data() + r * d);
  return out;
}

Array Dataset::one_hot_rows(const std::vector<std::size_t>& idx) const {
  Array y(idx.size(), k);
  auto v = y.mutable_values();
  for (std::size_t r = 0; r < idx.size(); ++r)
    v[r * k + static_cast<std::size_t>(labels[idx[r]])] = 1.0;
  return y;
}

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "blobs") return SyntheticKind::blobs;
  if (name == "moons") return SyntheticKind::moons;
  if (name == "circles") return SyntheticKind::circles;
  throw ConfigError("unknown synthetic dataset '" + name + "' (expected blobs, moons or circles)");
}

Dataset gen_synthetic(SyntheticKind kind, std::size_t n, std::size_t k, double noise,
                      std::uint64_t seed) {
  if (kind != SyntheticKind::blobs && k != 2) {
    throw ConfigError("moons and circles have exactly 2 classes, got k = " + std::to_string(k));
  }
  if (k < 2 || n < k) {
    throw ConfigError("synthetic data needs n >= k >= 2, got n = " + std::to_string(n) +
                      ", k = " + std::to_string(k));
  }
  if (!(noise >= 0.0)) throw ConfigError("synthetic noise must be >= 0");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double pi = std::numbers::pi;
  Dataset data;
  data.k = k;
  data.x = Array(n, 2);
  data.labels.resize(n);
  auto xv = data.x.mutable_values();

  // Points of class c are indexed 0..count_c-1 along the class's curve.
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < n; ++i) ++count[i % k];
  std::vector<std::size_t> seen(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % k;
    const std::size_t j = seen[c]++;
    const double denom = static_cast<double>(std::max<std::size_t>(count[c] - 1, 1));
    double px = 0.0;
    double py = 0.0;
    switch (kind) {
      case SyntheticKind::blobs: {
        const double a = 2.0 * pi * static_cast<double>(c) / static_cast<double>(k);
        px = 4.0 * std::cos(a);
        py = 4.0 * std::sin(a);
        break;
      }
      case SyntheticKind::moons: {
        const double t = pi * static_cast<double>(j) / denom;
        px = c == 0 ? std::cos(t) : 1.0 - std::cos(t);
        py = c == 0 ? std::sin(t) : 0.5 - std::sin(t);
        break;
      }
      case SyntheticKind::circles: {
        const double t = 2.0 * pi * static_cast<double>(j) / static_cast<double>(count[c]);
        const double r = c == 0 ? 1.0 : 0.5;
        px = r * std::cos(t);
        py = r * std::sin(t);
        break;
      }
    }
    xv[2 * i] = px;
    xv[2 * i + 1] = py;
    data.labels[i] = static_cast<int>(c);
  }
  if (noise > 0.0) {
    for (double& v : xv) v += noise * normal(rng);
  }

  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  Dataset out;
  out.k = k;
  out.x = data.rows(perm);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.labels[i] = data.labels[perm[i]];
  return out;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto ib = read_file(images);
  const auto lb = read_file(labels);
  if (ib.size() < 16) require_bytes(images, 16, ib.size());
  if (lb.size() < 8) require_bytes(labels, 8, lb.size());
  if (read_be32(ib, 0) != 2051) {
    throw FormatError(images.string() + ": bad magic " + std::to_string(read_be32(ib, 0)) +
                      " (expected 2051 for images)");
  }
  if (read_be32(lb, 0) != 2049) {
    throw FormatError(labels.string() + ": bad magic " + std::to_string(read_be32(lb, 0)) +
                      " (expected 2049 for labels)");
  }
  const std::size_t n = read_be32(ib, 4);
  const std::size_t d = std::size_t{read_be32(ib, 8)} * read_be32(ib, 12);
  const std::size_t nl = read_be32(lb, 4);
  if (n != nl) {
    throw FormatError("IDX count mismatch: " + std::to_string(n) + " images vs " +
                      std::to_string(nl) + " labels");
  }
  require_bytes(images, 16 + n * d, ib.size());
  require_bytes(labels, 8 + n, lb.size());
  if (n == 0 || d == 0) throw FormatError(images.string() + ": empty IDX file");

  Dataset data;
  data.x = Array(n, d);
  auto xv = data.x.mutable_values();
  for (std::size_t i = 0; i < n * d; ++i) xv[i] = static_cast<double>(ib[16 + i]) / 255.0;
  data.labels.resize(n);
  int kmax = 0;
  for (std::size_t i = 0; i < n; ++i) {
    data.labels[i] = lb[8 + i];
    kmax = std::max(kmax, data.labels[i]);
  }
  data.k = static_cast<std::size_t>(kmax) + 1;
  return data;
}

NormStats compute_stats(const Array& x) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  NormStats s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += x(i, j);
  for (double& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double dv = x(i, j) - s.mean[j];
      s.std[j] += dv * dv;
    }
  for (double& v : s.std) v = std::max(std::sqrt(v / static_cast<double>(n)), 1e-8);
  return s;
}

void normalize(Dataset& data) {
  if (data.size() < 2) throw ConfigError("normalize: need at least 2 rows");
  apply_stats(data, compute_stats(data.x));
}

void apply_stats(Dataset& data, const NormStats& stats) {
  const std::size_t d = data.dim();
  if (stats.mean.size() != d || stats.std.size() != d) {
    throw ShapeError("apply_stats: stats for " + std::to_string(stats.mean.size()) +
                     " features, data has " + std::to_string(d));
  }
  auto xv = data.x.mutable_values();
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t j = 0; j < d; ++j)
      xv[i * d + j] = (xv[i * d + j] - stats.mean[j]) / stats.std[j];
  data.stats = stats;
}

double denormalize(const NormStats& stats, std::size_t j, double v) {
  return v * stats.std[j] + stats.mean[j];
}

std::vector<double> init_label_row(std::size_t c, std::size_t k) {
  const double kd = static_cast<double>(k);
  const double s = 1.0 / std::sqrt(kd / 10.0);
  std::vector<double> row(k, -s / kd);
  row[c] = s * (1.0 - 1.0 / kd);
  return row;
}

PseudoCoreset init_coreset(const Dataset& data, std::size_t ipc, InitMode mode,
                           std::uint64_t seed, const Hyperparams& hyper) {
  if (ipc == 0) throw ConfigError("init_coreset: ipc must be >= 1");
  const std::size_t k = data.k;
  const std::size_t d = data.dim();
  std::mt19937_64 rng(seed);
  PseudoCoreset c;
  c.ipc = ipc;
  c.hyper = hyper;
  c.labels = Array(ipc * k, k);
  auto lv = c.labels.mutable_values();
  for (std::size_t r = 0; r < ipc * k; ++r) {
    const auto row = init_label_row(r / ipc, k);
    std::copy(row.begin(), row.end(), lv.begin() + static_cast<std::ptrdiff_t>(r * k));
  }

  if (mode == InitMode::sample) {
    std::vector<std::size_t> picked;
    for (std::size_t cls = 0; cls < k; ++cls) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < data.size(); ++i)
        if (static_cast<std::size_t>(data.labels[i]) == cls) members.push_back(i);
      if (members.size() < ipc) {
        throw ConfigError("init_coreset: class " + std::to_string(cls) + " has " +
                          std::to_string(members.size()) + " examples, need " +
                          std::to_string(ipc));
      }
      std::shuffle(members.begin(), members.end(), rng);
      picked.insert(picked.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(ipc));
    }
    c.images = data.rows(picked);
  } else {
    const NormStats stats = data.stats.empty() ? NormStats::identity(d) : data.stats;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    c.images = Array(ipc * k, d);
    auto xv = c.images.mutable_values();
    for (std::size_t r = 0; r < ipc * k; ++r)
      for (std::size_t j = 0; j < d; ++j)
        xv[r * d + j] = (unif(rng) - stats.mean[j]) / stats.std[j];
  }
  return c;
}

void save_coreset(const PseudoCoreset& c, const std::filesystem::path& path) {
  if (c.labels.rows() != c.images.rows()) {
    throw ShapeError("save_coreset: images " + c.images.shape_str() + " vs labels " +
                     c.labels.shape_str());
  }
  LeWriter w;
  for (char ch : {'V', 'B', 'P', 'C'}) w.bytes.push_back(static_cast<unsigned char>(ch));
  w.u32(kCoresetVersion);
  w.u32(static_cast<std::uint32_t>(c.images.rows()));
  w.u32(static_cast<std::uint32_t>(c.images.cols()));
  w.u32(static_cast<std::uint32_t>(c.labels.cols()));
  w.u32(static_cast<std::uint32_t>(c.ipc));
  w.f64(c.hyper.rho);
  w.f64(c.hyper.gamma);
  w.f64(c.hyper.beta_s);
  w.f64(c.hyper.beta_d);
  for (double v : c.images.values()) w.f64(v);
  for (double v : c.labels.values()) w.f64(v);
  w.u32(crc32_of(w.bytes.data(), w.bytes.size()));

  // Write to a sibling temp file first so a failed write never leaves a
  // partial coreset at `path`.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(w.bytes.data()),
              static_cast<std::streamsize>(w.bytes.size()));
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

PseudoCoreset load_coreset(const std::filesystem::path& path) {
  const auto b = read_file(path);
  if (b.size() < kHeaderBytes + 4) {
    throw FormatError(path.string() + ": truncated header (" + std::to_string(b.size()) +
                      " bytes)");
  }
  if (std::memcmp(b.data(), "VBPC", 4) != 0) throw FormatError(path.string() + ": bad magic");
  LeReader r{b, 4};
  const std::uint32_t version = r.u32();
  if (version != kCoresetVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version) +
                      " (reader supports " + std::to_string(kCoresetVersion) + ")");
  }
  const std::size_t n = r.u32();
  const std::size_t d = r.u32();
  const std::size_t k = r.u32();
  const std::size_t ipc = r.u32();
  const std::size_t expected = kHeaderBytes + 8 * (n * d + n * k) + 4;
  require_bytes(path, expected, b.size());
  LeReader tail{b, expected - 4};
  if (tail.u32() != crc32_of(b.data(), expected - 4)) {
    throw FormatError(path.string() + ": checksum mismatch");
  }
  PseudoCoreset c;
  c.ipc = ipc;
  c.hyper.rho = r.f64();
  c.hyper.gamma = r.f64();
  c.hyper.beta_s = r.f64();
  c.hyper.beta_d = r.f64();
  c.images = Array(n, d);
  for (double& v : c.images.mutable_values()) v = r.f64();
  c.labels = Array(n, k);
  for (double& v : c.labels.mutable_values()) v = r.f64();
  if (ipc * k != n) {
    throw FormatError(path.string() + ": n_hat " + std::to_string(n) + " != ipc " +
                      std::to_string(ipc) + " * k " + std::to_string(k));
  }
  return c;
}

std::size_t export_coreset(const PseudoCoreset& c, const NormStats& stats,
                           const std::filesystem::path& dir) {
  const std::size_t d = c.images.cols();
  const std::size_t k = c.classes();
  if (stats.mean.size() != d) {
    throw ShapeError("export: stats for " + std::to_string(stats.mean.size()) +
                     " features, coreset has " + std::to_string(d));
  }
  std::filesystem::create_directories(dir);
  if (d == 2) {
    std::ofstream out(dir / "coreset.csv");
    out << "x,y,label\n";
    out.precision(17);
    for (std::size_t i = 0; i < c.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (c.labels(i, j) > c.labels(i, best)) best = j;
      out << denormalize(stats, 0, c.images(i, 0)) << ',' << denormalize(stats, 1, c.images(i, 1))
          << ',' << best << '\n';
    }
    return 1;
  }
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d))));
  if (side * side != d) {
    throw FormatError("export: d = " + std::to_string(d) + " is neither 2 nor a perfect square");
  }
  const std::size_t ipc = std::max<std::size_t>(c.ipc, 1);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto name = "coreset_" + std::to_string(i / ipc) + "_" + std::to_string(i % ipc) + ".pgm";
    std::ofstream out(dir / name, std::ios::binary);
    out << "P5\n" << side << ' ' << side << "\n255\n";
    for (std::size_t j = 0; j < d; ++j) {
      const double v = std::round(255.0 * denormalize(stats, j, c.images(i, j)));
      out.put(static_cast<char>(static_cast<unsigned char>(std::clamp(v, 0.0, 255.0))));
    }
  }
  return c.size();
}

}  // namespace vbpc
