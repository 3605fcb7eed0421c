// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "vbpc/ndiff/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vbpc::ndiff::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 16;
constexpr std::size_t kSolveChunk = 32;

using idx = std::int64_t;

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n) {
  [[maybe_unused]] const bool par = m * k * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (idx i = 0; i < static_cast<idx>(m); ++i) {
    double* ci = c + i * n;
    std::fill(ci, ci + n, 0.0);
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void transpose(const double* a, double* b, std::size_t m, std::size_t n) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < m; i0 += kBlock) {
    for (std::size_t j0 = 0; j0 < n; j0 += kBlock) {
      const std::size_t i1 = std::min(m, i0 + kBlock);
      const std::size_t j1 = std::min(n, j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) b[j * m + i] = a[i * n + j];
      }
    }
  }
}

// Right-looking factorization A = U^T U on the upper triangle (rows stay
// contiguous), then U^T is written into the lower triangle.
bool cholesky(double* a, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    double* uk = a + k * n;
    const double pivot = uk[k];
    if (!(pivot > 0.0) || !std::isfinite(pivot)) return false;
    const double d = std::sqrt(pivot);
    uk[k] = d;
    for (std::size_t j = k + 1; j < n; ++j) uk[j] /= d;
    const std::size_t rest = n - k - 1;
    [[maybe_unused]] const bool par = rest * rest >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
    for (idx i = static_cast<idx>(k + 1); i < static_cast<idx>(n); ++i) {
      const double uki = uk[i];
      double* ai = a + i * n;
      for (std::size_t j = static_cast<std::size_t>(i); j < n; ++j) ai[j] -= uki * uk[j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      a[j * n + i] = a[i * n + j];
      a[i * n + j] = 0.0;
    }
  }
  return true;
}

namespace {

void solve_columns(const double* l, double* b, std::size_t n, std::size_t m,
                   std::size_t c0, std::size_t c1) {
  for (std::size_t i = 0; i < n; ++i) {
    double* bi = b + i * m;
    const double* li = l + i * n;
    for (std::size_t p = 0; p < i; ++p) {
      const double lip = li[p];
      const double* bp = b + p * m;
      for (std::size_t c = c0; c < c1; ++c) bi[c] -= lip * bp[c];
    }
    const double d = li[i];
    for (std::size_t c = c0; c < c1; ++c) bi[c] /= d;
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double* bi = b + ii * m;
    for (std::size_t p = ii + 1; p < n; ++p) {
      const double lpi = l[p * n + ii];
      const double* bp = b + p * m;
      for (std::size_t c = c0; c < c1; ++c) bi[c] -= lpi * bp[c];
    }
    const double d = l[ii * n + ii];
    for (std::size_t c = c0; c < c1; ++c) bi[c] /= d;
  }
}

}  // namespace

void cholesky_solve(const double* l, double* b, std::size_t n, std::size_t m) {
  const std::size_t chunks = (m + kSolveChunk - 1) / kSolveChunk;
  [[maybe_unused]] const bool par = chunks > 1 && n * n * m >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (idx ch = 0; ch < static_cast<idx>(chunks); ++ch) {
    const std::size_t c0 = static_cast<std::size_t>(ch) * kSolveChunk;
    solve_columns(l, b, n, m, c0, std::min(m, c0 + kSolveChunk));
  }
}

void row_log_softmax(const double* x, double* y, std::size_t rows, std::size_t cols) {
  [[maybe_unused]] const bool par = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (idx r = 0; r < static_cast<idx>(rows); ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(xr[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < cols; ++j) yr[j] = xr[j] - lse;
  }
}

namespace serial {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

// Left-looking Cholesky-Crout; reads the upper triangle like the parallel
// version and subtracts the same terms in the same order.
bool cholesky(double* a, std::size_t n) {
  std::vector<double> l(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double s = a[j * n + j];
    for (std::size_t p = 0; p < j; ++p) s -= l[j * n + p] * l[j * n + p];
    if (!(s > 0.0) || !std::isfinite(s)) return false;
    const double d = std::sqrt(s);
    l[j * n + j] = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double t = a[j * n + i];
      for (std::size_t p = 0; p < j; ++p) t -= l[j * n + p] * l[i * n + p];
      l[i * n + j] = t / d;
    }
  }
  std::copy(l.begin(), l.end(), a);
  return true;
}

void cholesky_solve(const double* l, double* b, std::size_t n, std::size_t m) {
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double v = b[i * m + c];
      for (std::size_t p = 0; p < i; ++p) v -= l[i * n + p] * b[p * m + c];
      b[i * m + c] = v / l[i * n + i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double v = b[ii * m + c];
      for (std::size_t p = ii + 1; p < n; ++p) v -= l[p * n + ii] * b[p * m + c];
      b[ii * m + c] = v / l[ii * n + ii];
    }
  }
}

void row_log_softmax(const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = x[r * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[r * cols + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(x[r * cols + j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] = x[r * cols + j] - lse;
  }
}

}  // namespace serial

}  // namespace vbpc::ndiff::kernels
