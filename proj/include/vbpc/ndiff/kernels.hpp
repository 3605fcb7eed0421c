// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

// Dense kernels behind the Array primitives. The top-level functions are
// OpenMP-parallel; `serial::` holds the plain reference versions used by the
// kernel tests and the kernel benchmark. Both produce bit-identical results:
// every output element is accumulated in the same order regardless of the
// thread count.
namespace vbpc::ndiff::kernels {

// c (m x n) = a (m x k) * b (k x n), all row-major, c overwritten.
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n);

// b (n x m) = a^T for a (m x n).
void transpose(const double* a, double* b, std::size_t m, std::size_t n);

// In-place Cholesky of the n x n symmetric matrix in `a` (only the upper
// triangle is read). On success `a` holds the lower factor L with zeros above
// the diagonal. Returns false if a non-positive pivot is met.
bool cholesky(double* a, std::size_t n);

// Solves (L L^T) X = B in place; b is n x m row-major, l the lower factor.
void cholesky_solve(const double* l, double* b, std::size_t n, std::size_t m);

// y_i = x_i - logsumexp(x_i) for each row.
void row_log_softmax(const double* x, double* y, std::size_t rows, std::size_t cols);

namespace serial {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n);
bool cholesky(double* a, std::size_t n);
void cholesky_solve(const double* l, double* b, std::size_t n, std::size_t m);
void row_log_softmax(const double* x, double* y, std::size_t rows, std::size_t cols);

}  // namespace serial

// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace vbpc::ndiff::kernels
