// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "vbpc/ndiff/array.hpp"

namespace vbpc::ndiff {

// Lower Cholesky factor of a symmetric positive definite matrix. Requires
// symmetry within 1e-12 relative to the largest entry. On failure the
// factorization is retried once with 1e-10 * mean(diag) added to the
// diagonal; a second failure throws NotSpdError.
Array cholesky_spd(const Array& a);

// Factor of (A + A^T)/2 under the same jitter policy, without the symmetry
// check. Used by the tape primitives.
Array cholesky_sym_part(const Array& a);

// Solves (L L^T) X = B given the lower factor.
Array solve_with_factor(const Array& l, const Array& b);

// log det(L L^T) = 2 sum log diag(L).
double logdet_from_factor(const Array& l);

// Eigenvalues of a symmetric matrix in ascending order (cyclic Jacobi).
std::vector<double> sym_eigenvalues(const Array& a);

}  // namespace vbpc::ndiff
