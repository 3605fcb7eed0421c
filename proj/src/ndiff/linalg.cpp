// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "vbpc/ndiff/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "vbpc/error.hpp"
#include "vbpc/ndiff/kernels.hpp"

namespace vbpc::ndiff {

namespace {

void require_square(const Array& a, const char* what) {
  if (a.rows() != a.cols() || a.empty()) {
    throw ShapeError(std::string(what) + ": expected a non-empty square matrix, got " +
                     a.shape_str());
  }
}

Array factor_with_jitter(Array work) {
  const std::size_t n = work.rows();
  Array first = work;
  auto fv = first.mutable_values();
  if (kernels::cholesky(fv.data(), n)) return first;

  double mean_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_diag += work(i, i);
  mean_diag /= static_cast<double>(n);
  const double jitter = 1e-10 * std::abs(mean_diag);
  auto wv = work.mutable_values();
  for (std::size_t i = 0; i < n; ++i) wv[i * n + i] += jitter;
  if (jitter > 0.0 && kernels::cholesky(wv.data(), n)) return work;
  throw NotSpdError("matrix of shape " + std::to_string(n) + "x" + std::to_string(n) +
                    " is not positive definite");
}

}  // namespace

Array cholesky_spd(const Array& a) {
  require_square(a, "cholesky_spd");
  const std::size_t n = a.rows();
  double scale = 0.0;
  for (double v : a.values()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(a(i, j) - a(j, i)) > 1e-12 * scale) {
        throw NotSpdError("cholesky_spd: matrix is not symmetric at (" + std::to_string(i) +
                          "," + std::to_string(j) + ")");
      }
    }
  }
  if (!all_finite(a)) throw NonFiniteError("cholesky_spd: non-finite input");
  return factor_with_jitter(a.detached());
}

Array cholesky_sym_part(const Array& a) {
  require_square(a, "cholesky_solve_spd");
  const std::size_t n = a.rows();
  Array s(n, n);
  auto sv = s.mutable_values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) sv[i * n + j] = 0.5 * (a(i, j) + a(j, i));
  }
  return factor_with_jitter(std::move(s));
}

Array solve_with_factor(const Array& l, const Array& b) {
  if (l.rows() != b.rows()) {
    throw ShapeError("solve: factor " + l.shape_str() + " vs rhs " + b.shape_str());
  }
  Array x = b.detached();
  auto xv = x.mutable_values();
  kernels::cholesky_solve(l.data(), xv.data(), l.rows(), b.cols());
  return x;
}

double logdet_from_factor(const Array& l) {
  double s = 0.0;
  for (std::size_t i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

std::vector<double> sym_eigenvalues(const Array& a) {
  require_square(a, "sym_eigenvalues");
  const std::size_t n = a.rows();
  std::vector<double> m(a.values().begin(), a.values().end());
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      diag += m[i * n + i] * m[i * n + i];
      for (std::size_t j = i + 1; j < n; ++j) off += m[i * n + j] * m[i * n + j];
    }
    if (off <= 1e-34 * diag || off == 0.0) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
        const double t =
            std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = m[k * n + p];
          const double akq = m[k * n + q];
          m[k * n + p] = c * akp - s * akq;
          m[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = m[p * n + k];
          const double aqk = m[q * n + k];
          m[p * n + k] = c * apk - s * aqk;
          m[q * n + k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = m[i * n + i];
  std::sort(ev.begin(), ev.end());
  return ev;
}

}  // namespace vbpc::ndiff
