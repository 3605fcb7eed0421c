// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#include "vbpc/ndiff/array.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "vbpc/error.hpp"

namespace vbpc::ndiff {

Array::Array(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols) {
  if (rows * cols > 0) data_ = std::make_shared<Buffer>(rows * cols, fill);
}

Array::Array(std::size_t rows, std::size_t cols, std::initializer_list<double> values)
    : Array(rows, cols) {
  if (values.size() != rows * cols) {
    throw ShapeError("initializer has " + std::to_string(values.size()) +
                     " values for shape " + shape_str());
  }
  if (data_) std::copy(values.begin(), values.end(), data_->begin());
}

Array Array::from(std::size_t rows, std::size_t cols, std::span<const double> values) {
  if (values.size() != rows * cols) {
    throw ShapeError("buffer of " + std::to_string(values.size()) + " values for shape " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  Array out(rows, cols);
  if (!values.empty()) std::memcpy(out.data_->data(), values.data(), values.size_bytes());
  return out;
}

Array Array::identity(std::size_t n) {
  Array out(n, n);
  for (std::size_t i = 0; i < n; ++i) (*out.data_)[i * n + i] = 1.0;
  return out;
}

Array Array::column(std::span<const double> values) {
  return from(values.size(), 1, values);
}

double Array::item() const {
  if (!is_scalar()) throw ShapeError("item() on non-scalar array " + shape_str());
  return (*data_)[0];
}

std::span<double> Array::mutable_values() {
  tape_ = nullptr;
  node_ = 0;
  if (!data_) return {};
  if (data_.use_count() > 1) data_ = std::make_shared<Buffer>(*data_);
  return {data_->data(), data_->size()};
}

Array Array::detached() const {
  Array out = *this;
  out.tape_ = nullptr;
  out.node_ = 0;
  return out;
}

std::string Array::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool bit_equal(const Array& a, const Array& b) {
  if (!a.same_shape(b)) return false;
  if (a.empty()) return true;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

double frobenius_norm(const Array& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

double max_rel_diff(const Array& a, const Array& b, double floor) {
  if (!a.same_shape(b)) throw ShapeError("max_rel_diff shape mismatch");
  double worst = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = std::abs(av[i] - bv[i]) / std::max(std::abs(bv[i]), floor);
    worst = std::max(worst, d);
  }
  return worst;
}

double rel_frobenius_diff(const Array& a, const Array& b) {
  if (!a.same_shape(b)) throw ShapeError("rel_frobenius_diff shape mismatch");
  double num = 0.0;
  double den = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    num += (av[i] - bv[i]) * (av[i] - bv[i]);
    den += bv[i] * bv[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

bool all_finite(const Array& a) {
  for (double v : a.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace vbpc::ndiff
