// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vbpc/ndiff/alloc_tracker.hpp"

namespace vbpc::ndiff {

class Tape;

using Buffer = std::vector<double, TrackingAllocator<double>>;
using NodeId = std::size_t;

// Dense row-major matrix of doubles. Copies share the underlying buffer;
// mutable access copies on write and drops any tape handle, so a value that
// was recorded on a tape can never change behind the tape's back.
class Array {
 public:
  Array() = default;
  Array(std::size_t rows, std::size_t cols, double fill = 0.0);
  Array(std::size_t rows, std::size_t cols, std::initializer_list<double> values);

  static Array from(std::size_t rows, std::size_t cols, std::span<const double> values);
  static Array identity(std::size_t n);
  static Array scalar(double v) { return Array(1, 1, v); }
  static Array column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return rows_ * cols_; }
  bool empty() const noexcept { return size() == 0; }
  bool is_scalar() const noexcept { return rows_ == 1 && cols_ == 1; }

  std::span<const double> values() const noexcept {
    return data_ ? std::span<const double>(data_->data(), data_->size())
                 : std::span<const double>();
  }
  const double* data() const noexcept { return data_ ? data_->data() : nullptr; }

  double operator()(std::size_t r, std::size_t c) const noexcept {
    return (*data_)[r * cols_ + c];
  }
  double item() const;

  // Copy-on-write mutable access; detaches from any tape.
  std::span<double> mutable_values();
  double& at(std::size_t r, std::size_t c) { return mutable_values()[r * cols_ + c]; }

  bool tracked() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  NodeId node() const noexcept { return node_; }

  // Same values, no tape handle.
  Array detached() const;

  bool same_shape(const Array& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  std::string shape_str() const;

  // Bitwise equality of shape and values.
  friend bool bit_equal(const Array& a, const Array& b);

 private:
  friend class Tape;

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::shared_ptr<Buffer> data_;
  Tape* tape_ = nullptr;
  NodeId node_ = 0;
};

double frobenius_norm(const Array& a);
// max |a - b| / max(|b|, floor), elementwise.
double max_rel_diff(const Array& a, const Array& b, double floor = 1e-300);
// ||a - b||_F / ||b||_F (or the absolute norm if b is zero).
double rel_frobenius_diff(const Array& a, const Array& b);
bool all_finite(const Array& a);

}  // namespace vbpc::ndiff
