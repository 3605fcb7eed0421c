// Copyright 2026 The vbpc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstddef>
#include <new>

namespace vbpc::ndiff {

// Counts live f64 elements held by Array buffers. The peak and the largest
// single allocation are the memory evidence used by the naive-vs-efficient
// benchmark and by the "no h*h buffer" assertions.
class AllocTracker {
 public:
  static void on_alloc(std::size_t n) noexcept {
    const std::size_t now = live_.fetch_add(n, std::memory_order_relaxed) + n;
    raise(peak_, now);
    raise(largest_, n);
  }

  static void on_free(std::size_t n) noexcept {
    live_.fetch_sub(n, std::memory_order_relaxed);
  }

  static std::size_t live() noexcept { return live_.load(std::memory_order_relaxed); }
  static std::size_t peak() noexcept { return peak_.load(std::memory_order_relaxed); }
  static std::size_t largest() noexcept {
    return largest_.load(std::memory_order_relaxed);
  }

  // Restarts peak/largest measurement from the current live count.
  static void reset() noexcept {
    peak_.store(live(), std::memory_order_relaxed);
    largest_.store(0, std::memory_order_relaxed);
  }

 private:
  static void raise(std::atomic<std::size_t>& slot, std::size_t v) noexcept {
    std::size_t cur = slot.load(std::memory_order_relaxed);
    while (v > cur && !slot.compare_exchange_weak(cur, v, std::memory_order_relaxed)) {
    }
  }

  static inline std::atomic<std::size_t> live_{0};
  static inline std::atomic<std::size_t> peak_{0};
  static inline std::atomic<std::size_t> largest_{0};
};

// RAII measurement window: resets on entry, reports deltas relative to the
// live count at entry.
class AllocScope {
 public:
  AllocScope() : base_(AllocTracker::live()) { AllocTracker::reset(); }

  std::size_t peak_above_base() const noexcept {
    const std::size_t p = AllocTracker::peak();
    return p > base_ ? p - base_ : 0;
  }
  std::size_t largest() const noexcept { return AllocTracker::largest(); }

 private:
  std::size_t base_;
};

template <class T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    T* p = static_cast<T*>(::operator new(n * sizeof(T)));
    AllocTracker::on_alloc(n);
    return p;
  }

  void deallocate(T* p, std::size_t n) noexcept {
    AllocTracker::on_free(n);
    ::operator delete(p);
  }

  template <class U>
  bool operator==(const TrackingAllocator<U>&) const noexcept {
    return true;
  }
};

}  // namespace vbpc::ndiff
