// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "btrnn/tensor.hpp"

namespace btrnn {

/// 1-based mode position within a tensor's shape.
struct Mode {
  std::size_t k;
  friend bool operator==(Mode, Mode) = default;
};

enum class Backend { parallel, serial };

/// Backend used by contractions issued from the calling thread.
Backend current_backend() noexcept;

class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) noexcept;
  ~ScopedBackend();
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend saved_;
};

/// Counts every multiply-add executed by contractions on this thread while in
/// scope. Forces the serial kernel, which is the instrumented one. Scopes nest;
/// the innermost one receives the counts.
class ScopedMacCounter {
 public:
  ScopedMacCounter() noexcept;
  ~ScopedMacCounter();
  ScopedMacCounter(const ScopedMacCounter&) = delete;
  ScopedMacCounter& operator=(const ScopedMacCounter&) = delete;

  std::uint64_t count() const noexcept { return count_; }

 private:
  std::uint64_t count_ = 0;
  std::uint64_t* saved_slot_;
  ScopedBackend serial_;
};

/// Product over one matched mode. Output modes: surviving A modes in order,
/// then surviving B modes in order.
template <typename T>
Tensor<T> mode_product(const Tensor<T>& a, const Tensor<T>& b, Mode ka, Mode kb);

/// Simultaneous contraction over every listed mode pair. Empty lists give the
/// outer product.
template <typename T>
Tensor<T> contract(const Tensor<T>& a, const Tensor<T>& b, std::span<const Mode> modes_a,
                   std::span<const Mode> modes_b);

template <typename T>
Tensor<T> contract(const Tensor<T>& a, const Tensor<T>& b, std::initializer_list<Mode> modes_a,
                   std::initializer_list<Mode> modes_b) {
  return contract(a, b, std::span<const Mode>(modes_a.begin(), modes_a.size()),
                  std::span<const Mode>(modes_b.begin(), modes_b.size()));
}

}  // namespace btrnn
