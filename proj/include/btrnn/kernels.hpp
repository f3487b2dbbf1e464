// SPDX-License-Identifier: Apache-2.0
#pragma once

// Low-level contraction kernels. Two implementations share one plan:
//
//   contract_serial    straightforward gather-and-accumulate loop, kept as the
//                      reference and as the instrumented path for MAC counting
//   contract_parallel  packs both operands into contiguous row panels and runs
//                      an OpenMP dot-product sweep over the output
//
// Both sum the contracted indices in the same (row-major) order with a single
// accumulator, so their results are bitwise identical.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "btrnn/tensor.hpp"

namespace btrnn::kernels {

struct ContractionPlan {
  Shape a_shape;
  Shape b_shape;
  // 0-based mode ids.
  std::vector<std::size_t> a_free, a_contracted;
  std::vector<std::size_t> b_free, b_contracted;
  Shape out_shape;
  std::size_t rows = 1;   // product of free A extents
  std::size_t inner = 1;  // product of contracted extents
  std::size_t cols = 1;   // product of free B extents

  std::uint64_t macs() const noexcept {
    return static_cast<std::uint64_t>(rows) * inner * cols;
  }
};

/// Validates and builds a plan. `modes_a`/`modes_b` are 0-based.
ContractionPlan plan_contraction(const Shape& a, const Shape& b, std::span<const std::size_t> modes_a,
                                 std::span<const std::size_t> modes_b);

template <typename T>
void contract_serial(const ContractionPlan& plan, std::span<const T> a, std::span<const T> b, std::span<T> out);

template <typename T>
void contract_parallel(const ContractionPlan& plan, std::span<const T> a, std::span<const T> b,
                       std::span<T> out);

/// Below this many multiply-adds the parallel kernel runs on the calling thread.
inline constexpr std::uint64_t kParallelThreshold = 1u << 15;

/// Thread-local MAC counter bumped once per multiply-add by contract_serial.
/// Null when instrumentation is off.
std::uint64_t*& mac_counter_slot() noexcept;

}  // namespace btrnn::kernels
