// SPDX-License-Identifier: Apache-2.0
#include "btrnn/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <string>

namespace btrnn::kernels {

std::uint64_t*& mac_counter_slot() noexcept {
  thread_local std::uint64_t* slot = nullptr;
  return slot;
}

ContractionPlan plan_contraction(const Shape& a, const Shape& b, std::span<const std::size_t> modes_a,
                                 std::span<const std::size_t> modes_b) {
  if (modes_a.size() != modes_b.size()) {
    throw DimensionMismatch("contract: mode lists have different lengths");
  }
  ContractionPlan plan;
  plan.a_shape = a;
  plan.b_shape = b;

  auto mark = [](const Shape& shape, std::span<const std::size_t> modes, const char* which) {
    std::vector<bool> used(shape.size(), false);
    for (auto m : modes) {
      if (m >= shape.size()) {
        throw std::out_of_range(std::string("contract: mode out of range for operand ") + which);
      }
      if (used[m]) throw DuplicateMode(std::string("contract: repeated mode in operand ") + which);
      used[m] = true;
    }
    return used;
  };
  const auto used_a = mark(a, modes_a, "A");
  const auto used_b = mark(b, modes_b, "B");

  for (std::size_t p = 0; p < modes_a.size(); ++p) {
    if (a[modes_a[p]] != b[modes_b[p]]) {
      throw DimensionMismatch("contract: mode A" + std::to_string(modes_a[p] + 1) + " has size " +
                              std::to_string(a[modes_a[p]]) + " but mode B" + std::to_string(modes_b[p] + 1) +
                              " has size " + std::to_string(b[modes_b[p]]));
    }
    plan.inner *= a[modes_a[p]];
  }
  plan.a_contracted.assign(modes_a.begin(), modes_a.end());
  plan.b_contracted.assign(modes_b.begin(), modes_b.end());

  for (std::size_t m = 0; m < a.size(); ++m) {
    if (!used_a[m]) {
      plan.a_free.push_back(m);
      plan.out_shape.push_back(a[m]);
      plan.rows *= a[m];
    }
  }
  for (std::size_t m = 0; m < b.size(); ++m) {
    if (!used_b[m]) {
      plan.b_free.push_back(m);
      plan.out_shape.push_back(b[m]);
      plan.cols *= b[m];
    }
  }
  return plan;
}

namespace {

// Offsets (into the operand's flat storage) of every multi-index over `modes`,
// enumerated in row-major order of the listed modes.
std::vector<std::size_t> offset_table(const Shape& shape, const std::vector<std::size_t>& modes) {
  const auto strides = row_major_strides(shape);
  std::size_t count = 1;
  for (auto m : modes) count *= shape[m];
  std::vector<std::size_t> table(count, 0);
  std::vector<std::size_t> idx(modes.size(), 0);
  std::size_t off = 0;
  for (std::size_t n = 0; n < count; ++n) {
    table[n] = off;
    for (std::size_t q = modes.size(); q-- > 0;) {
      const auto m = modes[q];
      if (++idx[q] < shape[m]) {
        off += strides[m];
        break;
      }
      off -= strides[m] * (shape[m] - 1);
      idx[q] = 0;
    }
  }
  return table;
}

bool is_leading_block(const std::vector<std::size_t>& first, const std::vector<std::size_t>& second) {
  std::size_t expect = 0;
  for (auto m : first) {
    if (m != expect++) return false;
  }
  for (auto m : second) {
    if (m != expect++) return false;
  }
  return true;
}

}  // namespace

template <typename T>
void contract_serial(const ContractionPlan& plan, std::span<const T> a, std::span<const T> b, std::span<T> out) {
  const auto fa = offset_table(plan.a_shape, plan.a_free);
  const auto ca = offset_table(plan.a_shape, plan.a_contracted);
  const auto fb = offset_table(plan.b_shape, plan.b_free);
  const auto cb = offset_table(plan.b_shape, plan.b_contracted);
  std::uint64_t* counter = mac_counter_slot();

  for (std::size_t i = 0; i < plan.rows; ++i) {
    for (std::size_t j = 0; j < plan.cols; ++j) {
      T acc{0};
      for (std::size_t p = 0; p < plan.inner; ++p) {
        acc += a[fa[i] + ca[p]] * b[fb[j] + cb[p]];
        if (counter) ++*counter;
      }
      out[i * plan.cols + j] = acc;
    }
  }
}

template <typename T>
void contract_parallel(const ContractionPlan& plan, std::span<const T> a, std::span<const T> b,
                       std::span<T> out) {
  const std::size_t rows = plan.rows, inner = plan.inner, cols = plan.cols;

  // A panel: rows x inner; B panel: inner x cols. Skip the copy when the
  // operand already has that layout.
  std::vector<T> a_pack, b_pack;
  const T* ap = a.data();
  const T* bp = b.data();
  if (!is_leading_block(plan.a_free, plan.a_contracted)) {
    const auto fa = offset_table(plan.a_shape, plan.a_free);
    const auto ca = offset_table(plan.a_shape, plan.a_contracted);
    a_pack.resize(rows * inner);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t p = 0; p < inner; ++p) a_pack[i * inner + p] = a[fa[i] + ca[p]];
    ap = a_pack.data();
  }
  if (!is_leading_block(plan.b_contracted, plan.b_free)) {
    const auto fb = offset_table(plan.b_shape, plan.b_free);
    const auto cb = offset_table(plan.b_shape, plan.b_contracted);
    b_pack.resize(inner * cols);
    for (std::size_t p = 0; p < inner; ++p)
      for (std::size_t j = 0; j < cols; ++j) b_pack[p * cols + j] = b[fb[j] + cb[p]];
    bp = b_pack.data();
  }

  // Row-times-panel updates, c[i, :] += a[i, p] * b[p, :] for p ascending.
  // Every output still sums its products in p order starting from zero,
  // exactly like contract_serial, so both kernels agree bit for bit.
  constexpr std::size_t kTile = 256;
  const std::size_t tiles = (cols + kTile - 1) / kTile;
  const bool go_parallel = plan.macs() >= kParallelThreshold && !omp_in_parallel() && omp_get_max_threads() > 1;
  T* dst = out.data();
  const auto run_task = [&](std::size_t task) {
    const std::size_t i = task / tiles;
    const std::size_t j0 = (task % tiles) * kTile;
    const std::size_t width = std::min(kTile, cols - j0);
    const T* ar = ap + i * inner;
    T* __restrict crow = dst + i * cols + j0;
    std::fill(crow, crow + width, T{0});
    for (std::size_t p = 0; p < inner; ++p) {
      const T av = ar[p];
      const T* __restrict brow = bp + p * cols + j0;
      for (std::size_t j = 0; j < width; ++j) crow[j] += av * brow[j];
    }
  };
  const std::size_t total = rows * tiles;
  if (!go_parallel) {
    for (std::size_t task = 0; task < total; ++task) run_task(task);
    return;
  }
  const auto n = static_cast<std::ptrdiff_t>(total);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t task = 0; task < n; ++task) run_task(static_cast<std::size_t>(task));
}

template void contract_serial(const ContractionPlan&, std::span<const float>, std::span<const float>,
                              std::span<float>);
template void contract_serial(const ContractionPlan&, std::span<const double>, std::span<const double>,
                              std::span<double>);
template void contract_parallel(const ContractionPlan&, std::span<const float>, std::span<const float>,
                                std::span<float>);
template void contract_parallel(const ContractionPlan&, std::span<const double>, std::span<const double>,
                                std::span<double>);

}  // namespace btrnn::kernels
