// SPDX-License-Identifier: Apache-2.0
#include "btrnn/shape.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <tuple>

#include "btrnn/errors.hpp"

namespace btrnn {

FactorizedShape::FactorizedShape(std::vector<std::size_t> input_dims, std::vector<std::size_t> output_dims)
    : input_dims_(std::move(input_dims)), output_dims_(std::move(output_dims)) {
  if (input_dims_.empty()) throw DimensionMismatch("factorized shape needs at least one mode");
  if (input_dims_.size() != output_dims_.size()) {
    throw DimensionMismatch("input and output factorizations have different orders");
  }
  auto positive = [](std::size_t v) { return v >= 1; };
  if (!std::all_of(input_dims_.begin(), input_dims_.end(), positive) ||
      !std::all_of(output_dims_.begin(), output_dims_.end(), positive)) {
    throw ShapeMismatch("factorized mode sizes must be >= 1");
  }
  input_size_ = std::accumulate(input_dims_.begin(), input_dims_.end(), std::size_t{1}, std::multiplies<>());
  output_size_ = std::accumulate(output_dims_.begin(), output_dims_.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t FactorizedShape::max_output_dim() const noexcept {
  return *std::max_element(output_dims_.begin(), output_dims_.end());
}

std::string FactorizedShape::to_string() const {
  return dims_to_string(input_dims_) + "/" + dims_to_string(output_dims_);
}

std::string dims_to_string(const std::vector<std::size_t>& dims, char sep) {
  std::string s;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (k) s += sep;
    s += std::to_string(dims[k]);
  }
  return s;
}

namespace {

void enumerate(std::size_t n, std::size_t d, std::size_t min_factor, std::vector<std::size_t>& prefix,
               const std::function<void(const std::vector<std::size_t>&)>& emit) {
  if (d == 1) {
    if (n >= min_factor) {
      prefix.push_back(n);
      emit(prefix);
      prefix.pop_back();
    }
    return;
  }
  // Remaining d factors are all >= f, so f^d <= n.
  for (std::size_t f = min_factor; f <= n; ++f) {
    std::size_t pow = 1;
    bool too_big = false;
    for (std::size_t k = 0; k < d; ++k) {
      pow *= f;
      if (pow > n) {
        too_big = true;
        break;
      }
    }
    if (too_big) break;
    if (n % f) continue;
    prefix.push_back(f);
    enumerate(n / f, d - 1, f, prefix, emit);
    prefix.pop_back();
  }
}

}  // namespace

std::optional<std::vector<std::size_t>> balanced_factorization(std::size_t n, std::size_t d) {
  if (d == 0 || n == 0) return std::nullopt;
  if (n == 1) return std::vector<std::size_t>(d, 1);
  std::optional<std::vector<std::size_t>> best;
  auto key = [](const std::vector<std::size_t>& t) { return std::make_tuple(t.back() - t.front(), t.back()); };
  std::vector<std::size_t> prefix;
  enumerate(n, d, 2, prefix, [&](const std::vector<std::size_t>& t) {
    if (!best || key(t) < key(*best) || (key(t) == key(*best) && t < *best)) best = t;
  });
  return best;
}

std::optional<FactorizedShape> balanced_shape(std::size_t input_size, std::size_t output_size, std::size_t d) {
  auto in = balanced_factorization(input_size, d);
  auto out = balanced_factorization(output_size, d);
  if (!in || !out) return std::nullopt;
  return FactorizedShape(*in, *out);
}

}  // namespace btrnn
