// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace btrnn {

/// Paired factorizations I = I_1*...*I_d and J = J_1*...*J_d.
class FactorizedShape {
 public:
  FactorizedShape(std::vector<std::size_t> input_dims, std::vector<std::size_t> output_dims);

  std::size_t order() const noexcept { return input_dims_.size(); }
  const std::vector<std::size_t>& input_dims() const noexcept { return input_dims_; }
  const std::vector<std::size_t>& output_dims() const noexcept { return output_dims_; }
  std::size_t input_size() const noexcept { return input_size_; }
  std::size_t output_size() const noexcept { return output_size_; }
  std::size_t max_output_dim() const noexcept;

  std::string to_string() const;

  friend bool operator==(const FactorizedShape&, const FactorizedShape&) = default;

 private:
  std::vector<std::size_t> input_dims_;
  std::vector<std::size_t> output_dims_;
  std::size_t input_size_;
  std::size_t output_size_;
};

/// Most balanced factorization of `n` into `d` factors, each >= 2, in
/// non-decreasing order. Among all candidates the tuple minimizing
/// (max - min), then max, then lexicographic order wins, so the result is
/// unique: 64 -> (8,8) for d=2, 4096 -> (8,8,8,8) for d=4, 64 -> (2,2,4,4)
/// for d=4. n == 1 factors as all ones. Returns nullopt when n has fewer than
/// d prime factors.
std::optional<std::vector<std::size_t>> balanced_factorization(std::size_t n, std::size_t d);

/// Equal-split shape for an I x J map, or nullopt if either side is infeasible.
std::optional<FactorizedShape> balanced_shape(std::size_t input_size, std::size_t output_size, std::size_t d);

std::string dims_to_string(const std::vector<std::size_t>& dims, char sep = 'x');

}  // namespace btrnn
