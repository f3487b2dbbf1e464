// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "btrnn/btd.hpp"
#include "btrnn/tensor.hpp"

namespace btrnn {

// Dense helpers. `w` is a row-major (rows x cols) matrix tensor.

/// y += W x
template <typename T>
void matvec_accumulate(const Tensor<T>& w, std::span<const T> x, std::span<T> y);

/// x_grad += W^T dy
template <typename T>
void matvec_transposed_accumulate(const Tensor<T>& w, std::span<const T> dy, std::span<T> x_grad);

/// dW += dy x^T (dW is the flat row-major storage of a rows x cols matrix)
template <typename T>
void outer_accumulate(std::span<const T> dy, std::span<const T> x, std::span<T> dw);

/// y = W x + b with W either block-term decomposed or dense (baseline mode).
///
/// The bias is either absent or has exactly one entry per output.
/// Parameter blocks are ordered: weight blocks (BT cores then factors, or
/// the single dense matrix), then the bias if present.
template <typename T>
class BTLinear {
 public:
  static BTLinear block_term(BTDecomposition<T> weight, bool with_bias = true);
  static BTLinear dense(Tensor<T> weight, bool with_bias = true);

  bool is_block_term() const noexcept { return std::holds_alternative<BTDecomposition<T>>(weight_); }
  const BTDecomposition<T>& btd() const { return std::get<BTDecomposition<T>>(weight_); }
  BTDecomposition<T>& btd() { return std::get<BTDecomposition<T>>(weight_); }
  const Tensor<T>& dense_weight() const { return std::get<Tensor<T>>(weight_); }
  Tensor<T>& dense_weight() { return std::get<Tensor<T>>(weight_); }

  bool has_bias() const noexcept { return !bias_.empty(); }
  std::vector<T>& bias() noexcept { return bias_; }
  const std::vector<T>& bias() const noexcept { return bias_; }

  std::size_t input_size() const noexcept { return input_size_; }
  std::size_t output_size() const noexcept { return output_size_; }

  /// Scalars in the weight alone (P_BTD for block-term, I*J for dense).
  std::size_t weight_parameter_count() const noexcept;

  std::vector<std::span<T>> parameters();
  std::vector<std::span<const T>> parameters() const;

  std::vector<T> forward(std::span<const T> x) const;

  /// Adds dL/dparams into `grads` (congruent with parameters()). When
  /// `x_grad` is non-empty, adds W^T dy into it.
  void accumulate_backward(std::span<const T> x, std::span<const T> dy, std::span<const std::span<T>> grads,
                           std::span<T> x_grad) const;

  friend bool operator==(const BTLinear&, const BTLinear&) = default;

 private:
  BTLinear(std::variant<BTDecomposition<T>, Tensor<T>> weight, bool with_bias);

  std::variant<BTDecomposition<T>, Tensor<T>> weight_;
  std::vector<T> bias_;
  std::size_t input_size_;
  std::size_t output_size_;
};

/// Dense copy of a layer: W replaced by reconstruct_dense(W), bias kept.
template <typename T>
BTLinear<T> densified(const BTLinear<T>& layer);

}  // namespace btrnn
