// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "btrnn/shape.hpp"
#include "btrnn/tensor.hpp"

namespace btrnn {

/// Block-term decomposed weight W (J x I).
///
/// W is viewed as a 2d-order tensor and represented as a sum of N Tucker
/// terms. Term n has one core G_n of shape (R,...,R) with d modes and one
/// factor A_n^(k) of shape (I_k, J_k, R) per mode k:
///
///   W[j, i] = sum_n sum_{r_1..r_d} G_n[r_1..r_d] * prod_k A_n^(k)[i_k, j_k, r_k]
///
/// where (i_1..i_d) and (j_1..j_d) are the row-major digits of i and j.
/// The Tucker rank R is shared by all modes.
template <typename T>
class BTDecomposition {
 public:
  /// All-zero decomposition.
  BTDecomposition(FactorizedShape shape, std::size_t cp_rank, std::size_t tucker_rank);

  const FactorizedShape& shape() const noexcept { return shape_; }
  std::size_t order() const noexcept { return shape_.order(); }
  std::size_t cp_rank() const noexcept { return cp_rank_; }
  std::size_t tucker_rank() const noexcept { return tucker_rank_; }
  std::size_t input_size() const noexcept { return shape_.input_size(); }
  std::size_t output_size() const noexcept { return shape_.output_size(); }

  /// 0-based term index n and mode index k.
  Tensor<T>& core(std::size_t n) { return cores_.at(n); }
  const Tensor<T>& core(std::size_t n) const { return cores_.at(n); }
  Tensor<T>& factor(std::size_t n, std::size_t k) { return factors_.at(n * order() + k); }
  const Tensor<T>& factor(std::size_t n, std::size_t k) const { return factors_.at(n * order() + k); }

  /// Number of stored scalars.
  std::size_t stored_scalars() const noexcept;

  /// Views over every parameter block: cores 0..N-1, then factors in (n, k)
  /// order. Gradients use the same ordering.
  std::vector<std::span<T>> parameters();
  std::vector<std::span<const T>> parameters() const;

  /// Single-term sub-model holding a copy of term n.
  BTDecomposition term(std::size_t n) const;

  friend bool operator==(const BTDecomposition&, const BTDecomposition&) = default;

 private:
  FactorizedShape shape_;
  std::size_t cp_rank_;
  std::size_t tucker_rank_;
  std::vector<Tensor<T>> cores_;
  std::vector<Tensor<T>> factors_;
};

template <typename T>
struct BTGradients {
  std::vector<Tensor<T>> d_cores;
  std::vector<Tensor<T>> d_factors;  // (n, k) order, like BTDecomposition
  std::vector<T> d_input;
};

/// N * (sum_k I_k J_k R + R^d).
std::uint64_t param_count(const FactorizedShape& shape, std::size_t cp_rank, std::size_t tucker_rank);

/// One message per mode k where R > min(I_k, J_k). Such ranks are allowed.
std::vector<std::string> validate_ranks(const FactorizedShape& shape, std::size_t tucker_rank);

/// Gaussian initialization. Cores have variance 1/(N R^d) and factors
/// variance (2/(I+J))^(1/d), so the entries of the reconstructed W have
/// variance 2/(I+J).
template <typename T>
BTDecomposition<T> init_btd(const FactorizedShape& shape, std::size_t cp_rank, std::size_t tucker_rank,
                            std::uint64_t seed);

/// Dense J x I matrix. Materializes each term core-first, one factor at a time.
template <typename T>
Tensor<T> reconstruct_dense(const BTDecomposition<T>& btd);

/// y = W x through the reordered schedule: tensorize x, contract it with
/// A_n^(1), ..., A_n^(d) along the input modes, then with G_n over all rank
/// modes, and sum over n.
template <typename T>
std::vector<T> forward(const BTDecomposition<T>& btd, std::span<const T> x);

/// y = W x by materializing each dense term core-first and then applying it.
template <typename T>
std::vector<T> forward_naive(const BTDecomposition<T>& btd, std::span<const T> x);

template <typename T>
BTGradients<T> zero_gradients(const BTDecomposition<T>& btd, bool with_input = true);

/// Gradients of L with upstream dL/dy = dy. d_input is W^T dy.
template <typename T>
BTGradients<T> backward(const BTDecomposition<T>& btd, std::span<const T> x, std::span<const T> dy);

/// Adds the gradients for one (x, dy) pair into `grads`. d_input is only
/// touched when `want_input` is set (it must then have length I).
template <typename T>
void accumulate_backward(const BTDecomposition<T>& btd, std::span<const T> x, std::span<const T> dy,
                         BTGradients<T>& grads, bool want_input);

/// Multiply-add counts of the reordered forward, split into the factor
/// sweep and the final core contraction.
struct ForwardFlops {
  std::uint64_t factor_stage = 0;
  std::uint64_t core_stage = 0;
  std::uint64_t total() const noexcept { return factor_stage + core_stage; }
};

ForwardFlops forward_flops_breakdown(const FactorizedShape& shape, std::size_t cp_rank, std::size_t tucker_rank);

/// Exact multiply-add count of `forward`:
///   N * ( sum_k (I_k ... I_d) (J_1 ... J_k) R^k  +  J R^d ).
std::uint64_t flops_forward(const FactorizedShape& shape, std::size_t cp_rank, std::size_t tucker_rank);

/// Exact multiply-add count of `forward_naive`:
///   N * ( sum_k R^(d-k+1) (I_1 J_1 ... I_k J_k)  +  I J ).
std::uint64_t flops_naive(const FactorizedShape& shape, std::size_t cp_rank, std::size_t tucker_rank);

}  // namespace btrnn
