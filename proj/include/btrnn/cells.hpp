// SPDX-License-Identifier: Apache-2.0
#pragma once

// Recurrent cells whose input-to-hidden map is a BTLinear (block-term or
// dense). The hidden-to-hidden map U and the bias stay dense.
//
// LSTM, gates concatenated in (f, i, c~, o) order:
//   (f', i', c~', o') = W x_t + U h_{t-1} + b
//   f, i, o = sigmoid(.)     c~ = tanh(.)
//   c_t = f * c_{t-1} + i * c~
//   h_t = o * tanh(c_t)
//
// GRU, gates concatenated in (z, r, n) order:
//   z = sigmoid(W_z x + U_z h_{t-1} + b_z)
//   r = sigmoid(W_r x + U_r h_{t-1} + b_r)
//   n = tanh(W_n x + U_n (r * h_{t-1}) + b_n)
//   h_t = z * h_{t-1} + (1 - z) * n

#include <cstddef>
#include <span>
#include <vector>

#include "btrnn/linear.hpp"
#include "btrnn/tensor.hpp"

namespace btrnn {

template <typename T>
struct CellState {
  std::vector<T> h;
  std::vector<T> c;  // empty for GRU

  friend bool operator==(const CellState&, const CellState&) = default;
};

/// Everything one LSTM step computed; kept for backprop and inspection.
template <typename T>
struct LSTMStepRecord {
  std::vector<T> f, i, g, o;  // activated gates, g = c~
  std::vector<T> c, tanh_c, h;
};

template <typename T>
struct GRUStepRecord {
  std::vector<T> z, r, n;
  std::vector<T> gated_h;  // r * h_{t-1}
  std::vector<T> h;
};

template <typename T>
class LSTMCell {
 public:
  static constexpr std::size_t kGates = 4;
  using Record = LSTMStepRecord<T>;

  /// `recurrent` is (4H x H); `input_map` must produce 4H outputs.
  LSTMCell(BTLinear<T> input_map, Tensor<T> recurrent);

  std::size_t hidden_size() const noexcept { return hidden_; }
  std::size_t input_size() const noexcept { return input_map_.input_size(); }
  const BTLinear<T>& input_map() const noexcept { return input_map_; }
  BTLinear<T>& input_map() noexcept { return input_map_; }
  const Tensor<T>& recurrent() const noexcept { return recurrent_; }
  Tensor<T>& recurrent() noexcept { return recurrent_; }

  CellState<T> initial_state() const;
  CellState<T> step(std::span<const T> x, const CellState<T>& prev) const;
  Record step_record(std::span<const T> x, const CellState<T>& prev) const;

  /// Parameter blocks: input map blocks, then U.
  std::vector<std::span<T>> parameters();
  std::vector<std::span<const T>> parameters() const;

  /// Backprop one step. `dh`/`dc` carry dL/dh_t and dL/dc_t in and are
  /// overwritten with dL/dh_{t-1} and dL/dc_{t-1}.
  void backward_step(std::span<const T> x, const CellState<T>& prev, const Record& rec, std::vector<T>& dh,
                     std::vector<T>& dc, std::span<const std::span<T>> grads) const;

  friend bool operator==(const LSTMCell&, const LSTMCell&) = default;

 private:
  void check(std::span<const T> x, const CellState<T>& prev) const;

  BTLinear<T> input_map_;
  Tensor<T> recurrent_;
  std::size_t hidden_;
};

template <typename T>
class GRUCell {
 public:
  static constexpr std::size_t kGates = 3;
  using Record = GRUStepRecord<T>;

  GRUCell(BTLinear<T> input_map, Tensor<T> recurrent);

  std::size_t hidden_size() const noexcept { return hidden_; }
  std::size_t input_size() const noexcept { return input_map_.input_size(); }
  const BTLinear<T>& input_map() const noexcept { return input_map_; }
  BTLinear<T>& input_map() noexcept { return input_map_; }
  const Tensor<T>& recurrent() const noexcept { return recurrent_; }
  Tensor<T>& recurrent() noexcept { return recurrent_; }

  CellState<T> initial_state() const;
  CellState<T> step(std::span<const T> x, const CellState<T>& prev) const;
  Record step_record(std::span<const T> x, const CellState<T>& prev) const;

  std::vector<std::span<T>> parameters();
  std::vector<std::span<const T>> parameters() const;

  /// `dc` is unused and left empty.
  void backward_step(std::span<const T> x, const CellState<T>& prev, const Record& rec, std::vector<T>& dh,
                     std::vector<T>& dc, std::span<const std::span<T>> grads) const;

  friend bool operator==(const GRUCell&, const GRUCell&) = default;

 private:
  void check(std::span<const T> x, const CellState<T>& prev) const;

  BTLinear<T> input_map_;
  Tensor<T> recurrent_;
  std::size_t hidden_;
};

/// Applies `cell` along the sequence; returns the state after every step.
template <typename Cell, typename T>
std::vector<CellState<T>> unroll(const Cell& cell, std::span<const std::vector<T>> sequence,
                                 const CellState<T>& initial) {
  std::vector<CellState<T>> states;
  states.reserve(sequence.size());
  const CellState<T>* prev = &initial;
  for (const auto& x : sequence) {
    states.push_back(cell.step(x, *prev));
    prev = &states.back();
  }
  return states;
}

template <typename T>
T sigmoid(T v) noexcept;

}  // namespace btrnn
