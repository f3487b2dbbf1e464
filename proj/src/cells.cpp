// SPDX-License-Identifier: Apache-2.0
#include "btrnn/cells.hpp"

#include <cmath>

#include "btrnn/errors.hpp"

namespace btrnn {

template <typename T>
T sigmoid(T v) noexcept {
  if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
  const T e = std::exp(v);
  return e / (T{1} + e);
}

namespace {

// y[0..rows) += U[row0 .. row0+rows) * x
template <typename T>
void block_matvec(const Tensor<T>& u, std::size_t row0, std::size_t rows, std::span<const T> x, T* y) {
  const std::size_t cols = u.shape()[1];
  const T* a = u.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = a + (row0 + r) * cols;
    T acc{0};
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

// x_grad += U[row0 .. row0+rows)^T dy ; dU[row0 .. row0+rows) += dy x^T
template <typename T>
void block_backward(const Tensor<T>& u, std::size_t row0, std::size_t rows, std::span<const T> x, const T* dy,
                    std::span<T> du, std::span<T> x_grad) {
  const std::size_t cols = u.shape()[1];
  const T* a = u.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T g = dy[r];
    const T* row = a + (row0 + r) * cols;
    T* drow = du.data() + (row0 + r) * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      drow[c] += g * x[c];
      x_grad[c] += row[c] * g;
    }
  }
}

template <typename T>
std::size_t check_recurrent(const BTLinear<T>& input_map, const Tensor<T>& recurrent, std::size_t gates) {
  if (recurrent.order() != 2) throw DimensionMismatch("recurrent weight must be a matrix");
  const std::size_t hidden = recurrent.shape()[1];
  if (recurrent.shape()[0] != gates * hidden) {
    throw DimensionMismatch("recurrent weight must have " + std::to_string(gates) + "H rows");
  }
  if (input_map.output_size() != gates * hidden) {
    throw DimensionMismatch("input map must produce " + std::to_string(gates) + "H = " +
                            std::to_string(gates * hidden) + " outputs, got " +
                            std::to_string(input_map.output_size()));
  }
  return hidden;
}

template <typename T>
std::vector<std::span<T>> with_recurrent(std::vector<std::span<T>> blocks, std::span<T> u) {
  blocks.push_back(u);
  return blocks;
}

}  // namespace

// ---------------------------------------------------------------------------
// LSTM

template <typename T>
LSTMCell<T>::LSTMCell(BTLinear<T> input_map, Tensor<T> recurrent)
    : input_map_(std::move(input_map)), recurrent_(std::move(recurrent)) {
  hidden_ = check_recurrent(input_map_, recurrent_, kGates);
}

template <typename T>
void LSTMCell<T>::check(std::span<const T> x, const CellState<T>& prev) const {
  if (x.size() != input_size()) throw DimensionMismatch("lstm: input has wrong length");
  if (prev.h.size() != hidden_ || prev.c.size() != hidden_) throw DimensionMismatch("lstm: state has wrong size");
}

template <typename T>
CellState<T> LSTMCell<T>::initial_state() const {
  return {std::vector<T>(hidden_, T{0}), std::vector<T>(hidden_, T{0})};
}

template <typename T>
LSTMStepRecord<T> LSTMCell<T>::step_record(std::span<const T> x, const CellState<T>& prev) const {
  check(x, prev);
  const std::size_t H = hidden_;
  auto a = input_map_.forward(x);
  block_matvec<T>(recurrent_, 0, kGates * H, prev.h, a.data());

  Record rec;
  rec.f.resize(H);
  rec.i.resize(H);
  rec.g.resize(H);
  rec.o.resize(H);
  rec.c.resize(H);
  rec.tanh_c.resize(H);
  rec.h.resize(H);
  for (std::size_t j = 0; j < H; ++j) {
    rec.f[j] = sigmoid(a[j]);
    rec.i[j] = sigmoid(a[H + j]);
    rec.g[j] = std::tanh(a[2 * H + j]);
    rec.o[j] = sigmoid(a[3 * H + j]);
    rec.c[j] = rec.f[j] * prev.c[j] + rec.i[j] * rec.g[j];
    rec.tanh_c[j] = std::tanh(rec.c[j]);
    rec.h[j] = rec.o[j] * rec.tanh_c[j];
  }
  return rec;
}

template <typename T>
CellState<T> LSTMCell<T>::step(std::span<const T> x, const CellState<T>& prev) const {
  auto rec = step_record(x, prev);
  return {std::move(rec.h), std::move(rec.c)};
}

template <typename T>
std::vector<std::span<T>> LSTMCell<T>::parameters() {
  return with_recurrent<T>(input_map_.parameters(), recurrent_.data());
}

template <typename T>
std::vector<std::span<const T>> LSTMCell<T>::parameters() const {
  return with_recurrent<const T>(input_map_.parameters(), recurrent_.data());
}

template <typename T>
void LSTMCell<T>::backward_step(std::span<const T> x, const CellState<T>& prev, const Record& rec,
                                std::vector<T>& dh, std::vector<T>& dc, std::span<const std::span<T>> grads) const {
  const std::size_t H = hidden_;
  std::vector<T> da(kGates * H);
  for (std::size_t j = 0; j < H; ++j) {
    const T f = rec.f[j], i = rec.i[j], g = rec.g[j], o = rec.o[j], tc = rec.tanh_c[j];
    const T d_o = dh[j] * tc;
    const T d_c = dc[j] + dh[j] * o * (T{1} - tc * tc);
    da[j] = d_c * prev.c[j] * f * (T{1} - f);
    da[H + j] = d_c * g * i * (T{1} - i);
    da[2 * H + j] = d_c * i * (T{1} - g * g);
    da[3 * H + j] = d_o * o * (T{1} - o);
    dc[j] = d_c * f;
  }
  const std::size_t map_blocks = grads.size() - 1;
  std::vector<T> dh_prev(H, T{0});
  block_backward<T>(recurrent_, 0, kGates * H, prev.h, da.data(), grads[map_blocks], dh_prev);
  input_map_.accumulate_backward(x, da, grads.first(map_blocks), {});
  dh = std::move(dh_prev);
}

// ---------------------------------------------------------------------------
// GRU

template <typename T>
GRUCell<T>::GRUCell(BTLinear<T> input_map, Tensor<T> recurrent)
    : input_map_(std::move(input_map)), recurrent_(std::move(recurrent)) {
  hidden_ = check_recurrent(input_map_, recurrent_, kGates);
}

template <typename T>
void GRUCell<T>::check(std::span<const T> x, const CellState<T>& prev) const {
  if (x.size() != input_size()) throw DimensionMismatch("gru: input has wrong length");
  if (prev.h.size() != hidden_) throw DimensionMismatch("gru: state has wrong size");
}

template <typename T>
CellState<T> GRUCell<T>::initial_state() const {
  return {std::vector<T>(hidden_, T{0}), {}};
}

template <typename T>
GRUStepRecord<T> GRUCell<T>::step_record(std::span<const T> x, const CellState<T>& prev) const {
  check(x, prev);
  const std::size_t H = hidden_;
  auto a = input_map_.forward(x);
  block_matvec<T>(recurrent_, 0, 2 * H, prev.h, a.data());

  Record rec;
  rec.z.resize(H);
  rec.r.resize(H);
  rec.n.resize(H);
  rec.gated_h.resize(H);
  rec.h.resize(H);
  for (std::size_t j = 0; j < H; ++j) {
    rec.z[j] = sigmoid(a[j]);
    rec.r[j] = sigmoid(a[H + j]);
    rec.gated_h[j] = rec.r[j] * prev.h[j];
  }
  block_matvec<T>(recurrent_, 2 * H, H, rec.gated_h, a.data() + 2 * H);
  for (std::size_t j = 0; j < H; ++j) {
    rec.n[j] = std::tanh(a[2 * H + j]);
    rec.h[j] = rec.z[j] * prev.h[j] + (T{1} - rec.z[j]) * rec.n[j];
  }
  return rec;
}

template <typename T>
CellState<T> GRUCell<T>::step(std::span<const T> x, const CellState<T>& prev) const {
  auto rec = step_record(x, prev);
  return {std::move(rec.h), {}};
}

template <typename T>
std::vector<std::span<T>> GRUCell<T>::parameters() {
  return with_recurrent<T>(input_map_.parameters(), recurrent_.data());
}

template <typename T>
std::vector<std::span<const T>> GRUCell<T>::parameters() const {
  return with_recurrent<const T>(input_map_.parameters(), recurrent_.data());
}

template <typename T>
void GRUCell<T>::backward_step(std::span<const T> x, const CellState<T>& prev, const Record& rec,
                               std::vector<T>& dh, std::vector<T>& /*dc*/,
                               std::span<const std::span<T>> grads) const {
  const std::size_t H = hidden_;
  const std::size_t map_blocks = grads.size() - 1;
  auto du = grads[map_blocks];
  std::vector<T> da(kGates * H);
  std::vector<T> dh_prev(H);
  for (std::size_t j = 0; j < H; ++j) {
    const T z = rec.z[j], n = rec.n[j];
    dh_prev[j] = dh[j] * z;
    da[j] = dh[j] * (prev.h[j] - n) * z * (T{1} - z);
    da[2 * H + j] = dh[j] * (T{1} - z) * (T{1} - n * n);
  }
  std::vector<T> d_gated(H, T{0});
  block_backward<T>(recurrent_, 2 * H, H, rec.gated_h, da.data() + 2 * H, du, d_gated);
  for (std::size_t j = 0; j < H; ++j) {
    const T r = rec.r[j];
    da[H + j] = d_gated[j] * prev.h[j] * r * (T{1} - r);
    dh_prev[j] += d_gated[j] * r;
  }
  block_backward<T>(recurrent_, 0, 2 * H, prev.h, da.data(), du, dh_prev);
  input_map_.accumulate_backward(x, da, grads.first(map_blocks), {});
  dh = std::move(dh_prev);
}

template float sigmoid(float) noexcept;
template double sigmoid(double) noexcept;
template class LSTMCell<float>;
template class LSTMCell<double>;
template class GRUCell<float>;
template class GRUCell<double>;

}  // namespace btrnn
