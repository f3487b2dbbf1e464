// SPDX-License-Identifier: Apache-2.0
#include "btrnn/linear.hpp"

#include "btrnn/errors.hpp"

namespace btrnn {

template <typename T>
void matvec_accumulate(const Tensor<T>& w, std::span<const T> x, std::span<T> y) {
  const std::size_t rows = w.shape().at(0), cols = w.shape().at(1);
  if (x.size() != cols || y.size() != rows) throw DimensionMismatch("matvec: operand sizes do not match matrix");
  const auto a = w.data();
  for (std::size_t r = 0; r < rows; ++r) {
    T acc{0};
    const T* row = a.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

template <typename T>
void matvec_transposed_accumulate(const Tensor<T>& w, std::span<const T> dy, std::span<T> x_grad) {
  const std::size_t rows = w.shape().at(0), cols = w.shape().at(1);
  if (dy.size() != rows || x_grad.size() != cols) {
    throw DimensionMismatch("matvec^T: operand sizes do not match matrix");
  }
  const auto a = w.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T g = dy[r];
    const T* row = a.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) x_grad[c] += row[c] * g;
  }
}

template <typename T>
void outer_accumulate(std::span<const T> dy, std::span<const T> x, std::span<T> dw) {
  if (dw.size() != dy.size() * x.size()) throw DimensionMismatch("outer: gradient buffer has wrong size");
  for (std::size_t r = 0; r < dy.size(); ++r) {
    T* row = dw.data() + r * x.size();
    for (std::size_t c = 0; c < x.size(); ++c) row[c] += dy[r] * x[c];
  }
}

template <typename T>
BTLinear<T>::BTLinear(std::variant<BTDecomposition<T>, Tensor<T>> weight, bool with_bias) : weight_(std::move(weight)) {
  if (auto* btd = std::get_if<BTDecomposition<T>>(&weight_)) {
    input_size_ = btd->input_size();
    output_size_ = btd->output_size();
  } else {
    const auto& w = std::get<Tensor<T>>(weight_);
    if (w.order() != 2) throw DimensionMismatch("dense weight must be a matrix");
    output_size_ = w.shape()[0];
    input_size_ = w.shape()[1];
  }
  if (with_bias) bias_.assign(output_size_, T{0});
}

template <typename T>
BTLinear<T> BTLinear<T>::block_term(BTDecomposition<T> weight, bool with_bias) {
  return BTLinear(std::move(weight), with_bias);
}

template <typename T>
BTLinear<T> BTLinear<T>::dense(Tensor<T> weight, bool with_bias) {
  return BTLinear(std::move(weight), with_bias);
}

template <typename T>
std::size_t BTLinear<T>::weight_parameter_count() const noexcept {
  if (is_block_term()) return btd().stored_scalars();
  return dense_weight().size();
}

template <typename T>
std::vector<std::span<T>> BTLinear<T>::parameters() {
  std::vector<std::span<T>> out;
  if (is_block_term()) {
    out = btd().parameters();
  } else {
    out.push_back(dense_weight().data());
  }
  if (has_bias()) out.push_back(bias_);
  return out;
}

template <typename T>
std::vector<std::span<const T>> BTLinear<T>::parameters() const {
  std::vector<std::span<const T>> out;
  if (is_block_term()) {
    out = btd().parameters();
  } else {
    out.push_back(dense_weight().data());
  }
  if (has_bias()) out.push_back(bias_);
  return out;
}

template <typename T>
std::vector<T> BTLinear<T>::forward(std::span<const T> x) const {
  if (x.size() != input_size_) throw DimensionMismatch("linear: input has wrong length");
  std::vector<T> y;
  if (is_block_term()) {
    y = btrnn::forward(btd(), x);
  } else {
    y.assign(output_size_, T{0});
    matvec_accumulate<T>(dense_weight(), x, y);
  }
  for (std::size_t j = 0; j < bias_.size(); ++j) y[j] += bias_[j];
  return y;
}

template <typename T>
void BTLinear<T>::accumulate_backward(std::span<const T> x, std::span<const T> dy,
                                      std::span<const std::span<T>> grads, std::span<T> x_grad) const {
  if (x.size() != input_size_ || dy.size() != output_size_) {
    throw DimensionMismatch("linear backward: input or upstream gradient has wrong length");
  }
  std::size_t block = 0;
  if (is_block_term()) {
    const auto& w = btd();
    auto g = zero_gradients(w, !x_grad.empty());
    btrnn::accumulate_backward(w, x, dy, g, !x_grad.empty());
    for (const auto& t : g.d_cores) {
      auto dst = grads[block++];
      for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += t[e];
    }
    for (const auto& t : g.d_factors) {
      auto dst = grads[block++];
      for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += t[e];
    }
    for (std::size_t i = 0; i < x_grad.size(); ++i) x_grad[i] += g.d_input[i];
  } else {
    outer_accumulate(dy, x, grads[block++]);
    if (!x_grad.empty()) matvec_transposed_accumulate(dense_weight(), dy, x_grad);
  }
  if (has_bias()) {
    auto db = grads[block];
    for (std::size_t j = 0; j < db.size(); ++j) db[j] += dy[j];
  }
}

template <typename T>
BTLinear<T> densified(const BTLinear<T>& layer) {
  if (!layer.is_block_term()) return layer;
  auto out = BTLinear<T>::dense(reconstruct_dense(layer.btd()), layer.has_bias());
  out.bias() = layer.bias();
  return out;
}

#define BTRNN_INSTANTIATE(T)                                                                     \
  template class BTLinear<T>;                                                                    \
  template BTLinear<T> densified(const BTLinear<T>&);                                            \
  template void matvec_accumulate(const Tensor<T>&, std::span<const T>, std::span<T>);           \
  template void matvec_transposed_accumulate(const Tensor<T>&, std::span<const T>, std::span<T>); \
  template void outer_accumulate(std::span<const T>, std::span<const T>, std::span<T>);

BTRNN_INSTANTIATE(float)
BTRNN_INSTANTIATE(double)
#undef BTRNN_INSTANTIATE

}  // namespace btrnn
