// SPDX-License-Identifier: Apache-2.0
#include "btrnn/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <string>

namespace btrnn {

std::size_t shape_size(std::span<const std::size_t> shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::vector<std::size_t> row_major_strides(std::span<const std::size_t> shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t m = shape.size(); m-- > 1;) strides[m - 1] = strides[m] * shape[m];
  return strides;
}

namespace {

void check_modes_positive(const Shape& shape) {
  for (std::size_t m = 0; m < shape.size(); ++m) {
    if (shape[m] == 0) throw ShapeMismatch("mode " + std::to_string(m + 1) + " has size 0");
  }
}

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t m = 0; m < shape.size(); ++m) {
    if (m) s += ",";
    s += std::to_string(shape[m]);
  }
  return s + ")";
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_modes_positive(shape_);
  data_.assign(shape_size(shape_), T{0});
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_modes_positive(shape_);
  if (shape_size(shape_) != data_.size()) {
    throw ShapeMismatch("shape " + shape_string(shape_) + " needs " + std::to_string(shape_size(shape_)) +
                        " elements, got " + std::to_string(data_.size()));
  }
}

template <typename T>
std::size_t Tensor<T>::extent(std::size_t mode) const {
  if (mode < 1 || mode > shape_.size()) throw std::out_of_range("mode index out of range");
  return shape_[mode - 1];
}

template <typename T>
std::size_t Tensor<T>::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw DimensionMismatch("index order differs from tensor order");
  std::size_t flat = 0;
  for (std::size_t m = 0; m < shape_.size(); ++m) {
    if (index[m] >= shape_[m]) throw std::out_of_range("tensor index out of range");
    flat = flat * shape_[m] + index[m];
  }
  return flat;
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
Tensor<T> tensorize(std::span<const T> v, Shape dims) {
  return Tensor<T>(std::move(dims), std::vector<T>(v.begin(), v.end()));
}

template <typename T>
std::vector<T> flatten(const Tensor<T>& t) {
  return t.values();
}

template <typename T>
Tensor<T> permute(const Tensor<T>& t, std::span<const std::size_t> order) {
  const std::size_t d = t.order();
  if (order.size() != d) throw DimensionMismatch("permutation length differs from tensor order");
  std::vector<bool> seen(d, false);
  for (auto m : order) {
    if (m >= d) throw std::out_of_range("permutation entry out of range");
    if (seen[m]) throw DuplicateMode("permutation repeats a mode");
    seen[m] = true;
  }
  Shape out_shape(d);
  for (std::size_t m = 0; m < d; ++m) out_shape[m] = t.shape()[order[m]];
  Tensor<T> out(out_shape);
  if (d == 0) {
    out[0] = t[0];
    return out;
  }

  const auto src_strides = row_major_strides(t.shape());
  std::vector<std::size_t> stride(d);
  for (std::size_t m = 0; m < d; ++m) stride[m] = src_strides[order[m]];

  // Walk the output in row-major order, tracking the source offset.
  std::vector<std::size_t> idx(d, 0);
  std::size_t src = 0;
  const auto src_data = t.data();
  auto dst = out.data();
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    dst[flat] = src_data[src];
    for (std::size_t m = d; m-- > 0;) {
      if (++idx[m] < out_shape[m]) {
        src += stride[m];
        break;
      }
      src -= stride[m] * (out_shape[m] - 1);
      idx[m] = 0;
    }
  }
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> tensorize(std::span<const float>, Shape);
template Tensor<double> tensorize(std::span<const double>, Shape);
template std::vector<float> flatten(const Tensor<float>&);
template std::vector<double> flatten(const Tensor<double>&);
template Tensor<float> permute(const Tensor<float>&, std::span<const std::size_t>);
template Tensor<double> permute(const Tensor<double>&, std::span<const std::size_t>);

}  // namespace btrnn
