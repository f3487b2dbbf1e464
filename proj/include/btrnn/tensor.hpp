// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "btrnn/errors.hpp"

namespace btrnn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(std::span<const std::size_t> shape) noexcept;

/// Row-major strides (last index fastest) for `shape`.
std::vector<std::size_t> row_major_strides(std::span<const std::size_t> shape);

/// Dense multiway array with row-major storage.
///
/// An order-0 tensor (empty shape) holds exactly one element and is how full
/// contractions return scalars.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : data_(1, T{0}) {}
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t order() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  /// 1-based mode extent.
  std::size_t extent(std::size_t mode) const;

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  std::size_t offset(std::span<const std::size_t> index) const;
  T& at(std::span<const std::size_t> index) { return data_[offset(index)]; }
  const T& at(std::span<const std::size_t> index) const { return data_[offset(index)]; }
  T& at(std::initializer_list<std::size_t> index) {
    return at(std::span<const std::size_t>(index.begin(), index.size()));
  }
  const T& at(std::initializer_list<std::size_t> index) const {
    return at(std::span<const std::size_t>(index.begin(), index.size()));
  }

  T& operator[](std::size_t flat) noexcept { return data_[flat]; }
  const T& operator[](std::size_t flat) const noexcept { return data_[flat]; }

  void fill(T value);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Reshape a flat vector into a tensor of shape `dims` without reordering.
template <typename T>
Tensor<T> tensorize(std::span<const T> v, Shape dims);

template <typename T>
std::vector<T> flatten(const Tensor<T>& t);

/// Reorder modes: result mode m is source mode `order[m]` (0-based).
template <typename T>
Tensor<T> permute(const Tensor<T>& t, std::span<const std::size_t> order);

}  // namespace btrnn
