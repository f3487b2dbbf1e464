// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "btrnn/cells.hpp"
#include "btrnn/linear.hpp"

namespace btrnn {

enum class LossKind { mse, xent };

/// One training example. Regression: a single input vector in `inputs` or a
/// sequence, with `target`. Classification: a sequence with `label`.
template <typename T>
struct Sample {
  std::vector<std::vector<T>> inputs;
  std::vector<T> target;
  std::size_t label = 0;
};

/// Mean squared difference.
template <typename T>
T loss_mse(std::span<const T> pred, std::span<const T> target);

/// Softmax cross-entropy, log-sum-exp stabilized.
template <typename T>
T loss_xent(std::span<const T> logits, std::size_t label);

/// Loss value; `grad` receives dL/doutput.
template <typename T>
T loss_with_gradient(LossKind kind, std::span<const T> output, const Sample<T>& sample, std::span<T> grad);

/// Per-parameter-block gradients, congruent with Model::parameters().
template <typename T>
struct GradientBundle {
  std::vector<std::vector<T>> blocks;

  static GradientBundle zeros_like(const std::vector<std::span<const T>>& params);
  std::vector<std::span<T>> views();
  std::size_t scalar_count() const noexcept;
  double norm() const;
};

template <typename T>
class Model {
 public:
  virtual ~Model() = default;

  virtual std::vector<std::span<T>> parameters() = 0;
  virtual std::vector<std::span<const T>> parameters() const = 0;

  /// Network output for one sample (regression values or class logits).
  virtual std::vector<T> predict(const Sample<T>& sample) const = 0;

  /// Loss for one sample; adds dL/dparams into `grads`.
  virtual T loss_and_gradient(const Sample<T>& sample, LossKind loss, std::span<const std::span<T>> grads) const = 0;

  T loss(const Sample<T>& sample, LossKind kind) const;
  std::size_t parameter_count() const;
};

/// y = BTLinear(x) on `inputs[0]`.
template <typename T>
class LinearRegressor final : public Model<T> {
 public:
  explicit LinearRegressor(BTLinear<T> map) : map_(std::move(map)) {}

  const BTLinear<T>& map() const noexcept { return map_; }
  BTLinear<T>& map() noexcept { return map_; }

  std::vector<std::span<T>> parameters() override { return map_.parameters(); }
  std::vector<std::span<const T>> parameters() const override { return map_.parameters(); }
  std::vector<T> predict(const Sample<T>& sample) const override;
  T loss_and_gradient(const Sample<T>& sample, LossKind loss, std::span<const std::span<T>> grads) const override;

 private:
  BTLinear<T> map_;
};

/// Single recurrent layer followed by a dense head on the last hidden state.
template <typename T>
class SequenceClassifier final : public Model<T> {
 public:
  using Cell = std::variant<LSTMCell<T>, GRUCell<T>>;

  /// `head` is (C x H); `head_bias` has C entries.
  SequenceClassifier(Cell cell, Tensor<T> head, std::vector<T> head_bias);

  const Cell& cell() const noexcept { return cell_; }
  Cell& cell() noexcept { return cell_; }
  const Tensor<T>& head() const noexcept { return head_; }
  const std::vector<T>& head_bias() const noexcept { return head_bias_; }
  std::size_t hidden_size() const noexcept;
  std::size_t input_size() const noexcept;
  std::size_t output_size() const noexcept { return head_bias_.size(); }
  const BTLinear<T>& input_map() const noexcept;

  /// Parameter blocks: cell blocks, then head, then head bias.
  std::vector<std::span<T>> parameters() override;
  std::vector<std::span<const T>> parameters() const override;
  std::vector<T> predict(const Sample<T>& sample) const override;
  T loss_and_gradient(const Sample<T>& sample, LossKind loss, std::span<const std::span<T>> grads) const override;

  friend bool operator==(const SequenceClassifier& a, const SequenceClassifier& b) {
    return a.cell_ == b.cell_ && a.head_ == b.head_ && a.head_bias_ == b.head_bias_;
  }

 private:
  Cell cell_;
  Tensor<T> head_;
  std::vector<T> head_bias_;
};

template <typename T>
struct LossAndGradient {
  T loss;
  GradientBundle<T> grads;
};

/// Mean loss over the batch and its gradient w.r.t. every parameter. The
/// recurrent models backpropagate through the full unrolled sequence.
/// Samples are evaluated in parallel; the reduction runs in sample order.
/// Throws NonFiniteLoss if the loss or its gradient is not finite.
template <typename T>
LossAndGradient<T> bptt(const Model<T>& model, std::span<const Sample<T>* const> batch, LossKind loss);

template <typename T>
LossAndGradient<T> bptt(const Model<T>& model, std::span<const Sample<T>> batch, LossKind loss);

template <typename T>
T mean_loss(const Model<T>& model, std::span<const Sample<T>> batch, LossKind loss);

}  // namespace btrnn
