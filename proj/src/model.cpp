// SPDX-License-Identifier: Apache-2.0
#include "btrnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "btrnn/errors.hpp"

namespace btrnn {

template <typename T>
T loss_mse(std::span<const T> pred, std::span<const T> target) {
  if (pred.size() != target.size()) throw DimensionMismatch("mse: prediction and target lengths differ");
  if (pred.empty()) return T{0};
  T acc{0};
  for (std::size_t j = 0; j < pred.size(); ++j) {
    const T e = pred[j] - target[j];
    acc += e * e;
  }
  return acc / static_cast<T>(pred.size());
}

template <typename T>
T loss_xent(std::span<const T> logits, std::size_t label) {
  if (label >= logits.size()) throw DimensionMismatch("xent: label outside the class range");
  const T peak = *std::max_element(logits.begin(), logits.end());
  T sum{0};
  for (auto v : logits) sum += std::exp(v - peak);
  return peak + std::log(sum) - logits[label];
}

template <typename T>
T loss_with_gradient(LossKind kind, std::span<const T> output, const Sample<T>& sample, std::span<T> grad) {
  if (kind == LossKind::mse) {
    const std::span<const T> target(sample.target);
    const T value = loss_mse(output, target);
    const T scale = T{2} / static_cast<T>(output.size());
    for (std::size_t j = 0; j < output.size(); ++j) grad[j] = scale * (output[j] - target[j]);
    return value;
  }
  const T value = loss_xent(output, sample.label);
  const T peak = *std::max_element(output.begin(), output.end());
  T sum{0};
  for (std::size_t j = 0; j < output.size(); ++j) {
    grad[j] = std::exp(output[j] - peak);
    sum += grad[j];
  }
  for (std::size_t j = 0; j < output.size(); ++j) grad[j] /= sum;
  grad[sample.label] -= T{1};
  return value;
}

// ---------------------------------------------------------------------------

template <typename T>
GradientBundle<T> GradientBundle<T>::zeros_like(const std::vector<std::span<const T>>& params) {
  GradientBundle g;
  g.blocks.reserve(params.size());
  for (const auto& p : params) g.blocks.emplace_back(p.size(), T{0});
  return g;
}

template <typename T>
std::vector<std::span<T>> GradientBundle<T>::views() {
  std::vector<std::span<T>> out;
  out.reserve(blocks.size());
  for (auto& b : blocks) out.emplace_back(b);
  return out;
}

template <typename T>
std::size_t GradientBundle<T>::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.size();
  return n;
}

template <typename T>
double GradientBundle<T>::norm() const {
  double acc = 0.0;
  for (const auto& b : blocks)
    for (auto v : b) acc += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(acc);
}

template <typename T>
T Model<T>::loss(const Sample<T>& sample, LossKind kind) const {
  const auto out = predict(sample);
  if (kind == LossKind::mse) return loss_mse<T>(out, sample.target);
  return loss_xent<T>(out, sample.label);
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

// ---------------------------------------------------------------------------

template <typename T>
std::vector<T> LinearRegressor<T>::predict(const Sample<T>& sample) const {
  if (sample.inputs.size() != 1) throw DimensionMismatch("linear regressor takes exactly one input vector");
  return map_.forward(sample.inputs[0]);
}

template <typename T>
T LinearRegressor<T>::loss_and_gradient(const Sample<T>& sample, LossKind loss,
                                        std::span<const std::span<T>> grads) const {
  const auto y = predict(sample);
  std::vector<T> dy(y.size());
  const T value = loss_with_gradient<T>(loss, y, sample, dy);
  map_.accumulate_backward(sample.inputs[0], dy, grads, {});
  return value;
}

// ---------------------------------------------------------------------------

template <typename T>
SequenceClassifier<T>::SequenceClassifier(Cell cell, Tensor<T> head, std::vector<T> head_bias)
    : cell_(std::move(cell)), head_(std::move(head)), head_bias_(std::move(head_bias)) {
  if (head_.order() != 2 || head_.shape()[1] != hidden_size() || head_.shape()[0] != head_bias_.size()) {
    throw DimensionMismatch("head must be (C x H) with a C-entry bias");
  }
}

template <typename T>
std::size_t SequenceClassifier<T>::hidden_size() const noexcept {
  return std::visit([](const auto& c) { return c.hidden_size(); }, cell_);
}

template <typename T>
std::size_t SequenceClassifier<T>::input_size() const noexcept {
  return std::visit([](const auto& c) { return c.input_size(); }, cell_);
}

template <typename T>
const BTLinear<T>& SequenceClassifier<T>::input_map() const noexcept {
  return std::visit([](const auto& c) -> const BTLinear<T>& { return c.input_map(); }, cell_);
}

template <typename T>
std::vector<std::span<T>> SequenceClassifier<T>::parameters() {
  auto out = std::visit([](auto& c) { return c.parameters(); }, cell_);
  out.push_back(head_.data());
  out.push_back(head_bias_);
  return out;
}

template <typename T>
std::vector<std::span<const T>> SequenceClassifier<T>::parameters() const {
  auto out = std::visit([](const auto& c) { return c.parameters(); }, cell_);
  out.push_back(head_.data());
  out.push_back(head_bias_);
  return out;
}

template <typename T>
std::vector<T> SequenceClassifier<T>::predict(const Sample<T>& sample) const {
  return std::visit(
      [&](const auto& cell) {
        auto state = cell.initial_state();
        for (const auto& x : sample.inputs) state = cell.step(x, state);
        std::vector<T> out = head_bias_;
        matvec_accumulate<T>(head_, state.h, out);
        return out;
      },
      cell_);
}

template <typename T>
T SequenceClassifier<T>::loss_and_gradient(const Sample<T>& sample, LossKind loss,
                                           std::span<const std::span<T>> grads) const {
  return std::visit(
      [&](const auto& cell) {
        using CellType = std::decay_t<decltype(cell)>;
        const std::size_t steps = sample.inputs.size();
        std::vector<CellState<T>> states;
        std::vector<typename CellType::Record> records;
        states.reserve(steps + 1);
        records.reserve(steps);
        states.push_back(cell.initial_state());
        for (std::size_t t = 0; t < steps; ++t) {
          records.push_back(cell.step_record(sample.inputs[t], states.back()));
          if constexpr (std::is_same_v<CellType, LSTMCell<T>>) {
            states.push_back({records.back().h, records.back().c});
          } else {
            states.push_back({records.back().h, {}});
          }
        }

        const auto& h_last = states.back().h;
        std::vector<T> out = head_bias_;
        matvec_accumulate<T>(head_, h_last, out);
        std::vector<T> dout(out.size());
        const T value = loss_with_gradient<T>(loss, out, sample, dout);

        const std::size_t cell_blocks = grads.size() - 2;
        outer_accumulate<T>(dout, h_last, grads[cell_blocks]);
        auto dbias = grads[cell_blocks + 1];
        for (std::size_t c = 0; c < dout.size(); ++c) dbias[c] += dout[c];

        std::vector<T> dh(hidden_size(), T{0});
        std::vector<T> dc(std::is_same_v<CellType, LSTMCell<T>> ? hidden_size() : 0, T{0});
        matvec_transposed_accumulate<T>(head_, dout, dh);
        const auto cell_grads = grads.first(cell_blocks);
        for (std::size_t t = steps; t-- > 0;) {
          cell.backward_step(sample.inputs[t], states[t], records[t], dh, dc, cell_grads);
        }
        return value;
      },
      cell_);
}

// ---------------------------------------------------------------------------

template <typename T>
LossAndGradient<T> bptt(const Model<T>& model, std::span<const Sample<T>* const> batch, LossKind loss) {
  if (batch.empty()) throw std::invalid_argument("bptt: empty batch");
  const auto params = model.parameters();
  std::vector<GradientBundle<T>> per_sample(batch.size());
  std::vector<T> losses(batch.size(), T{0});
  std::exception_ptr failure;

  const auto n = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < n; ++s) {
    try {
      per_sample[s] = GradientBundle<T>::zeros_like(params);
      const auto views = per_sample[s].views();
      losses[s] = model.loss_and_gradient(*batch[s], loss, views);
    } catch (...) {
#pragma omp critical(btrnn_bptt_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  LossAndGradient<T> result{T{0}, GradientBundle<T>::zeros_like(params)};
  const T inv = T{1} / static_cast<T>(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    result.loss += losses[s];
    for (std::size_t b = 0; b < params.size(); ++b) {
      auto& dst = result.grads.blocks[b];
      const auto& src = per_sample[s].blocks[b];
      for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
    }
  }
  result.loss *= inv;
  bool finite = std::isfinite(result.loss);
  for (auto& block : result.grads.blocks) {
    for (auto& v : block) {
      v *= inv;
      finite = finite && std::isfinite(v);
    }
  }
  if (!finite) throw NonFiniteLoss("bptt: loss or gradient is not finite");
  return result;
}

template <typename T>
LossAndGradient<T> bptt(const Model<T>& model, std::span<const Sample<T>> batch, LossKind loss) {
  std::vector<const Sample<T>*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) ptrs.push_back(&s);
  return bptt(model, std::span<const Sample<T>* const>(ptrs), loss);
}

template <typename T>
T mean_loss(const Model<T>& model, std::span<const Sample<T>> batch, LossKind loss) {
  if (batch.empty()) return T{0};
  std::vector<T> losses(batch.size());
  const auto n = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < n; ++s) losses[s] = model.loss(batch[s], loss);
  T acc{0};
  for (auto v : losses) acc += v;
  return acc / static_cast<T>(batch.size());
}

#define BTRNN_INSTANTIATE(T)                                                                             \
  template T loss_mse(std::span<const T>, std::span<const T>);                                           \
  template T loss_xent(std::span<const T>, std::size_t);                                                 \
  template T loss_with_gradient(LossKind, std::span<const T>, const Sample<T>&, std::span<T>);           \
  template struct GradientBundle<T>;                                                                     \
  template class Model<T>;                                                                               \
  template class LinearRegressor<T>;                                                                     \
  template class SequenceClassifier<T>;                                                                  \
  template LossAndGradient<T> bptt(const Model<T>&, std::span<const Sample<T>* const>, LossKind);        \
  template LossAndGradient<T> bptt(const Model<T>&, std::span<const Sample<T>>, LossKind);               \
  template T mean_loss(const Model<T>&, std::span<const Sample<T>>, LossKind);

BTRNN_INSTANTIATE(float)
BTRNN_INSTANTIATE(double)
#undef BTRNN_INSTANTIATE

}  // namespace btrnn
