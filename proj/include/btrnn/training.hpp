// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "btrnn/model.hpp"

namespace btrnn {

enum class ScalarWidth { f64, f32 };

struct TrainingConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  ScalarWidth scalar = ScalarWidth::f64;
  /// Global gradient-norm clip; 0 disables clipping.
  double clip_norm = 0.0;
  /// Fill the wall_ms metrics column. Off by default so metric files are
  /// reproducible byte for byte.
  bool record_wall_time = false;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const std::vector<std::span<const T>>& params);
};

/// One bias-corrected Adam update:
///   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
///   p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
template <typename T>
void adam_step(std::span<const std::span<T>> params, const GradientBundle<T>& grads, AdamState<T>& state,
               const TrainingConfig& config);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double eval_metric = 0.0;
  double wall_ms = 0.0;
};

/// Mini-batch Adam. Sample order is reshuffled every epoch from
/// `config.seed`. `evaluate`, if set, fills the eval_metric column after
/// each epoch.
template <typename T>
std::vector<EpochMetrics> train(Model<T>& model, std::span<const Sample<T>> data, LossKind loss,
                                const TrainingConfig& config,
                                const std::function<double(const Model<T>&)>& evaluate = {});

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_block = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Above this many scalars, a seeded random subset of this size is checked.
  std::size_t max_coordinates = 10000;
  std::uint64_t seed = 0;
  /// Richardson-extrapolate two central differences, (4 D(h) - D(2h)) / 3,
  /// cancelling the h^2 truncation term. Lets a larger step keep roundoff
  /// low on coordinates whose gradient is tiny.
  bool extrapolate = false;
};

/// Central differences of the mean batch loss against `analytic`.
/// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
template <typename T>
GradCheckResult compare_gradients(Model<T>& model, std::span<const Sample<T>> batch, LossKind loss,
                                  const GradientBundle<T>& analytic, const GradCheckOptions& options = {});

/// compare_gradients against bptt's gradient.
template <typename T>
GradCheckResult grad_check(Model<T>& model, std::span<const Sample<T>> batch, LossKind loss,
                           const GradCheckOptions& options = {});

}  // namespace btrnn
