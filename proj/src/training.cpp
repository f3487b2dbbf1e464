// SPDX-License-Identifier: Apache-2.0
#include "btrnn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <utility>

#include "btrnn/errors.hpp"
#include "btrnn/rng.hpp"

namespace btrnn {

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("eps must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0");
}

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const std::vector<std::span<const T>>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.size(), T{0});
    s.v.emplace_back(p.size(), T{0});
  }
  return s;
}

template <typename T>
void adam_step(std::span<const std::span<T>> params, const GradientBundle<T>& grads, AdamState<T>& state,
               const TrainingConfig& config) {
  if (params.size() != grads.blocks.size() || params.size() != state.m.size()) {
    throw DimensionMismatch("adam: parameter, gradient and state block counts differ");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads.blocks[b].size() || params[b].size() != state.m[b].size()) {
      throw DimensionMismatch("adam: block " + std::to_string(b) + " has mismatched sizes");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(config.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(config.beta2, t));
  const T lr = static_cast<T>(config.learning_rate), eps = static_cast<T>(config.epsilon);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    const auto& g = grads.blocks[b];
    auto& m = state.m[b];
    auto& v = state.v[b];
    for (std::size_t e = 0; e < p.size(); ++e) {
      m[e] = b1 * m[e] + (T{1} - b1) * g[e];
      v[e] = b2 * v[e] + (T{1} - b2) * g[e] * g[e];
      const T m_hat = m[e] / correction1;
      const T v_hat = v[e] / correction2;
      p[e] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename T>
std::vector<EpochMetrics> train(Model<T>& model, std::span<const Sample<T>> data, LossKind loss,
                                const TrainingConfig& config,
                                const std::function<double(const Model<T>&)>& evaluate) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  const auto params = model.parameters();
  auto state = AdamState<T>::zeros_like(std::as_const(model).parameters());
  Rng rng = Rng(config.seed).split(0x5eed);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const Sample<T>*> batch;
  std::vector<EpochMetrics> history;
  history.reserve(config.epochs);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      const std::size_t last = std::min(order.size(), first + config.batch_size);
      batch.clear();
      for (std::size_t s = first; s < last; ++s) batch.push_back(&data[order[s]]);
      auto result = bptt<T>(model, batch, loss);
      loss_sum += static_cast<double>(result.loss) * static_cast<double>(batch.size());
      if (config.clip_norm > 0.0) {
        const double norm = result.grads.norm();
        if (norm > config.clip_norm) {
          const T scale = static_cast<T>(config.clip_norm / norm);
          for (auto& block : result.grads.blocks)
            for (auto& v : block) v *= scale;
        }
      }
      adam_step<T>(params, result.grads, state, config);
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(data.size());
    if (evaluate) m.eval_metric = evaluate(model);
    if (config.record_wall_time) {
      m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
    history.push_back(m);
  }
  return history;
}

template <typename T>
GradCheckResult compare_gradients(Model<T>& model, std::span<const Sample<T>> batch, LossKind loss,
                                  const GradientBundle<T>& analytic, const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw std::invalid_argument("grad_check: step must be > 0");
  auto params = model.parameters();
  if (params.size() != analytic.blocks.size()) throw DimensionMismatch("grad_check: gradient bundle mismatch");

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t b = 0; b < params.size(); ++b)
    for (std::size_t e = 0; e < params[b].size(); ++e) coords.emplace_back(b, e);
  if (coords.size() > options.max_coordinates) {
    Rng rng(options.seed);
    rng.shuffle(coords.begin(), coords.end());
    coords.resize(options.max_coordinates);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckResult result;
  result.coordinates = coords.size();
  for (const auto& [b, e] : coords) {
    T& p = params[b][e];
    const T saved = p;
    const auto central = [&](double step) {
      p = saved + static_cast<T>(step);
      const double plus = static_cast<double>(mean_loss<T>(model, batch, loss));
      p = saved - static_cast<T>(step);
      const double minus = static_cast<double>(mean_loss<T>(model, batch, loss));
      p = saved;
      return (plus - minus) / (2.0 * step);
    };
    double numeric = central(options.step);
    if (options.extrapolate) numeric = (4.0 * numeric - central(2.0 * options.step)) / 3.0;
    const double a = static_cast<double>(analytic.blocks[b][e]);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > result.max_rel_error || (std::isnan(rel) && !std::isnan(result.max_rel_error))) {
      result.max_rel_error = rel;
      result.worst_block = b;
      result.worst_index = e;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

template <typename T>
GradCheckResult grad_check(Model<T>& model, std::span<const Sample<T>> batch, LossKind loss,
                           const GradCheckOptions& options) {
  const auto analytic = bptt<T>(model, batch, loss);
  return compare_gradients<T>(model, batch, loss, analytic.grads, options);
}

#define BTRNN_INSTANTIATE(T)                                                                                 \
  template struct AdamState<T>;                                                                              \
  template void adam_step(std::span<const std::span<T>>, const GradientBundle<T>&, AdamState<T>&,            \
                          const TrainingConfig&);                                                            \
  template std::vector<EpochMetrics> train(Model<T>&, std::span<const Sample<T>>, LossKind,                  \
                                           const TrainingConfig&, const std::function<double(const Model<T>&)>&); \
  template GradCheckResult compare_gradients(Model<T>&, std::span<const Sample<T>>, LossKind,              \
                                             const GradientBundle<T>&, const GradCheckOptions&);             \
  template GradCheckResult grad_check(Model<T>&, std::span<const Sample<T>>, LossKind, const GradCheckOptions&);

BTRNN_INSTANTIATE(float)
BTRNN_INSTANTIATE(double)
#undef BTRNN_INSTANTIATE

}  // namespace btrnn
