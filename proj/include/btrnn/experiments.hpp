// SPDX-License-Identifier: Apache-2.0
#pragma once

// Desk-scale experiment drivers. Each driver is a pure function of its config:
// all randomness derives from `seed`, and nothing reads the clock unless a
// timing flag asks for it.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "btrnn/config.hpp"
#include "btrnn/csv.hpp"
#include "btrnn/model.hpp"
#include "btrnn/shape.hpp"
#include "btrnn/training.hpp"

namespace btrnn {

/// Reads the optimizer keys (lr, beta1, beta2, eps, epochs, batch_size,
/// clip_norm, scalar, timing) on top of `defaults`. `seed` is left alone.
TrainingConfig read_training_config(const KeyValueConfig& cfg, TrainingConfig defaults);

CsvTable metrics_csv(const std::vector<EpochMetrics>& history);

// ---------------------------------------------------------------------------
// Parameter table

struct ParamsConfig {
  std::size_t input_dim = 64;
  std::size_t output_dim = 64;
  std::vector<std::size_t> d_values{2, 4};
  std::vector<std::size_t> R_values{1, 2, 4};
  std::vector<std::size_t> N_values{1, 2};

  static ParamsConfig from(const KeyValueConfig& cfg);
  void validate() const;
};

struct ParamsRow {
  std::string kind;  // "btd" or "dense"
  std::size_t d = 0, R = 0, N = 0;
  std::string input_dims, output_dims;
  std::uint64_t param_count = 0;
};

struct ParamsTable {
  std::vector<ParamsRow> rows;
  /// Skipped factorizations and ranks above a mode size.
  std::vector<std::string> notices;

  CsvTable to_csv() const;
};

ParamsTable run_params(const ParamsConfig& cfg);

// ---------------------------------------------------------------------------
// Parameter-count sweep over (d, R) at fixed I x J

struct SweepConfig {
  std::size_t input_dim = 4096;
  std::size_t output_dim = 256;
  std::size_t N = 1;
  std::vector<std::size_t> d_values{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<std::size_t> R_values{1, 2, 3, 4};

  static SweepConfig from(const KeyValueConfig& cfg);
  void validate() const;
};

ParamsTable run_sweep(const SweepConfig& cfg);

/// Parameter counts of the btd rows with the given R, ordered by d.
std::vector<std::uint64_t> sweep_curve(const ParamsTable& table, std::size_t R);

/// True when the sequence falls to an interior minimum and then rises:
/// non-increasing up to the first argmin, non-decreasing after it, with the
/// minimum strictly below both end points.
bool is_u_shaped(const std::vector<std::uint64_t>& values);

// ---------------------------------------------------------------------------
// Synthetic W recovery: y = W' x, learn W in BTD form

enum class RecoveryTarget { random, identity };

struct RecoveryConfig {
  std::size_t dim = 64;
  std::size_t d = 2;
  std::size_t R = 1;
  std::size_t N = 1;
  /// Std of the Gaussian noise added to x after y is computed.
  double noise_std = 0.01;
  /// Std of the clean x entries (variance 0.5).
  double input_std = 0.7071067811865476;
  std::size_t samples = 512;
  RecoveryTarget target = RecoveryTarget::random;
  TrainingConfig training = default_training();
  std::uint64_t seed = 0;

  static TrainingConfig default_training();
  static RecoveryConfig from(const KeyValueConfig& cfg);
  void validate() const;
  /// Equal-split shape; throws ConfigError when dim has no d-way split.
  FactorizedShape shape() const;
};

struct RecoveryReport {
  FactorizedShape shape{{1}, {1}};
  std::uint64_t param_count = 0;
  /// MSE of the trained model over the training set.
  double final_mse = 0.0;
  /// ||W - W'||_F / ||W'||_F.
  double rel_frobenius = 0.0;
  std::vector<EpochMetrics> history;  // eval_metric: rel_frobenius per epoch
  Tensor<double> learned;
  Tensor<double> truth;
  std::string checkpoint;  // encoded LinearRegressor

  CsvTable summary_csv(const RecoveryConfig& cfg) const;
};

RecoveryReport run_recovery(const RecoveryConfig& cfg);

// ---------------------------------------------------------------------------
// Forward-pass complexity benchmark

struct BenchConfig {
  std::vector<std::pair<std::size_t, std::size_t>> sizes{{64, 64}, {4096, 256}};
  std::vector<std::size_t> d_values{1, 2, 3, 4};
  std::vector<std::size_t> R_values{1, 2, 4};
  std::vector<std::size_t> N_values{1, 2};
  std::size_t repetitions = 5;
  /// When false the wall-time columns are 0 and the CSV is reproducible.
  bool timing = true;
  std::uint64_t seed = 0;

  static BenchConfig from(const KeyValueConfig& cfg);
  void validate() const;
};

struct BenchRow {
  std::string config;
  FactorizedShape shape{{1}, {1}};
  std::size_t N = 0, R = 0;
  std::uint64_t flops_reordered = 0;
  std::uint64_t flops_naive = 0;
  /// Multiply-adds observed by the kernel counter during one forward().
  std::uint64_t flops_measured = 0;
  double wall_ns_mean = 0.0;
  double wall_ns_naive_mean = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<std::string> notices;
  /// Configs with R <= min_k J_k whose reordered count exceeds the naive one.
  std::vector<std::string> ordering_violations;

  CsvTable to_csv() const;
};

BenchReport run_benchmark(const BenchConfig& cfg);

// ---------------------------------------------------------------------------
// Synthetic sequence classification

enum class CellKind { bt_lstm, bt_gru, dense_lstm, dense_gru };

CellKind parse_cell_kind(const std::string& name);
std::string cell_kind_name(CellKind kind);
bool is_block_term(CellKind kind) noexcept;
bool is_lstm(CellKind kind) noexcept;

struct ModelSpec {
  CellKind cell = CellKind::bt_lstm;
  std::size_t input_dim = 512;
  std::size_t hidden = 16;
  std::size_t classes = 4;
  std::size_t d = 3;
  std::size_t R = 4;
  std::size_t N = 1;
  /// Explicit mode sizes; balanced splits of input_dim and gates*hidden otherwise.
  std::optional<std::vector<std::size_t>> input_dims;
  std::optional<std::vector<std::size_t>> output_dims;

  FactorizedShape shape() const;
  void validate() const;
};

template <typename T>
SequenceClassifier<T> make_classifier(const ModelSpec& spec, std::uint64_t seed);

/// Input-to-hidden weight scalars of a dense cell with this spec.
std::uint64_t dense_input_map_params(const ModelSpec& spec);

struct SequenceTaskConfig {
  std::string task = "templates";
  ModelSpec model;
  std::size_t seq_len = 6;
  std::size_t train_size = 320;
  std::size_t test_size = 160;
  /// Std of the per-entry Gaussian noise around each class template.
  double noise_std = 1.5;
  TrainingConfig training = default_training();
  std::uint64_t seed = 0;

  static TrainingConfig default_training();
  static SequenceTaskConfig from(const KeyValueConfig& cfg);
  void validate() const;
};

/// Class c has one fixed template sequence; samples add Gaussian noise to
/// it. Labels cycle 0..C-1, so classes are balanced.
template <typename T>
std::pair<std::vector<Sample<T>>, std::vector<Sample<T>>> make_template_task(const SequenceTaskConfig& cfg);

/// Accuracy of always predicting the most frequent training label.
template <typename T>
double majority_baseline(const std::vector<Sample<T>>& train, const std::vector<Sample<T>>& test);

template <typename T>
double accuracy(const Model<T>& model, const std::vector<Sample<T>>& data);

struct SequenceTaskReport {
  double test_accuracy = 0.0;
  double train_accuracy = 0.0;
  double majority_accuracy = 0.0;
  std::uint64_t input_map_params = 0;
  std::uint64_t dense_input_map_params = 0;
  std::uint64_t total_params = 0;
  std::vector<EpochMetrics> history;  // eval_metric: test accuracy per epoch
  std::string checkpoint;             // encoded SequenceClassifier

  CsvTable summary_csv(const SequenceTaskConfig& cfg) const;
};

SequenceTaskReport run_sequence_task(const SequenceTaskConfig& cfg);

// ---------------------------------------------------------------------------
// Gradient check on a random tiny model

struct GradCheckConfig {
  /// bt-lstm, bt-gru, dense-lstm, dense-gru or bt-linear.
  std::string model = "bt-lstm";
  std::vector<std::size_t> input_dims{2, 2, 4};
  /// bt-linear only; recurrent cells use a balanced split of gates*hidden.
  std::vector<std::size_t> output_dims{2, 2, 2};
  std::size_t hidden = 4;
  std::size_t classes = 3;
  std::size_t R = 2;
  std::size_t N = 2;
  std::size_t seq_len = 3;
  std::size_t batch = 4;
  /// Central-difference step; with `extrapolate` the error is O(step^4).
  double step = 1e-3;
  bool extrapolate = true;
  double tolerance = 1e-5;
  std::size_t max_coordinates = 10000;
  std::uint64_t seed = 0;

  static GradCheckConfig from(const KeyValueConfig& cfg);
  void validate() const;
};

struct GradCheckReport {
  GradCheckResult result;
  std::size_t parameter_count = 0;
  bool passed = false;

  CsvTable to_csv(const GradCheckConfig& cfg) const;
};

GradCheckReport run_gradcheck(const GradCheckConfig& cfg);

}  // namespace btrnn
