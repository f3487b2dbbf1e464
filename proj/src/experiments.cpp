// SPDX-License-Identifier: Apache-2.0
#include "btrnn/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

#include "btrnn/btd.hpp"
#include "btrnn/checkpoint.hpp"
#include "btrnn/contract.hpp"
#include "btrnn/errors.hpp"
#include "btrnn/rng.hpp"

namespace btrnn {

namespace {

std::string u64s(std::uint64_t v) { return std::to_string(v); }

void require_positive(const std::string& key, std::size_t value) {
  if (value < 1) throw ConfigError(key + " must be >= 1");
}

void require_positive_list(const std::string& key, const std::vector<std::size_t>& values) {
  if (values.empty()) throw ConfigError(key + " must not be empty");
  for (auto v : values)
    if (v < 1) throw ConfigError(key + " entries must be >= 1");
}

std::size_t product(const std::vector<std::size_t>& v) {
  return std::accumulate(v.begin(), v.end(), std::size_t{1}, std::multiplies<>());
}

/// Validation with the offending key's line number when the error is local.
template <typename F>
void validate_with_lines(const KeyValueConfig& cfg, F&& validate) {
  try {
    validate();
  } catch (const ConfigError& e) {
    if (e.line() != 0) throw;
    // Attribute a cross-field failure to the first key named in the message.
    std::string msg = e.what();
    const auto space = msg.find(' ');
    const auto key = msg.substr(0, space);
    throw ConfigError(msg, cfg.line_of(key));
  }
}

std::vector<std::pair<std::size_t, std::size_t>> parse_sizes(const KeyValueConfig& cfg, const std::string& key,
                                                             std::vector<std::pair<std::size_t, std::size_t>> fallback) {
  if (!cfg.contains(key)) return fallback;
  const auto text = cfg.get_string(key, "");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    auto item = text.substr(pos, comma - pos);
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    const auto x = item.find('x');
    try {
      if (x == std::string::npos) throw std::invalid_argument(item);
      std::size_t a = 0, b = 0;
      const auto i = std::stoull(item.substr(0, x), &a);
      const auto j = std::stoull(item.substr(x + 1), &b);
      if (a != x || b != item.size() - x - 1 || i == 0 || j == 0) throw std::invalid_argument(item);
      out.emplace_back(i, j);
    } catch (const std::exception&) {
      throw ConfigError("'" + key + "' expects a list like 64x64,4096x256, got '" + text + "'", cfg.line_of(key));
    }
    pos = comma + 1;
  }
  return out;
}

void add_params_rows(ParamsTable& table, std::size_t input_dim, std::size_t output_dim, std::size_t d,
                     const std::vector<std::size_t>& R_values, const std::vector<std::size_t>& N_values) {
  const auto shape = balanced_shape(input_dim, output_dim, d);
  if (!shape) {
    table.notices.push_back("skipped d=" + std::to_string(d) + ": " + std::to_string(input_dim) + "x" +
                            std::to_string(output_dim) + " has no " + std::to_string(d) +
                            "-way split with every mode >= 2");
    return;
  }
  for (auto R : R_values) {
    if (const auto over = validate_ranks(*shape, R); !over.empty()) {
      table.notices.push_back("d=" + std::to_string(d) + " R=" + std::to_string(R) + ": Tucker rank exceeds min(I_k, J_k) in " +
                              std::to_string(over.size()) + " of " + std::to_string(d) + " modes");
    }
    for (auto N : N_values) {
      table.rows.push_back({"btd", d, R, N, dims_to_string(shape->input_dims()), dims_to_string(shape->output_dims()),
                            param_count(*shape, N, R)});
    }
  }
}

ParamsRow dense_row(std::size_t input_dim, std::size_t output_dim) {
  return {"dense", 0, 0, 0, std::to_string(input_dim), std::to_string(output_dim),
          static_cast<std::uint64_t>(input_dim) * output_dim};
}

double frobenius(const Tensor<double>& a) {
  double acc = 0.0;
  for (auto v : a.data()) acc += v * v;
  return std::sqrt(acc);
}

template <typename T>
Tensor<double> to_double(const Tensor<T>& t) {
  std::vector<double> v(t.data().begin(), t.data().end());
  return Tensor<double>(t.shape(), std::move(v));
}

double relative_frobenius(const Tensor<double>& learned, const Tensor<double>& truth) {
  double diff = 0.0;
  for (std::size_t e = 0; e < truth.size(); ++e) {
    const double v = learned[e] - truth[e];
    diff += v * v;
  }
  const double base = frobenius(truth);
  return base > 0.0 ? std::sqrt(diff) / base : std::sqrt(diff);
}

template <typename T>
std::vector<T> draw_normal(Rng& rng, std::size_t n, double stddev) {
  std::vector<T> v(n);
  for (auto& e : v) e = static_cast<T>(rng.normal(0.0, stddev));
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------

TrainingConfig read_training_config(const KeyValueConfig& cfg, TrainingConfig t) {
  t.learning_rate = cfg.get_double("lr", t.learning_rate);
  t.beta1 = cfg.get_double("beta1", t.beta1);
  t.beta2 = cfg.get_double("beta2", t.beta2);
  t.epsilon = cfg.get_double("eps", t.epsilon);
  t.epochs = cfg.get_size("epochs", t.epochs);
  t.batch_size = cfg.get_size("batch_size", t.batch_size);
  t.clip_norm = cfg.get_double("clip_norm", t.clip_norm);
  t.record_wall_time = cfg.get_bool("timing", t.record_wall_time);
  const auto scalar = cfg.get_string("scalar", t.scalar == ScalarWidth::f64 ? "f64" : "f32");
  if (scalar == "f64" || scalar == "64") {
    t.scalar = ScalarWidth::f64;
  } else if (scalar == "f32" || scalar == "32") {
    t.scalar = ScalarWidth::f32;
  } else {
    throw ConfigError("scalar must be f64 or f32, got '" + scalar + "'", cfg.line_of("scalar"));
  }
  static const char* const keys[] = {"lr", "beta1", "beta2", "eps", "epochs", "batch_size", "clip_norm"};
  try {
    t.validate();
  } catch (const ConfigError& e) {
    std::size_t line = 0;
    const std::string msg = e.what();
    for (const char* k : keys)
      if (msg.rfind(std::string(k) + " ", 0) == 0) line = cfg.line_of(k);
    throw ConfigError(msg, line);
  }
  return t;
}

CsvTable metrics_csv(const std::vector<EpochMetrics>& history) {
  CsvTable t;
  t.header = {"epoch", "train_loss", "eval_metric", "wall_ms"};
  for (const auto& m : history) {
    t.add_row({std::to_string(m.epoch), format_real(m.train_loss), format_real(m.eval_metric), format_real(m.wall_ms)});
  }
  return t;
}

// ---------------------------------------------------------------------------

ParamsConfig ParamsConfig::from(const KeyValueConfig& cfg) {
  ParamsConfig c;
  const auto dim = cfg.get_size("dim", c.input_dim);
  c.input_dim = cfg.get_size("input_dim", dim);
  c.output_dim = cfg.get_size("output_dim", dim);
  c.d_values = cfg.get_size_list("d", c.d_values);
  c.R_values = cfg.get_size_list("R", c.R_values);
  c.N_values = cfg.get_size_list("N", c.N_values);
  cfg.reject_unknown();
  validate_with_lines(cfg, [&] { c.validate(); });
  return c;
}

void ParamsConfig::validate() const {
  require_positive("input_dim", input_dim);
  require_positive("output_dim", output_dim);
  require_positive_list("d", d_values);
  require_positive_list("R", R_values);
  require_positive_list("N", N_values);
}

CsvTable ParamsTable::to_csv() const {
  CsvTable t;
  t.header = {"kind", "d", "R", "N", "input_dims", "output_dims", "param_count"};
  for (const auto& r : rows) {
    t.add_row({r.kind, std::to_string(r.d), std::to_string(r.R), std::to_string(r.N), r.input_dims, r.output_dims,
               u64s(r.param_count)});
  }
  return t;
}

ParamsTable run_params(const ParamsConfig& cfg) {
  cfg.validate();
  ParamsTable table;
  for (auto d : cfg.d_values) add_params_rows(table, cfg.input_dim, cfg.output_dim, d, cfg.R_values, cfg.N_values);
  table.rows.push_back(dense_row(cfg.input_dim, cfg.output_dim));
  return table;
}

SweepConfig SweepConfig::from(const KeyValueConfig& cfg) {
  SweepConfig c;
  c.input_dim = cfg.get_size("input_dim", c.input_dim);
  c.output_dim = cfg.get_size("output_dim", c.output_dim);
  c.N = cfg.get_size("N", c.N);
  c.d_values = cfg.get_size_list("d", c.d_values);
  c.R_values = cfg.get_size_list("R", c.R_values);
  cfg.reject_unknown();
  validate_with_lines(cfg, [&] { c.validate(); });
  return c;
}

void SweepConfig::validate() const {
  require_positive("input_dim", input_dim);
  require_positive("output_dim", output_dim);
  require_positive("N", N);
  require_positive_list("d", d_values);
  require_positive_list("R", R_values);
}

ParamsTable run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  ParamsTable table;
  for (auto d : cfg.d_values) add_params_rows(table, cfg.input_dim, cfg.output_dim, d, cfg.R_values, {cfg.N});
  table.rows.push_back(dense_row(cfg.input_dim, cfg.output_dim));
  return table;
}

std::vector<std::uint64_t> sweep_curve(const ParamsTable& table, std::size_t R) {
  std::vector<std::pair<std::size_t, std::uint64_t>> points;
  for (const auto& r : table.rows)
    if (r.kind == "btd" && r.R == R) points.emplace_back(r.d, r.param_count);
  std::stable_sort(points.begin(), points.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::uint64_t> out;
  for (const auto& p : points) out.push_back(p.second);
  return out;
}

bool is_u_shaped(const std::vector<std::uint64_t>& values) {
  if (values.size() < 3) return false;
  const auto m = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
  if (m == 0 || m + 1 == values.size()) return false;
  if (!(values.front() > values[m] && values.back() > values[m])) return false;
  for (std::size_t i = 1; i <= m; ++i)
    if (values[i] > values[i - 1]) return false;
  for (std::size_t i = m + 1; i < values.size(); ++i)
    if (values[i] < values[i - 1]) return false;
  return true;
}

// ---------------------------------------------------------------------------

TrainingConfig RecoveryConfig::default_training() {
  TrainingConfig t;
  t.learning_rate = 1e-2;
  t.epochs = 100;
  t.batch_size = 32;
  return t;
}

RecoveryConfig RecoveryConfig::from(const KeyValueConfig& cfg) {
  RecoveryConfig c;
  c.dim = cfg.get_size("dim", c.dim);
  c.d = cfg.get_size("d", c.d);
  c.R = cfg.get_size("R", c.R);
  c.N = cfg.get_size("N", c.N);
  c.noise_std = cfg.get_double("noise_std", c.noise_std);
  c.input_std = cfg.get_double("input_std", c.input_std);
  c.samples = cfg.get_size("samples", c.samples);
  const auto target = cfg.get_string("target", "random");
  if (target == "random") {
    c.target = RecoveryTarget::random;
  } else if (target == "identity") {
    c.target = RecoveryTarget::identity;
  } else {
    throw ConfigError("target must be random or identity, got '" + target + "'", cfg.line_of("target"));
  }
  c.seed = cfg.get_u64("seed", c.seed);
  c.training = read_training_config(cfg, c.training);
  cfg.reject_unknown();
  validate_with_lines(cfg, [&] { c.validate(); });
  return c;
}

void RecoveryConfig::validate() const {
  require_positive("dim", dim);
  require_positive("d", d);
  require_positive("R", R);
  require_positive("N", N);
  require_positive("samples", samples);
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (!(input_std > 0.0)) throw ConfigError("input_std must be > 0");
  training.validate();
  (void)shape();
}

FactorizedShape RecoveryConfig::shape() const {
  auto s = balanced_shape(dim, dim, d);
  if (!s) {
    throw ConfigError("d " + std::to_string(d) + " is infeasible: " + std::to_string(dim) + " has no " +
                      std::to_string(d) + "-way split with every mode >= 2");
  }
  return *s;
}

CsvTable RecoveryReport::summary_csv(const RecoveryConfig& cfg) const {
  CsvTable t;
  t.header = {"dim", "d", "R", "N", "input_dims", "output_dims", "target", "noise_std", "samples",
              "epochs", "seed", "param_count", "final_mse", "rel_frobenius"};
  t.add_row({std::to_string(cfg.dim), std::to_string(cfg.d), std::to_string(cfg.R), std::to_string(cfg.N),
             dims_to_string(shape.input_dims()), dims_to_string(shape.output_dims()),
             cfg.target == RecoveryTarget::identity ? "identity" : "random", format_real(cfg.noise_std),
             std::to_string(cfg.samples), std::to_string(cfg.training.epochs), u64s(cfg.seed), u64s(param_count),
             format_real(final_mse), format_real(rel_frobenius)});
  return t;
}

namespace {

template <typename T>
RecoveryReport recovery_impl(const RecoveryConfig& cfg) {
  const auto shape = cfg.shape();
  const std::size_t n = cfg.dim;
  const Rng root(cfg.seed);

  Tensor<double> truth({n, n});
  if (cfg.target == RecoveryTarget::identity) {
    for (std::size_t i = 0; i < n; ++i) truth[i * n + i] = 1.0;
  } else {
    Rng rng = root.split(1);
    for (auto& v : truth.data()) v = rng.normal(0.0, 1.0 / std::sqrt(static_cast<double>(n)));
  }

  Rng xr = root.split(2), nr = root.split(3);
  std::vector<Sample<T>> data(cfg.samples);
  std::vector<double> x(n), y(n);
  for (auto& s : data) {
    for (auto& v : x) v = xr.normal(0.0, cfg.input_std);
    std::fill(y.begin(), y.end(), 0.0);
    matvec_accumulate<double>(truth, x, y);
    std::vector<T> noisy(n);
    for (std::size_t i = 0; i < n; ++i) noisy[i] = static_cast<T>(x[i] + cfg.noise_std * nr.normal());
    s.inputs.push_back(std::move(noisy));
    s.target.assign(y.begin(), y.end());
  }

  Rng init = root.split(4);
  LinearRegressor<T> model(BTLinear<T>::block_term(init_btd<T>(shape, cfg.N, cfg.R, init.next_u64()), false));

  auto training = cfg.training;
  training.seed = cfg.seed;
  const auto evaluate = [&](const Model<T>&) {
    return relative_frobenius(to_double(reconstruct_dense(model.map().btd())), truth);
  };

  RecoveryReport report;
  report.shape = shape;
  report.history = train<T>(model, data, LossKind::mse, training, evaluate);
  report.final_mse = static_cast<double>(mean_loss<T>(model, data, LossKind::mse));
  report.learned = to_double(reconstruct_dense(model.map().btd()));
  report.rel_frobenius = relative_frobenius(report.learned, truth);
  report.param_count = model.parameter_count();
  report.truth = std::move(truth);
  report.checkpoint = encode_checkpoint(model);
  return report;
}

}  // namespace

RecoveryReport run_recovery(const RecoveryConfig& cfg) {
  cfg.validate();
  return cfg.training.scalar == ScalarWidth::f64 ? recovery_impl<double>(cfg) : recovery_impl<float>(cfg);
}

// ---------------------------------------------------------------------------

BenchConfig BenchConfig::from(const KeyValueConfig& cfg) {
  BenchConfig c;
  c.sizes = parse_sizes(cfg, "sizes", c.sizes);
  c.d_values = cfg.get_size_list("d", c.d_values);
  c.R_values = cfg.get_size_list("R", c.R_values);
  c.N_values = cfg.get_size_list("N", c.N_values);
  c.repetitions = cfg.get_size("repetitions", c.repetitions);
  c.timing = cfg.get_bool("timing", c.timing);
  c.seed = cfg.get_u64("seed", c.seed);
  cfg.reject_unknown();
  validate_with_lines(cfg, [&] { c.validate(); });
  return c;
}

void BenchConfig::validate() const {
  if (sizes.empty()) throw ConfigError("sizes must not be empty");
  require_positive_list("d", d_values);
  require_positive_list("R", R_values);
  require_positive_list("N", N_values);
  require_positive("repetitions", repetitions);
}

CsvTable BenchReport::to_csv() const {
  CsvTable t;
  t.header = {"config", "input_dims", "output_dims", "d", "R", "N", "flops_reordered", "flops_naive",
              "flops_measured", "wall_ns_mean", "wall_ns_naive_mean"};
  for (const auto& r : rows) {
    t.add_row({r.config, dims_to_string(r.shape.input_dims()), dims_to_string(r.shape.output_dims()),
               std::to_string(r.shape.order()), std::to_string(r.R), std::to_string(r.N), u64s(r.flops_reordered),
               u64s(r.flops_naive), u64s(r.flops_measured), format_real(r.wall_ns_mean),
               format_real(r.wall_ns_naive_mean)});
  }
  return t;
}

namespace {

template <typename F>
double mean_wall_ns(std::size_t repetitions, F&& f) {
  f();  // warm-up
  double total = 0.0;
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto start = std::chrono::steady_clock::now();
    f();
    total += std::chrono::duration<double, std::nano>(std::chrono::steady_clock::now() - start).count();
  }
  return total / static_cast<double>(repetitions);
}

}  // namespace

BenchReport run_benchmark(const BenchConfig& cfg) {
  cfg.validate();
  BenchReport report;
  std::uint64_t index = 0;
  for (const auto& [I, J] : cfg.sizes) {
    for (auto d : cfg.d_values) {
      const auto shape = balanced_shape(I, J, d);
      if (!shape) {
        report.notices.push_back("skipped " + std::to_string(I) + "x" + std::to_string(J) + " d=" +
                                 std::to_string(d) + ": no balanced split");
        continue;
      }
      for (auto R : cfg.R_values) {
        for (auto N : cfg.N_values) {
          BenchRow row;
          row.config = std::to_string(I) + "x" + std::to_string(J) + " d=" + std::to_string(d) +
                       " R=" + std::to_string(R) + " N=" + std::to_string(N);
          row.shape = *shape;
          row.N = N;
          row.R = R;
          row.flops_reordered = flops_forward(*shape, N, R);
          row.flops_naive = flops_naive(*shape, N, R);

          Rng rng = Rng(cfg.seed).split(++index);
          const auto btd = init_btd<double>(*shape, N, R, rng.next_u64());
          const auto x = draw_normal<double>(rng, I, 1.0);
          {
            ScopedMacCounter counter;
            (void)forward<double>(btd, x);
            row.flops_measured = counter.count();
          }
          if (cfg.timing) {
            row.wall_ns_mean = mean_wall_ns(cfg.repetitions, [&] { (void)forward<double>(btd, x); });
            row.wall_ns_naive_mean = mean_wall_ns(cfg.repetitions, [&] { (void)forward_naive<double>(btd, x); });
          }
          const auto& out = shape->output_dims();
          const auto min_j = *std::min_element(out.begin(), out.end());
          if (R <= min_j && row.flops_reordered > row.flops_naive) {
            report.ordering_violations.push_back(row.config + ": reordered " + u64s(row.flops_reordered) +
                                                 " > naive " + u64s(row.flops_naive));
          }
          report.rows.push_back(std::move(row));
        }
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

CellKind parse_cell_kind(const std::string& name) {
  if (name == "bt-lstm") return CellKind::bt_lstm;
  if (name == "bt-gru") return CellKind::bt_gru;
  if (name == "dense-lstm") return CellKind::dense_lstm;
  if (name == "dense-gru") return CellKind::dense_gru;
  throw ConfigError("cell must be one of bt-lstm, bt-gru, dense-lstm, dense-gru; got '" + name + "'");
}

std::string cell_kind_name(CellKind kind) {
  switch (kind) {
    case CellKind::bt_lstm: return "bt-lstm";
    case CellKind::bt_gru: return "bt-gru";
    case CellKind::dense_lstm: return "dense-lstm";
    case CellKind::dense_gru: return "dense-gru";
  }
  return "?";
}

bool is_block_term(CellKind kind) noexcept { return kind == CellKind::bt_lstm || kind == CellKind::bt_gru; }
bool is_lstm(CellKind kind) noexcept { return kind == CellKind::bt_lstm || kind == CellKind::dense_lstm; }

namespace {
std::size_t gates_of(CellKind kind) { return is_lstm(kind) ? LSTMCell<double>::kGates : GRUCell<double>::kGates; }
}  // namespace

FactorizedShape ModelSpec::shape() const {
  const std::size_t out_size = gates_of(cell) * hidden;
  std::vector<std::size_t> in, out;
  if (input_dims) {
    in = *input_dims;
  } else if (auto f = balanced_factorization(input_dim, d)) {
    in = *f;
  } else {
    throw ConfigError("input_dim " + std::to_string(input_dim) + " has no " + std::to_string(d) + "-way split");
  }
  if (output_dims) {
    out = *output_dims;
  } else if (auto f = balanced_factorization(out_size, in.size())) {
    out = *f;
  } else {
    throw ConfigError("hidden " + std::to_string(hidden) + ": gate width " + std::to_string(out_size) + " has no " +
                      std::to_string(in.size()) + "-way split");
  }
  if (product(in) != input_dim) throw ConfigError("input_dims do not multiply to input_dim");
  if (out.size() != in.size()) throw ConfigError("output_dims and input_dims differ in length");
  if (product(out) != out_size) {
    throw ConfigError("output_dims must multiply to " + std::to_string(out_size) + " (gates x hidden)");
  }
  return FactorizedShape(in, out);
}

void ModelSpec::validate() const {
  require_positive("input_dim", input_dim);
  require_positive("hidden", hidden);
  require_positive("d", d);
  require_positive("R", R);
  require_positive("N", N);
  if (classes < 2) throw ConfigError("classes must be >= 2");
  if (input_dims) require_positive_list("input_dims", *input_dims);
  if (output_dims) require_positive_list("output_dims", *output_dims);
  if (is_block_term(cell)) (void)shape();
}

template <typename T>
SequenceClassifier<T> make_classifier(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Rng root(seed);
  const std::size_t H = spec.hidden, G = gates_of(spec.cell), I = spec.input_dim;

  Rng wr = root.split(1);
  auto map = [&] {
    if (is_block_term(spec.cell)) {
      return BTLinear<T>::block_term(init_btd<T>(spec.shape(), spec.N, spec.R, wr.next_u64()), true);
    }
    const double stddev = std::sqrt(2.0 / static_cast<double>(I + G * H));
    return BTLinear<T>::dense(Tensor<T>({G * H, I}, draw_normal<T>(wr, G * H * I, stddev)), true);
  }();
  if (is_lstm(spec.cell)) std::fill(map.bias().begin(), map.bias().begin() + static_cast<std::ptrdiff_t>(H), T{1});

  Rng ur = root.split(2), hr = root.split(3);
  const double inv_sqrt_h = 1.0 / std::sqrt(static_cast<double>(H));
  Tensor<T> u({G * H, H}, draw_normal<T>(ur, G * H * H, inv_sqrt_h));
  Tensor<T> head({spec.classes, H}, draw_normal<T>(hr, spec.classes * H, inv_sqrt_h));
  std::vector<T> head_bias(spec.classes, T{0});

  typename SequenceClassifier<T>::Cell cell = [&]() -> typename SequenceClassifier<T>::Cell {
    if (is_lstm(spec.cell)) return LSTMCell<T>(std::move(map), std::move(u));
    return GRUCell<T>(std::move(map), std::move(u));
  }();
  return SequenceClassifier<T>(std::move(cell), std::move(head), std::move(head_bias));
}

std::uint64_t dense_input_map_params(const ModelSpec& spec) {
  return static_cast<std::uint64_t>(spec.input_dim) * gates_of(spec.cell) * spec.hidden;
}

TrainingConfig SequenceTaskConfig::default_training() {
  TrainingConfig t;
  t.learning_rate = 1e-2;
  t.epochs = 50;
  t.batch_size = 32;
  return t;
}

SequenceTaskConfig SequenceTaskConfig::from(const KeyValueConfig& cfg) {
  SequenceTaskConfig c;
  c.task = cfg.get_string("task", c.task);
  if (cfg.contains("cell")) {
    try {
      c.model.cell = parse_cell_kind(cfg.get_string("cell", ""));
    } catch (const ConfigError& e) {
      throw ConfigError(e.what(), cfg.line_of("cell"));
    }
  }
  c.model.input_dim = cfg.get_size("input_dim", c.model.input_dim);
  c.model.hidden = cfg.get_size("hidden", c.model.hidden);
  c.model.classes = cfg.get_size("classes", c.model.classes);
  c.model.d = cfg.get_size("d", c.model.d);
  c.model.R = cfg.get_size("R", c.model.R);
  c.model.N = cfg.get_size("N", c.model.N);
  c.model.input_dims = cfg.find_size_list("input_dims");
  c.model.output_dims = cfg.find_size_list("output_dims");
  if (c.model.input_dims) c.model.d = c.model.input_dims->size();
  c.seq_len = cfg.get_size("seq_len", c.seq_len);
  c.train_size = cfg.get_size("train_size", c.train_size);
  c.test_size = cfg.get_size("test_size", c.test_size);
  c.noise_std = cfg.get_double("noise_std", c.noise_std);
  c.seed = cfg.get_u64("seed", c.seed);
  c.training = read_training_config(cfg, c.training);
  cfg.reject_unknown();
  validate_with_lines(cfg, [&] { c.validate(); });
  return c;
}

void SequenceTaskConfig::validate() const {
  if (task != "templates") throw ConfigError("task must be 'templates', got '" + task + "'");
  model.validate();
  require_positive("seq_len", seq_len);
  require_positive("train_size", train_size);
  require_positive("test_size", test_size);
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  training.validate();
}

template <typename T>
std::pair<std::vector<Sample<T>>, std::vector<Sample<T>>> make_template_task(const SequenceTaskConfig& cfg) {
  const Rng root(cfg.seed);
  const std::size_t C = cfg.model.classes, steps = cfg.seq_len, I = cfg.model.input_dim;
  Rng tr = root.split(11);
  std::vector<std::vector<std::vector<double>>> templates(C);
  for (auto& seq : templates) {
    seq.resize(steps);
    for (auto& x : seq) x = draw_normal<double>(tr, I, 1.0);
  }
  const auto make = [&](std::size_t count, Rng rng) {
    std::vector<Sample<T>> out(count);
    for (std::size_t s = 0; s < count; ++s) {
      out[s].label = s % C;
      out[s].inputs.resize(steps);
      for (std::size_t t = 0; t < steps; ++t) {
        auto& x = out[s].inputs[t];
        x.resize(I);
        const auto& base = templates[out[s].label][t];
        for (std::size_t i = 0; i < I; ++i) x[i] = static_cast<T>(base[i] + cfg.noise_std * rng.normal());
      }
    }
    return out;
  };
  return {make(cfg.train_size, root.split(12)), make(cfg.test_size, root.split(13))};
}

template <typename T>
double majority_baseline(const std::vector<Sample<T>>& train, const std::vector<Sample<T>>& test) {
  if (test.empty()) return 0.0;
  std::vector<std::size_t> counts;
  for (const auto& s : train) {
    if (s.label >= counts.size()) counts.resize(s.label + 1, 0);
    ++counts[s.label];
  }
  const std::size_t majority =
      counts.empty() ? 0 : static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  std::size_t hits = 0;
  for (const auto& s : test) hits += s.label == majority;
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

template <typename T>
double accuracy(const Model<T>& model, const std::vector<Sample<T>>& data) {
  if (data.empty()) return 0.0;
  std::vector<unsigned char> hit(data.size());
  const auto n = static_cast<std::ptrdiff_t>(data.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < n; ++s) {
    const auto out = model.predict(data[s]);
    const auto best = static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
    hit[s] = best == data[s].label;
  }
  return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(data.size());
}

CsvTable SequenceTaskReport::summary_csv(const SequenceTaskConfig& cfg) const {
  CsvTable t;
  t.header = {"task", "cell", "d", "R", "N", "input_dims", "output_dims", "hidden", "classes",
              "seed", "epochs", "test_accuracy", "train_accuracy", "majority_accuracy", "input_map_params",
              "dense_input_map_params", "input_map_fraction", "total_params"};
  std::string in = "-", out = "-";
  if (is_block_term(cfg.model.cell)) {
    const auto shape = cfg.model.shape();
    in = dims_to_string(shape.input_dims());
    out = dims_to_string(shape.output_dims());
  }
  const bool bt = is_block_term(cfg.model.cell);
  t.add_row({cfg.task, cell_kind_name(cfg.model.cell), bt ? std::to_string(cfg.model.d) : "-",
             bt ? std::to_string(cfg.model.R) : "-", bt ? std::to_string(cfg.model.N) : "-", in, out,
             std::to_string(cfg.model.hidden), std::to_string(cfg.model.classes), u64s(cfg.seed),
             std::to_string(cfg.training.epochs), format_real(test_accuracy), format_real(train_accuracy),
             format_real(majority_accuracy), u64s(input_map_params), u64s(dense_input_map_params),
             format_real(static_cast<double>(input_map_params) / static_cast<double>(dense_input_map_params)),
             u64s(total_params)});
  return t;
}

namespace {

template <typename T>
SequenceTaskReport sequence_impl(const SequenceTaskConfig& cfg) {
  auto [train_set, test_set] = make_template_task<T>(cfg);
  auto model = make_classifier<T>(cfg.model, Rng(cfg.seed).split(14).next_u64());

  auto training = cfg.training;
  training.seed = cfg.seed;
  const auto evaluate = [&](const Model<T>& m) { return accuracy<T>(m, test_set); };

  SequenceTaskReport report;
  report.history = train<T>(model, train_set, LossKind::xent, training, evaluate);
  report.test_accuracy = accuracy<T>(model, test_set);
  report.train_accuracy = accuracy<T>(model, train_set);
  report.majority_accuracy = majority_baseline<T>(train_set, test_set);
  report.input_map_params = model.input_map().weight_parameter_count();
  report.dense_input_map_params = dense_input_map_params(cfg.model);
  report.total_params = model.parameter_count();
  report.checkpoint = encode_checkpoint(model);
  return report;
}

}  // namespace

SequenceTaskReport run_sequence_task(const SequenceTaskConfig& cfg) {
  cfg.validate();
  return cfg.training.scalar == ScalarWidth::f64 ? sequence_impl<double>(cfg) : sequence_impl<float>(cfg);
}

// ---------------------------------------------------------------------------

GradCheckConfig GradCheckConfig::from(const KeyValueConfig& cfg) {
  GradCheckConfig c;
  c.model = cfg.get_string("model", c.model);
  c.input_dims = cfg.get_size_list("input_dims", c.input_dims);
  c.output_dims = cfg.get_size_list("output_dims", c.output_dims);
  c.hidden = cfg.get_size("hidden", c.hidden);
  c.classes = cfg.get_size("classes", c.classes);
  c.R = cfg.get_size("R", c.R);
  c.N = cfg.get_size("N", c.N);
  c.seq_len = cfg.get_size("seq_len", c.seq_len);
  c.batch = cfg.get_size("batch", c.batch);
  c.step = cfg.get_double("step", c.step);
  c.extrapolate = cfg.get_bool("extrapolate", c.extrapolate);
  c.tolerance = cfg.get_double("tolerance", c.tolerance);
  c.max_coordinates = cfg.get_size("max_coordinates", c.max_coordinates);
  c.seed = cfg.get_u64("seed", c.seed);
  cfg.reject_unknown();
  validate_with_lines(cfg, [&] { c.validate(); });
  return c;
}

void GradCheckConfig::validate() const {
  if (model != "bt-linear") (void)parse_cell_kind(model);
  require_positive_list("input_dims", input_dims);
  require_positive_list("output_dims", output_dims);
  require_positive("hidden", hidden);
  require_positive("R", R);
  require_positive("N", N);
  require_positive("seq_len", seq_len);
  require_positive("batch", batch);
  require_positive("max_coordinates", max_coordinates);
  if (classes < 2) throw ConfigError("classes must be >= 2");
  if (!(step > 0.0)) throw ConfigError("step must be > 0");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be > 0");
  if (model == "bt-linear" && output_dims.size() != input_dims.size()) {
    throw ConfigError("output_dims must have as many modes as input_dims");
  }
}

CsvTable GradCheckReport::to_csv(const GradCheckConfig& cfg) const {
  CsvTable t;
  t.header = {"model", "parameters", "coordinates", "max_rel_error", "worst_block", "worst_index",
              "worst_analytic", "worst_numeric", "step", "extrapolate", "tolerance", "passed"};
  t.add_row({cfg.model, std::to_string(parameter_count), std::to_string(result.coordinates),
             format_real(result.max_rel_error), std::to_string(result.worst_block), std::to_string(result.worst_index),
             format_real(result.worst_analytic), format_real(result.worst_numeric), format_real(cfg.step),
             cfg.extrapolate ? "1" : "0", format_real(cfg.tolerance), passed ? "1" : "0"});
  return t;
}

GradCheckReport run_gradcheck(const GradCheckConfig& cfg) {
  cfg.validate();
  const Rng root(cfg.seed);
  Rng data_rng = root.split(21);
  const std::size_t I = product(cfg.input_dims);
  GradCheckOptions options;
  options.step = cfg.step;
  options.extrapolate = cfg.extrapolate;
  options.max_coordinates = cfg.max_coordinates;
  options.seed = root.split(22).next_u64();

  GradCheckReport report;
  if (cfg.model == "bt-linear") {
    const FactorizedShape shape(cfg.input_dims, cfg.output_dims);
    auto map = BTLinear<double>::block_term(init_btd<double>(shape, cfg.N, cfg.R, root.split(23).next_u64()), true);
    Rng br = root.split(24);
    for (auto& b : map.bias()) b = br.normal(0.0, 0.1);
    LinearRegressor<double> model(std::move(map));
    std::vector<Sample<double>> batch(cfg.batch);
    for (auto& s : batch) {
      s.inputs.push_back(draw_normal<double>(data_rng, I, 1.0));
      s.target = draw_normal<double>(data_rng, shape.output_size(), 1.0);
    }
    report.result = grad_check<double>(model, batch, LossKind::mse, options);
    report.parameter_count = model.parameter_count();
  } else {
    ModelSpec spec;
    spec.cell = parse_cell_kind(cfg.model);
    spec.input_dim = I;
    spec.hidden = cfg.hidden;
    spec.classes = cfg.classes;
    spec.d = cfg.input_dims.size();
    spec.R = cfg.R;
    spec.N = cfg.N;
    spec.input_dims = cfg.input_dims;
    auto model = make_classifier<double>(spec, root.split(23).next_u64());
    std::vector<Sample<double>> batch(cfg.batch);
    for (auto& s : batch) {
      for (std::size_t t = 0; t < cfg.seq_len; ++t) s.inputs.push_back(draw_normal<double>(data_rng, I, 1.0));
      s.label = data_rng.uniform_index(cfg.classes);
    }
    report.result = grad_check<double>(model, batch, LossKind::xent, options);
    report.parameter_count = model.parameter_count();
  }
  report.passed = report.result.max_rel_error < cfg.tolerance;
  return report;
}

#define BTRNN_INSTANTIATE(T)                                                                                \
  template SequenceClassifier<T> make_classifier(const ModelSpec&, std::uint64_t);                         \
  template std::pair<std::vector<Sample<T>>, std::vector<Sample<T>>> make_template_task(                    \
      const SequenceTaskConfig&);                                                                           \
  template double majority_baseline(const std::vector<Sample<T>>&, const std::vector<Sample<T>>&);           \
  template double accuracy(const Model<T>&, const std::vector<Sample<T>>&);

BTRNN_INSTANTIATE(float)
BTRNN_INSTANTIATE(double)
#undef BTRNN_INSTANTIATE

}  // namespace btrnn
