// SPDX-License-Identifier: Apache-2.0
//
// btrnn: command-line driver for the experiments.
//
// Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime
// error, 4 gradient check failed.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "btrnn/config.hpp"
#include "btrnn/csv.hpp"
#include "btrnn/errors.hpp"
#include "btrnn/experiments.hpp"

namespace fs = std::filesystem;
using namespace btrnn;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitCheckFailed = 4;

struct CommonArgs {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
};

KeyValueConfig load_config(const CommonArgs& args) {
  return args.config.empty() ? KeyValueConfig::parse("") : KeyValueConfig::load(args.config);
}

fs::path prepare_out(const CommonArgs& args) {
  const fs::path out(args.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw std::runtime_error("cannot create output directory '" + args.out + "'");
  return out;
}

void print_notices(const std::vector<std::string>& notices) {
  for (const auto& n : notices) std::cerr << "note: " << n << '\n';
}

void print_table(const CsvTable& t) {
  std::vector<std::size_t> width(t.header.size());
  for (std::size_t c = 0; c < t.header.size(); ++c) width[c] = t.header[c].size();
  for (const auto& row : t.rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      std::cout << (c ? "  " : "") << cells[c] << std::string(width[c] - cells[c].size(), ' ');
    }
    std::cout << '\n';
  };
  line(t.header);
  for (const auto& row : t.rows) line(row);
}

int cmd_params(const CommonArgs& args) {
  const auto cfg = ParamsConfig::from(load_config(args));
  const auto out = prepare_out(args);
  const auto table = run_params(cfg);
  const auto csv = table.to_csv();
  write_csv(csv, out / "params.csv");
  print_table(csv);
  print_notices(table.notices);
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  const auto cfg = SweepConfig::from(load_config(args));
  const auto out = prepare_out(args);
  const auto table = run_sweep(cfg);
  const auto csv = table.to_csv();
  write_csv(csv, out / "sweep.csv");
  print_table(csv);
  print_notices(table.notices);
  return 0;
}

int cmd_recover(const CommonArgs& args) {
  auto cfg = RecoveryConfig::from(load_config(args));
  if (args.seed) cfg.seed = *args.seed;
  const auto out = prepare_out(args);
  const auto report = run_recovery(cfg);
  const auto summary = report.summary_csv(cfg);
  write_csv(summary, out / "report.csv");
  write_csv(metrics_csv(report.history), out / "metrics.csv");
  write_grid(report.learned, out / "learned_w.grid");
  write_grid(report.truth, out / "target_w.grid");
  write_text(out / "model.ckpt", report.checkpoint);
  print_table(summary);
  return 0;
}

int cmd_bench(const CommonArgs& args) {
  auto cfg = BenchConfig::from(load_config(args));
  if (args.seed) cfg.seed = *args.seed;
  const auto out = prepare_out(args);
  const auto report = run_benchmark(cfg);
  const auto csv = report.to_csv();
  write_csv(csv, out / "bench.csv");
  print_table(csv);
  print_notices(report.notices);
  for (const auto& v : report.ordering_violations) std::cerr << "warning: " << v << '\n';
  return 0;
}

int cmd_train(const CommonArgs& args) {
  auto cfg = SequenceTaskConfig::from(load_config(args));
  if (args.seed) cfg.seed = *args.seed;
  const auto out = prepare_out(args);
  const auto report = run_sequence_task(cfg);
  const auto summary = report.summary_csv(cfg);
  write_csv(summary, out / "report.csv");
  write_csv(metrics_csv(report.history), out / "metrics.csv");
  write_text(out / "model.ckpt", report.checkpoint);
  print_table(summary);
  return 0;
}

int cmd_gradcheck(const CommonArgs& args) {
  auto cfg = GradCheckConfig::from(load_config(args));
  if (args.seed) cfg.seed = *args.seed;
  const auto out = prepare_out(args);
  const auto report = run_gradcheck(cfg);
  const auto csv = report.to_csv(cfg);
  write_csv(csv, out / "gradcheck.csv");
  print_table(csv);
  if (!report.passed) {
    std::cerr << "gradient check failed: max relative error " << format_real(report.result.max_rel_error)
              << " >= tolerance " << format_real(cfg.tolerance) << '\n';
    return kExitCheckFailed;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block-term tensor RNN toolkit"};
  app.require_subcommand(1);

  CommonArgs args;
  struct Entry {
    const char* name;
    const char* help;
    int (*run)(const CommonArgs&);
  };
  const Entry entries[] = {
      {"params", "Print the parameter-count table", cmd_params},
      {"recover", "Train a block-term layer to recover a synthetic weight matrix", cmd_recover},
      {"sweep", "Parameter-count sweep over core order and Tucker rank", cmd_sweep},
      {"bench", "Multiply-add counts and timing of the forward pass", cmd_bench},
      {"train", "Train a recurrent classifier on the synthetic sequence task", cmd_train},
      {"gradcheck", "Finite-difference check of analytic gradients", cmd_gradcheck},
  };
  int (*selected)(const CommonArgs&) = nullptr;
  for (const auto& e : entries) {
    auto* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", args.config, "key=value config file (defaults apply when omitted)");
    sub->add_option("--out", args.out, "output directory")->capture_default_str();
    sub->add_option("--seed", args.seed, "seed override");
    sub->callback([&selected, run = e.run] { selected = run; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    return selected(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
