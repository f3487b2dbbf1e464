// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "btrnn/csv.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kOut = fs::temp_directory_path() / "btrnn_test_cli";

int run(const std::string& args) {
  const std::string cmd = std::string("\"") + BTRNN_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string out_dir(const std::string& name) { return (kOut / name).string(); }

fs::path write_config(const std::string& name, const std::string& text) {
  fs::create_directories(kOut);
  const auto p = kOut / name;
  btrnn::write_text(p, text);
  return p;
}

}  // namespace

TEST(Cli, ParamsWritesCsv) {
  ASSERT_EQ(run("params --out " + out_dir("params")), 0);
  const auto table = btrnn::read_csv(kOut / "params" / "params.csv");
  bool saw129 = false;
  for (const auto& row : table.rows) saw129 = saw129 || row[table.column("param_count")] == "129";
  EXPECT_TRUE(saw129);
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("params --no-such-flag"), 1);
  EXPECT_EQ(run("recover --seed notanumber"), 1);
  EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, ConfigErrorsExitTwo) {
  EXPECT_EQ(run("recover --config " + write_config("bad.cfg", "R=0\n").string() + " --out " + out_dir("bad")), 2);
  EXPECT_EQ(run("params --config " + write_config("unknown.cfg", "colour=blue\n").string() + " --out " +
                out_dir("bad")),
            2);
  EXPECT_EQ(run("sweep --config " + (kOut / "missing.cfg").string()), 2);
}

TEST(Cli, GradcheckPassesAndSeedOverrideIsUsed) {
  const auto cfg = write_config("gc.cfg", "model=bt-linear\n");
  ASSERT_EQ(run("gradcheck --config " + cfg.string() + " --seed 3 --out " + out_dir("gc")), 0);
  const auto t = btrnn::read_csv(kOut / "gc" / "gradcheck.csv");
  EXPECT_EQ(t.rows.at(0)[t.column("passed")], "1");
}

TEST(Cli, GradcheckFailureExitsFour) {
  // A tolerance no finite-difference estimate can meet.
  const auto cfg = write_config("gc_strict.cfg", "model=bt-lstm\ntolerance=1e-300\n");
  EXPECT_EQ(run("gradcheck --config " + cfg.string() + " --out " + out_dir("gc_strict")), 4);
}

TEST(Cli, BenchRunsAreByteIdenticalWithoutTiming) {
  const auto cfg = write_config("bench.cfg", "sizes=64x64\nd=1,2\nR=1,2\nN=1\ntiming=false\n");
  ASSERT_EQ(run("bench --config " + cfg.string() + " --out " + out_dir("bench_a")), 0);
  ASSERT_EQ(run("bench --config " + cfg.string() + " --out " + out_dir("bench_b")), 0);
  EXPECT_EQ(btrnn::read_text(kOut / "bench_a" / "bench.csv"), btrnn::read_text(kOut / "bench_b" / "bench.csv"));
}

TEST(Cli, RecoverWritesAllArtifacts) {
  const auto cfg = write_config("rec.cfg", "epochs=2\nsamples=64\n");
  ASSERT_EQ(run("recover --config " + cfg.string() + " --out " + out_dir("rec")), 0);
  for (const char* f : {"report.csv", "metrics.csv", "learned_w.grid", "target_w.grid", "model.ckpt"})
    EXPECT_TRUE(fs::exists(kOut / "rec" / f)) << f;
}
