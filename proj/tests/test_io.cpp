// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <bit>
#include <filesystem>
#include <limits>
#include <random>
#include <vector>

#include "btrnn/checkpoint.hpp"
#include "btrnn/config.hpp"
#include "btrnn/csv.hpp"
#include "btrnn/experiments.hpp"
#include "btrnn/rng.hpp"
#include "oracles.hpp"

using namespace btrnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "btrnn_test_io";
  fs::create_directories(dir);
  return dir / name;
}

template <typename T>
bool bit_identical(const std::vector<std::span<const T>>& a, const std::vector<std::span<const T>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].size() != b[k].size()) return false;
    for (std::size_t e = 0; e < a[k].size(); ++e)
      if (std::bit_cast<std::uint64_t>(static_cast<double>(a[k][e])) !=
          std::bit_cast<std::uint64_t>(static_cast<double>(b[k][e])))
        return false;
  }
  return true;
}

std::size_t error_line(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.line();
  }
  return std::numeric_limits<std::size_t>::max();
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

TEST(Config, RecoveryKeysMapDirectly) {
  const auto cfg = RecoveryConfig::from(KeyValueConfig::parse("d=2\nR=4\nN=1\ndim=64"));
  EXPECT_EQ(cfg.d, 2u);
  EXPECT_EQ(cfg.R, 4u);
  EXPECT_EQ(cfg.N, 1u);
  EXPECT_EQ(cfg.dim, 64u);
}

TEST(Config, ZeroRankRejected) {
  EXPECT_THROW(RecoveryConfig::from(KeyValueConfig::parse("R=0")), ConfigError);
  EXPECT_EQ(error_line([] { RecoveryConfig::from(KeyValueConfig::parse("# c\nR=0")); }), 2u);
}

TEST(Config, EmptyTextGivesDefaults) {
  const auto cfg = RecoveryConfig::from(KeyValueConfig::parse(""));
  const RecoveryConfig defaults;
  EXPECT_EQ(cfg.dim, defaults.dim);
  EXPECT_EQ(cfg.R, defaults.R);
  EXPECT_EQ(cfg.noise_std, defaults.noise_std);
  EXPECT_EQ(cfg.training.epochs, defaults.training.epochs);
  const auto path = scratch("empty.cfg");
  write_text(path, "");
  EXPECT_EQ(RecoveryConfig::from(KeyValueConfig::load(path)).samples, defaults.samples);
}

TEST(Config, UnknownKeyReportsLine) {
  EXPECT_EQ(error_line([] { RecoveryConfig::from(KeyValueConfig::parse("d=2\n\nbogus=1\n")); }), 3u);
}

TEST(Config, SyntaxErrorsReportLine) {
  EXPECT_EQ(error_line([] { KeyValueConfig::parse("d=2\nR 4\n"); }), 2u);
  EXPECT_EQ(error_line([] { KeyValueConfig::parse("d=2\nd=3\n"); }), 2u);
  EXPECT_EQ(error_line([] { KeyValueConfig::parse("=3\n"); }), 1u);
  EXPECT_EQ(error_line([] { RecoveryConfig::from(KeyValueConfig::parse("a=1\nd=two\n")); }), 2u);
}

TEST(Config, TypedGetters) {
  const auto kv = KeyValueConfig::parse("  a = 1,2,4-6  # trailing\nb=yes\nc=-2.5e-1\nname = x y\n");
  EXPECT_EQ(kv.get_size_list("a", {}), (std::vector<std::size_t>{1, 2, 4, 5, 6}));
  EXPECT_TRUE(kv.get_bool("b", false));
  EXPECT_DOUBLE_EQ(kv.get_double("c", 0.0), -0.25);
  EXPECT_EQ(kv.get_string("name", ""), "x y");
  EXPECT_EQ(kv.get_size("missing", 7), 7u);
  EXPECT_NO_THROW(kv.reject_unknown());
  EXPECT_THROW(KeyValueConfig::parse("n=-1").get_size("n", 0), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("n=1.5").get_size("n", 0), ConfigError);
}

TEST(Config, FileNotFound) {
  EXPECT_THROW(KeyValueConfig::load(scratch("does-not-exist.cfg")), ConfigNotFound);
}

TEST(Config, EveryDriverReadsItsKeys) {
  EXPECT_EQ(ParamsConfig::from(KeyValueConfig::parse("dim=16\nd=2\nR=1\nN=1")).input_dim, 16u);
  EXPECT_EQ(SweepConfig::from(KeyValueConfig::parse("R=1-2\nd=1-3")).R_values, (std::vector<std::size_t>{1, 2}));
  EXPECT_FALSE(BenchConfig::from(KeyValueConfig::parse("timing=false\nsizes=16x16")).timing);
  EXPECT_EQ(SequenceTaskConfig::from(KeyValueConfig::parse("cell=bt-gru\nepochs=3")).training.epochs, 3u);
  EXPECT_EQ(GradCheckConfig::from(KeyValueConfig::parse("model=bt-linear")).model, "bt-linear");
  EXPECT_THROW(BenchConfig::from(KeyValueConfig::parse("sizes=16by16")), ConfigError);
}

// ---------------------------------------------------------------------------
// CSV and grids

TEST(Csv, HeaderOnlyWhenEmpty) {
  CsvTable t{{"a", "b"}, {}};
  EXPECT_EQ(t.to_string(), "a,b\n");
  const auto path = scratch("header.csv");
  write_csv(t, path);
  EXPECT_EQ(read_text(path), "a,b\n");
}

TEST(Csv, SeventeenDigitReals) {
  EXPECT_EQ(format_real(0.1), "0.10000000000000001");
  EXPECT_EQ(format_real(1.0), "1");
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const double v = std::bit_cast<double>(gen());
    if (!std::isfinite(v)) continue;
    EXPECT_EQ(std::bit_cast<std::uint64_t>(parse_real(format_real(v))), std::bit_cast<std::uint64_t>(v));
  }
  EXPECT_ANY_THROW(parse_real("1.0x"));
  EXPECT_ANY_THROW(parse_real(""));
}

TEST(Csv, WriteReadRoundTrip) {
  CsvTable t{{"name", "value"}, {}};
  t.add_row({"plain", format_real(0.1)});
  t.add_row({"with,comma", format_real(-1e-300)});
  t.add_row({"with \"quote\"", format_real(12345.678)});
  EXPECT_THROW(t.add_row({"short"}), DimensionMismatch);
  const auto path = scratch("round.csv");
  write_csv(t, path);
  const auto back = read_csv(path);
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_EQ(parse_real(back.rows[0][back.column("value")]), 0.1);
  EXPECT_ANY_THROW(back.column("nope"));
}

TEST(Grid, RoundTripExact) {
  Tensor<double> m({3, 2}, oracle::random_vector<double>(6, 5));
  const auto text = grid_to_string(m);
  EXPECT_EQ(text.rfind("# btrnn-grid 1\n3 2\n", 0), 0u);
  EXPECT_EQ(grid_from_string(text), m);
  const auto path = scratch("m.grid");
  write_grid(m, path);
  EXPECT_EQ(read_grid(path), m);
  EXPECT_ANY_THROW(grid_from_string("# btrnn-grid 1\n2 2\n1 2\n3\n"));
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST(Checkpoint, BtdRoundTrip) {
  const auto btd = oracle::random_btd<double>(FactorizedShape({3, 2, 4}, {2, 3, 1}), 2, 3, 1);
  const auto back = decode_btd<double>(encode_checkpoint(btd));
  EXPECT_EQ(back, btd);
  EXPECT_TRUE(bit_identical(back.parameters(), btd.parameters()));
}

TEST(Checkpoint, EveryModelKindRoundTrips) {
  for (auto kind : {CellKind::bt_lstm, CellKind::bt_gru, CellKind::dense_lstm, CellKind::dense_gru}) {
    ModelSpec spec;
    spec.cell = kind;
    spec.input_dim = 16;
    spec.hidden = 4;
    spec.d = 2;
    const auto m = make_classifier<double>(spec, 9);
    const auto bytes = encode_checkpoint(m);
    EXPECT_EQ(checkpoint_kind(bytes), CheckpointKind::classifier);
    const auto back = decode_classifier<double>(bytes);
    EXPECT_TRUE(back == m) << cell_kind_name(kind);
    EXPECT_TRUE(bit_identical(back.parameters(), m.parameters()));
    EXPECT_EQ(encode_checkpoint(back), bytes);
  }
  const auto lin = BTLinear<double>::block_term(init_btd<double>(FactorizedShape({4, 4}, {2, 2}), 2, 2, 3));
  EXPECT_EQ(decode_linear<double>(encode_checkpoint(lin)), lin);
  const LinearRegressor<double> reg(lin);
  EXPECT_EQ(decode_regressor<double>(encode_checkpoint(reg)).map(), lin);
  const LSTMCell<double> lstm(BTLinear<double>::dense(Tensor<double>({8, 3}), true), Tensor<double>({8, 2}));
  EXPECT_EQ(decode_lstm<double>(encode_checkpoint(lstm)), lstm);
  const GRUCell<double> gru(BTLinear<double>::dense(Tensor<double>({6, 3}), false), Tensor<double>({6, 2}));
  EXPECT_EQ(decode_gru<double>(encode_checkpoint(gru)), gru);
}

TEST(Checkpoint, FileRoundTripGivesIdenticalForward) {
  ModelSpec spec;
  spec.input_dim = 64;
  spec.hidden = 8;
  spec.d = 2;
  const auto m = make_classifier<double>(spec, 4);
  const auto path = scratch("model.ckpt");
  save_checkpoint(m, path);
  const auto back = load_classifier<double>(path);
  Sample<double> s;
  for (std::size_t t = 0; t < 4; ++t) s.inputs.push_back(oracle::random_vector<double>(64, t));
  const auto a = m.predict(s), b = back.predict(s);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t c = 0; c < a.size(); ++c)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(a[c]), std::bit_cast<std::uint64_t>(b[c]));
}

TEST(Checkpoint, FloatModelsRoundTrip) {
  ModelSpec spec;
  spec.input_dim = 16;
  spec.hidden = 4;
  spec.d = 2;
  const auto m = make_classifier<float>(spec, 1);
  EXPECT_TRUE(decode_classifier<float>(encode_checkpoint(m)) == m);
}

TEST(Checkpoint, CorruptHeaderIsVersionError) {
  auto bytes = encode_checkpoint(oracle::random_btd<double>(FactorizedShape({2}, {2}), 1, 1, 1));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_btd<double>(bad_magic), CheckpointVersionError);
  auto bad_version = bytes;
  bad_version[8] = 99;
  EXPECT_THROW(decode_btd<double>(bad_version), CheckpointVersionError);
  EXPECT_THROW(checkpoint_kind("BTR"), CheckpointVersionError);
}

TEST(Checkpoint, TruncationTrailingBytesAndKind) {
  const auto bytes = encode_checkpoint(oracle::random_btd<double>(FactorizedShape({3, 2}, {2, 2}), 2, 2, 1));
  for (std::size_t cut : {std::size_t{16}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1})
    EXPECT_THROW(decode_btd<double>(bytes.substr(0, cut)), CheckpointError) << cut;
  EXPECT_THROW(decode_btd<double>(bytes + "x"), CheckpointError);
  EXPECT_THROW(decode_linear<double>(bytes), CheckpointError);
  // A huge dimension must be rejected before any allocation happens.
  auto huge = bytes;
  for (std::size_t e = 20; e < 28; ++e) huge[e] = static_cast<char>(0xff);
  EXPECT_THROW(decode_btd<double>(huge), CheckpointError);
  EXPECT_THROW(read_checkpoint_bytes(scratch("missing.ckpt")), CheckpointError);
}

// ---------------------------------------------------------------------------
// Rng

TEST(Rng, EngineMatchesStandardSequence) {
  Rng rng(5489);
  std::uint64_t v = 0;
  for (int k = 0; k < 10000; ++k) v = rng.next_u64();
  EXPECT_EQ(v, 9981545732273789042ull);
}

TEST(Rng, DrawsAndSplits) {
  Rng a(3), b(3);
  for (int k = 0; k < 100; ++k) {
    const double u = a.uniform();
    EXPECT_EQ(u, b.uniform());
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(a.uniform_index(7), 7u);
    b.uniform_index(7);
  }
  EXPECT_EQ(Rng(3).split(1).next_u64(), Rng(3).split(1).next_u64());
  EXPECT_NE(Rng(3).split(1).next_u64(), Rng(3).split(2).next_u64());
  double sum = 0.0, sq = 0.0;
  Rng n(11);
  const int count = 20000;
  for (int k = 0; k < count; ++k) {
    const double v = n.normal();
    sum += v;
    sq += v * v;
  }
  EXPECT_NEAR(sum / count, 0.0, 0.05);
  EXPECT_NEAR(sq / count, 1.0, 0.05);
}

TEST(Rng, ShuffleIsPermutation) {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  Rng rng(2);
  rng.shuffle(v.begin(), v.end());
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int k = 0; k < 50; ++k) EXPECT_EQ(sorted[k], k);
  EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
}
