// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "btrnn/cells.hpp"
#include "btrnn/linear.hpp"
#include "oracles.hpp"

using namespace btrnn;

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

Tensor<double> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 0.5) {
  auto v = oracle::random_vector<double>(rows * cols, seed);
  for (auto& e : v) e *= scale;
  return Tensor<double>({rows, cols}, std::move(v));
}

BTLinear<double> bt_map(const FactorizedShape& s, std::uint64_t seed) {
  auto btd = oracle::random_btd<double>(s, 2, 2, seed);
  for (auto block : btd.parameters())
    for (auto& v : block) v *= 0.5;
  auto layer = BTLinear<double>::block_term(std::move(btd));
  const auto b = oracle::random_vector<double>(s.output_size(), seed + 1);
  std::copy(b.begin(), b.end(), layer.bias().begin());
  return layer;
}

// Pre-activations W x + U h + b from the dense oracle matrix.
std::vector<double> preact(const BTLinear<double>& map, const Tensor<double>& u, const std::vector<double>& x,
                           const std::vector<double>& h) {
  const auto w = oracle::btd_dense(map.btd());
  auto a = oracle::matvec(w, map.output_size(), map.input_size(), x);
  const auto uh = oracle::matvec(u.values(), u.shape()[0], u.shape()[1], h);
  for (std::size_t e = 0; e < a.size(); ++e) a[e] += uh[e] + map.bias()[e];
  return a;
}

CellState<double> lstm_oracle(const BTLinear<double>& map, const Tensor<double>& u, const std::vector<double>& x,
                              const CellState<double>& prev) {
  const std::size_t H = prev.h.size();
  const auto a = preact(map, u, x, prev.h);
  CellState<double> next{std::vector<double>(H), std::vector<double>(H)};
  for (std::size_t k = 0; k < H; ++k) {
    const double f = sig(a[k]), i = sig(a[H + k]), g = std::tanh(a[2 * H + k]), o = sig(a[3 * H + k]);
    next.c[k] = f * prev.c[k] + i * g;
    next.h[k] = o * std::tanh(next.c[k]);
  }
  return next;
}

CellState<double> gru_oracle(const BTLinear<double>& map, const Tensor<double>& u, const std::vector<double>& x,
                             const CellState<double>& prev) {
  const std::size_t H = prev.h.size();
  const auto w = oracle::btd_dense(map.btd());
  const auto wx = oracle::matvec(w, map.output_size(), map.input_size(), x);
  std::vector<double> z(H), r(H), rh(H);
  for (std::size_t k = 0; k < H; ++k) {
    double az = wx[k] + map.bias()[k], ar = wx[H + k] + map.bias()[H + k];
    for (std::size_t m = 0; m < H; ++m) {
      az += u.at({k, m}) * prev.h[m];
      ar += u.at({H + k, m}) * prev.h[m];
    }
    z[k] = sig(az);
    r[k] = sig(ar);
    rh[k] = r[k] * prev.h[k];
  }
  CellState<double> next{std::vector<double>(H), {}};
  for (std::size_t k = 0; k < H; ++k) {
    double an = wx[2 * H + k] + map.bias()[2 * H + k];
    for (std::size_t m = 0; m < H; ++m) an += u.at({2 * H + k, m}) * rh[m];
    next.h[k] = z[k] * prev.h[k] + (1.0 - z[k]) * std::tanh(an);
  }
  return next;
}

std::vector<std::vector<double>> random_sequence(std::size_t T, std::size_t I, std::uint64_t seed) {
  std::vector<std::vector<double>> seq;
  for (std::size_t t = 0; t < T; ++t) seq.push_back(oracle::random_vector<double>(I, seed + t));
  return seq;
}

template <typename Cell>
double trajectory_diff(const Cell& a, const Cell& b, const std::vector<std::vector<double>>& seq) {
  const auto sa = unroll<Cell, double>(a, seq, a.initial_state());
  const auto sb = unroll<Cell, double>(b, seq, b.initial_state());
  double worst = 0.0;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    worst = std::max(worst, oracle::max_rel_error(sa[t].h, sb[t].h));
    if (!sb[t].c.empty()) worst = std::max(worst, oracle::max_rel_error(sa[t].c, sb[t].c));
  }
  return worst;
}

}  // namespace

TEST(Lstm, ZeroWeightsGiveZeroState) {
  BTDecomposition<double> btd(FactorizedShape({2, 2}, {4, 2}), 1, 1);
  LSTMCell<double> cell(BTLinear<double>::block_term(btd), Tensor<double>({8, 2}));
  const auto rec = cell.step_record(std::vector<double>{1, 2, 3, 4}, cell.initial_state());
  for (double v : rec.f) EXPECT_EQ(v, 0.5);
  for (double v : rec.i) EXPECT_EQ(v, 0.5);
  for (double v : rec.o) EXPECT_EQ(v, 0.5);
  for (double v : rec.g) EXPECT_EQ(v, 0.0);
  for (double v : rec.c) EXPECT_EQ(v, 0.0);
  for (double v : rec.h) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, MatchesDirectFormula) {
  const FactorizedShape s({2, 3}, {4, 3});  // 6 -> 12 = 4H, H = 3
  const auto map = bt_map(s, 3);
  const auto u = random_matrix(12, 3, 5);
  LSTMCell<double> cell(map, u);
  CellState<double> state{oracle::random_vector<double>(3, 6), oracle::random_vector<double>(3, 7)};
  for (std::size_t t = 0; t < 4; ++t) {
    const auto x = oracle::random_vector<double>(6, 10 + t);
    const auto want = lstm_oracle(map, u, x, state);
    state = cell.step(x, state);
    EXPECT_LT(oracle::max_rel_error(state.h, want.h), 1e-12);
    EXPECT_LT(oracle::max_rel_error(state.c, want.c), 1e-12);
  }
}

TEST(Lstm, BlockTermEqualsDensified) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const FactorizedShape s({2, 2, 2}, {2, 2, 4});  // H = 4
    LSTMCell<double> bt(bt_map(s, seed), random_matrix(16, 4, seed + 50));
    LSTMCell<double> dense(densified(bt.input_map()), bt.recurrent());
    EXPECT_FALSE(dense.input_map().is_block_term());
    EXPECT_LT(trajectory_diff(bt, dense, random_sequence(8, 8, seed * 100)), 1e-10);
  }
}

TEST(Lstm, GateRangesAndShapes) {
  const FactorizedShape s({2, 4}, {4, 4});
  LSTMCell<double> cell(bt_map(s, 9), random_matrix(16, 4, 10, 2.0));
  CellState<double> state = cell.initial_state();
  for (std::size_t t = 0; t < 8; ++t) {
    auto x = oracle::random_vector<double>(8, 200 + t);
    for (auto& v : x) v *= 4.0;
    const auto rec = cell.step_record(x, state);
    for (std::size_t k = 0; k < 4; ++k) {
      for (double v : {rec.f[k], rec.i[k], rec.o[k]}) EXPECT_TRUE(v > 0.0 && v < 1.0);
      EXPECT_TRUE(rec.g[k] > -1.0 && rec.g[k] < 1.0);
      EXPECT_TRUE(rec.tanh_c[k] > -1.0 && rec.tanh_c[k] < 1.0);
    }
    state = CellState<double>{rec.h, rec.c};
    EXPECT_EQ(state.h.size(), 4u);
    EXPECT_EQ(state.c.size(), 4u);
  }
}

TEST(Lstm, DimensionChecks) {
  const FactorizedShape s({2, 2}, {4, 2});
  EXPECT_ANY_THROW(LSTMCell<double>(bt_map(s, 1), Tensor<double>({8, 3})));
  LSTMCell<double> cell(bt_map(s, 1), Tensor<double>({8, 2}));
  EXPECT_THROW(cell.step(std::vector<double>(3), cell.initial_state()), DimensionMismatch);
  EXPECT_THROW(cell.step(std::vector<double>(4), CellState<double>{std::vector<double>(3), std::vector<double>(2)}),
               DimensionMismatch);
}

TEST(Gru, ZeroWeightsHalveState) {
  BTDecomposition<double> btd(FactorizedShape({2, 2}, {3, 2}), 1, 1);
  GRUCell<double> cell(BTLinear<double>::block_term(btd), Tensor<double>({6, 2}));
  const auto rec = cell.step_record(std::vector<double>{1, 2, 3, 4}, cell.initial_state());
  for (double v : rec.z) EXPECT_EQ(v, 0.5);
  for (double v : rec.r) EXPECT_EQ(v, 0.5);
  for (double v : rec.n) EXPECT_EQ(v, 0.0);
  for (double v : rec.h) EXPECT_EQ(v, 0.0);
  const auto next = cell.step(std::vector<double>(4, 0.0), CellState<double>{{2.0, -4.0}, {}});
  EXPECT_EQ(next.h, (std::vector<double>{1.0, -2.0}));
}

TEST(Gru, MatchesDirectFormula) {
  const FactorizedShape s({2, 3}, {3, 3});  // H = 3
  const auto map = bt_map(s, 13);
  const auto u = random_matrix(9, 3, 14);
  GRUCell<double> cell(map, u);
  CellState<double> state{oracle::random_vector<double>(3, 15), {}};
  for (std::size_t t = 0; t < 4; ++t) {
    const auto x = oracle::random_vector<double>(6, 20 + t);
    const auto want = gru_oracle(map, u, x, state);
    state = cell.step(x, state);
    EXPECT_LT(oracle::max_rel_error(state.h, want.h), 1e-12);
    EXPECT_TRUE(state.c.empty());
  }
}

TEST(Gru, BlockTermEqualsDensified) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const FactorizedShape s({2, 4}, {3, 4});  // H = 4
    GRUCell<double> bt(bt_map(s, seed + 7), random_matrix(12, 4, seed + 60));
    GRUCell<double> dense(densified(bt.input_map()), bt.recurrent());
    EXPECT_LT(trajectory_diff(bt, dense, random_sequence(8, 8, seed * 100 + 1)), 1e-10);
  }
}

TEST(Gru, ConvexCombinationAndRanges) {
  const FactorizedShape s({2, 4}, {3, 4});
  GRUCell<double> cell(bt_map(s, 3), random_matrix(12, 4, 4, 2.0));
  CellState<double> state{oracle::random_vector<double>(4, 5), {}};
  for (std::size_t t = 0; t < 8; ++t) {
    auto x = oracle::random_vector<double>(8, 300 + t);
    for (auto& v : x) v *= 4.0;
    const auto rec = cell.step_record(x, state);
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_TRUE(rec.z[k] > 0.0 && rec.z[k] < 1.0);
      EXPECT_TRUE(rec.r[k] > 0.0 && rec.r[k] < 1.0);
      EXPECT_TRUE(rec.n[k] > -1.0 && rec.n[k] < 1.0);
      const double lo = std::min(state.h[k], rec.n[k]), hi = std::max(state.h[k], rec.n[k]);
      EXPECT_GE(rec.h[k], lo - 1e-15);
      EXPECT_LE(rec.h[k], hi + 1e-15);
    }
    state = CellState<double>{rec.h, {}};
  }
}

TEST(Unroll, EmptyAndManualComposition) {
  const FactorizedShape s({2, 2}, {4, 2});
  LSTMCell<double> cell(bt_map(s, 1), random_matrix(8, 2, 2));
  const CellState<double> init{{0.3, -0.2}, {0.1, 0.4}};
  const std::vector<std::vector<double>> empty;
  EXPECT_TRUE((unroll<LSTMCell<double>, double>(cell, empty, init)).empty());

  const auto seq = random_sequence(3, 4, 40);
  const auto states = unroll<LSTMCell<double>, double>(cell, seq, init);
  ASSERT_EQ(states.size(), 3u);
  auto manual = cell.step(seq[0], init);
  EXPECT_EQ(states[0], manual);
  manual = cell.step(seq[1], manual);
  EXPECT_EQ(states[1], manual);
  manual = cell.step(seq[2], manual);
  EXPECT_EQ(states[2], manual);
}

TEST(Linear, DenseAndBiasHandling) {
  Tensor<double> w({2, 3}, {1, 2, 3, 4, 5, 6});
  auto layer = BTLinear<double>::dense(w);
  layer.bias() = {0.5, -0.5};
  EXPECT_EQ(layer.forward(std::vector<double>{1, 0, -1}), (std::vector<double>{-1.5, -2.5}));
  EXPECT_EQ(layer.weight_parameter_count(), 6u);
  EXPECT_EQ(layer.parameters().size(), 2u);
  const auto no_bias = BTLinear<double>::dense(w, false);
  EXPECT_FALSE(no_bias.has_bias());
  EXPECT_EQ(no_bias.parameters().size(), 1u);
}

TEST(Linear, BlockTermParameterCount) {
  const FactorizedShape s({8, 8}, {8, 8});
  const auto layer = BTLinear<double>::block_term(BTDecomposition<double>(s, 1, 4));
  EXPECT_EQ(layer.weight_parameter_count(), 528u);
  EXPECT_EQ(layer.bias().size(), 64u);
}
