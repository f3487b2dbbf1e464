// SPDX-License-Identifier: Apache-2.0
//
// Serial vs OpenMP contraction kernels, and the reordered vs materializing
// forward schedules.

#include <benchmark/benchmark.h>

#include <vector>

#include "btrnn/btd.hpp"
#include "btrnn/contract.hpp"
#include "btrnn/rng.hpp"

using namespace btrnn;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed) {
  Tensor<double> t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

void contraction(benchmark::State& state, Backend backend) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor({n, n}, 1);
  const auto b = random_tensor({n, n}, 2);
  ScopedBackend scope(backend);
  for (auto _ : state) benchmark::DoNotOptimize(mode_product(a, b, Mode{2}, Mode{1}));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

void BM_ContractSerial(benchmark::State& s) { contraction(s, Backend::serial); }
void BM_ContractParallel(benchmark::State& s) { contraction(s, Backend::parallel); }
BENCHMARK(BM_ContractSerial)->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_ContractParallel)->Arg(32)->Arg(128)->Arg(256);

// 4096 -> 256 split as 8^4 -> 4^4, N = 1, R = range(0).
void schedule(benchmark::State& state, bool reordered) {
  const FactorizedShape shape({8, 8, 8, 8}, {4, 4, 4, 4});
  const auto R = static_cast<std::size_t>(state.range(0));
  const auto btd = init_btd<double>(shape, 1, R, 3);
  std::vector<double> x(shape.input_size());
  Rng rng(4);
  for (auto& v : x) v = rng.normal();
  for (auto _ : state) {
    if (reordered)
      benchmark::DoNotOptimize(forward<double>(btd, x));
    else
      benchmark::DoNotOptimize(forward_naive<double>(btd, x));
  }
  state.counters["macs"] = static_cast<double>(reordered ? flops_forward(shape, 1, R) : flops_naive(shape, 1, R));
}

void BM_ForwardReordered(benchmark::State& s) { schedule(s, true); }
void BM_ForwardNaive(benchmark::State& s) { schedule(s, false); }
BENCHMARK(BM_ForwardReordered)->Arg(1)->Arg(2)->Arg(4);
BENCHMARK(BM_ForwardNaive)->Arg(1)->Arg(2)->Arg(4);

}  // namespace

BENCHMARK_MAIN();
