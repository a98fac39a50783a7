// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "scd/random.hpp"
#include "scd/tensor.hpp"

namespace {

scd::Tensor random_tensor(std::size_t r, std::size_t c, bool grad) {
  scd::Rng rng(1);
  std::vector<double> d(r * c);
  for (double &x : d) x = rng.normal();
  return grad ? scd::Tensor::parameter({r, c}, d) : scd::Tensor::from_data({r, c}, d);
}

void BM_Matmul(benchmark::State &state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor(n, n, false), b = random_tensor(n, n, false);
  for (auto _ : state) benchmark::DoNotOptimize(scd::matmul(a, b).data().data());
  state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_ForwardBackwardMlp(benchmark::State &state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor(n, 32, false);
  const auto w1 = random_tensor(32, 64, true), w2 = random_tensor(64, 1, true);
  for (auto _ : state) {
    const auto loss = scd::sum(scd::matmul(scd::silu(scd::matmul(x, w1)), w2));
    scd::backward(loss);
  }
}
BENCHMARK(BM_ForwardBackwardMlp)->Arg(64)->Arg(512);

void BM_ScatterSum(benchmark::State &state) {
  const auto e = static_cast<std::size_t>(state.range(0));
  const auto v = random_tensor(e, 16, false);
  std::vector<std::size_t> idx(e);
  for (std::size_t i = 0; i < e; ++i) idx[i] = i % 64;
  for (auto _ : state) benchmark::DoNotOptimize(scd::scatter_sum(v, idx, 64).data().data());
}
BENCHMARK(BM_ScatterSum)->Arg(1024)->Arg(16384);

}  // namespace

BENCHMARK_MAIN();
