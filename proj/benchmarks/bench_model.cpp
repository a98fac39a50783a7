// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "scd/backbone.hpp"
#include "scd/objectives.hpp"
#include "scd/synthetic.hpp"

namespace {

scd::ModelConfig config(std::size_t d) {
  scd::ModelConfig m;
  m.embedding_dim = d;
  m.num_layers = 2;
  m.num_heads = 4;
  m.num_radial_basis = 16;
  return m;
}

void BM_Forward(benchmark::State &state) {
  const scd::Model model(config(static_cast<std::size_t>(state.range(0))));
  const auto data = scd::generate(scd::Family::kMorseClusters, 16, 1);
  const auto batch = scd::GraphBatch::build(data, model.config.cutoff);
  scd::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(scd::forward(model, batch).y.data().data());
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(64);

void BM_ScdStep(benchmark::State &state) {
  scd::Model model(config(static_cast<std::size_t>(state.range(0))));
  const auto data = scd::generate(scd::Family::kConformerPairs, 8, 1);
  scd::ObjectiveConfig cfg;
  scd::ObjectiveState st;
  scd::Rng rng(2);
  for (auto _ : state) {
    const auto r = scd::compute_objective(model, data, cfg, st, rng);
    scd::backward(r.total);
    model.params.zero_grad();
  }
}
BENCHMARK(BM_ScdStep)->Arg(16)->Arg(64);

void BM_NeighborGraph(benchmark::State &state) {
  scd::SyntheticOptions o;
  o.min_atoms = o.max_atoms = static_cast<std::size_t>(state.range(0));
  const auto s = scd::generate(scd::Family::kMorseClusters, 1, 3, o).front();
  for (auto _ : state) benchmark::DoNotOptimize(scd::build_neighbor_graph(s, 5.0).num_edges());
}
BENCHMARK(BM_NeighborGraph)->Arg(32)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
