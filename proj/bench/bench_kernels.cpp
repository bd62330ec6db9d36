// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include "crossdiff/kernels.hpp"

using namespace crossdiff;

namespace {

Vec random_vec(size_t n, CounterRng& rng) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

struct GradientFixture {
  DenoiserParams params;
  NoiseSchedule sched = build_schedule(10);
  std::vector<Vec> x0, cond, eps, items;
  std::vector<std::vector<RatingTerm>> ratings;
  std::vector<DiffusionExample> examples;

  explicit GradientFixture(size_t n) : params(DenoiserConfig{}) {
    CounterRng rng(1);
    params = DenoiserParams::random(DenoiserConfig{}, rng);
    for (size_t j = 0; j < 20; ++j) items.push_back(random_vec(32, rng));
    for (size_t i = 0; i < n; ++i) {
      x0.push_back(random_vec(32, rng));
      cond.push_back(random_vec(32, rng));
      Vec e(32);
      rng.fill_normal(e);
      eps.push_back(e);
      std::vector<RatingTerm> rs;
      for (size_t j = 0; j < 10; ++j) rs.push_back({items[(i + j) % items.size()], rng.uniform(0, 5)});
      ratings.push_back(rs);
    }
    for (size_t i = 0; i < n; ++i) examples.push_back({x0[i], cond[i], 1 + i % 10, eps[i], ratings[i]});
  }
};

template <bool Parallel>
void BM_BatchGradient(benchmark::State& state) {
  GradientFixture f(static_cast<size_t>(state.range(0)));
  GradientWorkspace ws;
  BatchResult res;
  for (auto _ : state) {
    if constexpr (Parallel) {
      parallel::batch_gradient(f.params, f.examples, f.sched, 0.5, false, ws, res);
    } else {
      reference::batch_gradient(f.params, f.examples, f.sched, 0.5, false, ws, res);
    }
    benchmark::DoNotOptimize(res.loss_total);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_BatchSample(benchmark::State& state) {
  CounterRng rng(2);
  const auto params = DenoiserParams::random(DenoiserConfig{}, rng);
  std::vector<Vec> conds;
  for (int64_t i = 0; i < state.range(0); ++i) conds.push_back(random_vec(32, rng));
  const auto sched = build_schedule(10);
  const CounterRng base(3);
  for (auto _ : state) {
    auto out = Parallel ? parallel::batch_sample(params, conds, sched, base, MeanParam::kX0Posterior)
                        : reference::batch_sample(params, conds, sched, base, MeanParam::kX0Posterior);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_ProjectTable(benchmark::State& state) {
  CounterRng rng(4);
  FeatureProjector proj(64, 128, 32);
  proj.init(rng);
  EntityTable raw(64);
  for (int64_t i = 0; i < state.range(0); ++i) raw.set("e" + std::to_string(i), random_vec(64, rng));
  for (auto _ : state) {
    auto out = Parallel ? parallel::project_table(raw, proj) : reference::project_table(raw, proj);
    benchmark::DoNotOptimize(out.size());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_BatchGradient<false>)->Name("batch_gradient/reference")->Arg(32)->Arg(128)->Arg(512);
BENCHMARK(BM_BatchGradient<true>)->Name("batch_gradient/parallel")->Arg(32)->Arg(128)->Arg(512);
BENCHMARK(BM_BatchSample<false>)->Name("batch_sample/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_BatchSample<true>)->Name("batch_sample/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_ProjectTable<false>)->Name("project_table/reference")->Arg(300)->Arg(3000);
BENCHMARK(BM_ProjectTable<true>)->Name("project_table/parallel")->Arg(300)->Arg(3000);

BENCHMARK_MAIN();
