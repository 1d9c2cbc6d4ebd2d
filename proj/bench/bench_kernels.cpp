// Serial reference vs OpenMP kernels on a shared toy forest.
#include <benchmark/benchmark.h>

#include "ffloor/baselines.hpp"
#include "ffloor/data_io.hpp"
#include "ffloor/decompose.hpp"
#include "ffloor/forest.hpp"
#include "ffloor/gov.hpp"

namespace {

using namespace ffloor;

struct Fixture {
  ToyData toy;
  FeatureMatrix x;
  ForestModel model;
  ContributionMatrix oob;

  Fixture() {
    ToyConfig c;
    c.n = 2000;
    c.seed = 7;
    toy = simulate_toy(c);
    x = to_matrix(toy.data);
    TrainConfig t;
    t.n_tree = 100;
    t.seed = 7;
    model = train_forest(toy.data, t);
    oob = oob_feature_contributions(model, x);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

Exec mode(const benchmark::State& s) { return s.range(0) ? Exec::parallel : Exec::serial; }

void BM_Train(benchmark::State& s) {
  const auto& f = fixture();
  TrainConfig t;
  t.n_tree = 50;
  for (auto _ : s) benchmark::DoNotOptimize(train_forest(f.toy.data, t, mode(s)));
}

void BM_Predict(benchmark::State& s) {
  const auto& f = fixture();
  for (auto _ : s) benchmark::DoNotOptimize(predict(f.model, f.x, mode(s)));
}

void BM_Contributions(benchmark::State& s) {
  const auto& f = fixture();
  for (auto _ : s) benchmark::DoNotOptimize(feature_contributions(f.model, f.x, mode(s)));
}

void BM_OobContributions(benchmark::State& s) {
  const auto& f = fixture();
  for (auto _ : s) benchmark::DoNotOptimize(oob_feature_contributions(f.model, f.x, mode(s)));
}

void BM_Gov(benchmark::State& s) {
  const auto& f = fixture();
  for (auto _ : s)
    benchmark::DoNotOptimize(gov_score(f.oob, f.x, GovRequest::main_effect(0), mode(s)));
}

void BM_PartialDependence(benchmark::State& s) {
  const auto& f = fixture();
  const GridSpec grid = default_grid(f.toy.data, {1}, 20);
  for (auto _ : s)
    benchmark::DoNotOptimize(partial_dependence(f.model, f.toy.data, grid, mode(s)));
}

}  // namespace

BENCHMARK(BM_Train)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Predict)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Contributions)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_OobContributions)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gov)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PartialDependence)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
