#include "ksbo/acquisition.hpp"
#include "ksbo/equilibrium.hpp"
#include "ksbo/gp.hpp"
#include "ksbo/pareto.hpp"
#include "ksbo/problems.hpp"
#include "ksbo/rng.hpp"
#include "ksbo/strategies.hpp"

#include <benchmark/benchmark.h>

#include <vector>

namespace {

using namespace ksbo;

Matrix random_matrix(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, p);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < p; ++c) m(r, c) = rng.normal();
  return m;
}

void BM_ParetoFilterRowMajor(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int p = static_cast<int>(state.range(1));
  const RowMatrix values = random_matrix(n, p, 42);
  ParetoWorkspace ws;
  for (auto _ : state) {
    pareto_filter_rowmajor(values.data(), n, p, ws);
    benchmark::DoNotOptimize(ws.mask.data());
  }
}
BENCHMARK(BM_ParetoFilterRowMajor)->Args({250, 6})->Args({1000, 6})->Args({100000, 6});

void BM_DrawEquilibrium(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int p = 6;
  const RowMatrix values = random_matrix(n, p, 7);
  DrawEqWorkspace ws;
  Vector out(p);
  for (auto _ : state) {
    benchmark::DoNotOptimize(draw_equilibrium(values.data(), n, p, EquilibriumKind::KS, nullptr,
                                              nullptr, ws, out.data()));
  }
}
BENCHMARK(BM_DrawEquilibrium)->Arg(250)->Arg(1000);

// One fitted hartman6 state shared across the heavy benchmarks.
struct SurFixture {
  Problem problem = parse_problem_id("hartman6@1e5", 7);
  StrategyParams params;
  RunState state;

  SurFixture() {
    params.mode = EquilibriumKind::KS;
    state = init_design(problem, 12, 1, params);
  }
};

SurFixture& fixture() {
  static SurFixture f;
  return f;
}

void BM_PosteriorMarginal100k(benchmark::State& state) {
  auto& f = fixture();
  const Matrix& pts = f.problem.domain->points;
  for (auto _ : state) {
    for (const auto& model : f.state.models) {
      const MarginalPrediction pred = posterior_marginal(model, pts);
      benchmark::DoNotOptimize(pred.mean.data());
    }
  }
}
BENCHMARK(BM_PosteriorMarginal100k)->Unit(benchmark::kMillisecond);

void BM_SurStep(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    RunState copy = f.state;
    const StepInfo info = sur_step(copy, f.params);
    benchmark::DoNotOptimize(info.criterion_value);
  }
}
BENCHMARK(BM_SurStep)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace

BENCHMARK_MAIN();
