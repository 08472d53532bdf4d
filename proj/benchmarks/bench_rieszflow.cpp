#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "rieszflow/grid.hpp"
#include "rieszflow/jko.hpp"
#include "rieszflow/refsolver.hpp"
#include "rieszflow/spectral.hpp"
#include "rieszflow/transport.hpp"

using namespace rieszflow;

namespace {

const ExponentTriple kStd{0.3, 0.3, 0.35};

DensityField bump(const Grid& g, double center, double width) {
  std::vector<double> v(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x = g.center(i);
    if (g.admissible(x)) v[i] = std::exp(-0.5 * (x - center) * (x - center) / (width * width));
  }
  return DensityField::normalized(g, std::move(v));
}

SpeciesPair two_bumps(std::size_t n) {
  const Grid g(n, 8.0);
  return SpeciesPair(bump(g, -0.5, 0.3), bump(g, 0.5, 0.3), kStd);
}

}  // namespace

static void BM_InteractionEnergy(benchmark::State& state) {
  const SpeciesPair p = two_bumps(static_cast<std::size_t>(state.range(0)));
  InteractionOperator op(p.grid(), p.exponents);
  std::vector<double> vr(p.grid().size()), ve(p.grid().size());
  for (auto _ : state) benchmark::DoNotOptimize(op.evaluate(p.rho.values(), p.eta.values(), vr, ve));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_InteractionEnergy)->RangeMultiplier(2)->Range(256, 8192)->Complexity(benchmark::oNLogN);

static void BM_RieszGradient(benchmark::State& state) {
  const SpeciesPair p = two_bumps(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(riesz_gradient(p.rho, 0.3));
}
BENCHMARK(BM_RieszGradient)->RangeMultiplier(4)->Range(256, 4096);

static void BM_W2Quantile(benchmark::State& state) {
  const SpeciesPair p = two_bumps(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(w2_1d(p.rho, p.eta).distance);
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_W2Quantile)->RangeMultiplier(2)->Range(256, 4096)->Complexity(benchmark::oN);

static void BM_Sinkhorn(benchmark::State& state) {
  const SpeciesPair p = two_bumps(static_cast<std::size_t>(state.range(0)));
  SinkhornOptions o;
  o.epsilon = 0.05;
  for (auto _ : state) benchmark::DoNotOptimize(sinkhorn_w2(p.rho, p.eta, o).distance);
}
BENCHMARK(BM_Sinkhorn)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

static void BM_JkoStep(benchmark::State& state) {
  const SpeciesPair p = two_bumps(static_cast<std::size_t>(state.range(0)));
  SolverConfig cfg;
  cfg.tau = 1e-3;
  const JkoIterate start = make_iterate(p, cfg.particle_count(p.grid()));
  for (auto _ : state) benchmark::DoNotOptimize(jko_step(start, cfg, cfg.tau).objective);
}
BENCHMARK(BM_JkoStep)->Arg(256)->Arg(512)->Arg(1024)->Unit(benchmark::kMillisecond);

static void BM_FvStep(benchmark::State& state) {
  const SpeciesPair p = two_bumps(static_cast<std::size_t>(state.range(0)));
  const FvState s{p, 0.0, stable_step(p)};
  for (auto _ : state) benchmark::DoNotOptimize(fv_step(s, 0.4 * s.dt_cfl).time);
}
BENCHMARK(BM_FvStep)->Arg(512)->Arg(2048);

BENCHMARK_MAIN();
