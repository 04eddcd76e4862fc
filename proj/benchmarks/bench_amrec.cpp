// Microbenchmarks for the hot paths: the projector pair, filtered
// backprojection, the extractor forward/adjoint sweeps, and one full
// solver iteration at a realistic problem size.

#include <benchmark/benchmark.h>

#include "amrec/conv.hpp"
#include "amrec/geometry.hpp"
#include "amrec/init.hpp"
#include "amrec/objective.hpp"
#include "amrec/phantom.hpp"
#include "amrec/radon.hpp"
#include "amrec/regularizer.hpp"
#include "amrec/rng.hpp"
#include "amrec/solver.hpp"
#include "amrec/tensor.hpp"

namespace {

using namespace amrec;

Geometry bench_geometry(std::size_t n) {
  return Geometry{n, n, static_cast<std::size_t>(1.45 * double(n)) | 1};
}

void bm_project(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const Geometry geom = bench_geometry(n);
  Tensor img = shepp_logan(n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(project(geom, img));
  }
}
BENCHMARK(bm_project)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void bm_backproject(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const Geometry geom = bench_geometry(n);
  Tensor sino = project(geom, shepp_logan(n));
  for (auto _ : state) {
    benchmark::DoNotOptimize(backproject(geom, sino));
  }
}
BENCHMARK(bm_backproject)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void bm_fbp(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const Geometry geom = bench_geometry(n);
  Tensor sino = project(geom, shepp_logan(n));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fbp(geom, sino));
  }
}
BENCHMARK(bm_fbp)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void bm_extractor_forward(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Regularizer reg = make_tv_regularizer(0.05);
  Tensor img = shepp_logan(n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(extract_features(reg, img));
  }
}
BENCHMARK(bm_extractor_forward)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void bm_smoothed_grad(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Regularizer reg = make_tv_regularizer(0.05);
  Tensor img = shepp_logan(n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(smoothed_grad(reg, img, 0.25));
  }
}
BENCHMARK(bm_smoothed_grad)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void bm_deep_extractor_grad(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(7);
  Regularizer reg = make_random_regularizer(3, 8, 3, 3, 0.1, rng);
  Tensor img = shepp_logan(n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(smoothed_grad(reg, img, 0.25));
  }
}
BENCHMARK(bm_deep_extractor_grad)->Arg(128)->Unit(benchmark::kMillisecond);

void bm_completion(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const Geometry geom = bench_geometry(n);
  const ViewSelector sel{4, 0};
  Tensor s0 = select_views(geom, sel, project(geom, shepp_logan(n)));
  ViewAdvanceMap blend = make_interpolation_advance(4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(complete_sinogram(blend, geom, s0));
  }
}
BENCHMARK(bm_completion)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void bm_solver_step(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const Geometry geom = bench_geometry(n);
  const ViewSelector sel{2, 0};
  Tensor full = project(geom, shepp_logan(n));
  FidelityModel model{geom, sel, select_views(geom, sel, full), 1.0};
  Regularizer reg_r = make_tv_regularizer(0.05);
  Regularizer reg_q = make_sinogram_tv_regularizer(0.05);
  SolverProblem problem{&model, &reg_r, &reg_q};

  SolverParams params;
  params.eps0 = 0.5;
  params.beta = 0.9 / fidelity_lipschitz(model);
  params.bar_beta = params.beta;

  InitPair warm = init_pair(make_interpolation_advance(2), geom, model.s0);
  SolverState st = make_state(problem, params, warm.x0, warm.z0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(solver_step(problem, params, st));
  }
}
BENCHMARK(bm_solver_step)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
