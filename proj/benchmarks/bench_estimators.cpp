#include <benchmark/benchmark.h>

#include <cstddef>
#include <vector>

#include "prodest/estimators.hpp"
#include "prodest/mcmc.hpp"
#include "prodest/models.hpp"
#include "prodest/rng.hpp"

namespace {

using namespace prodest;

PotentialMatrix random_matrix(std::size_t n, std::size_t N, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<double> logs(n * N);
  for (auto& v : logs) v = -3.0 * rng.uniform();
  return PotentialMatrix(n, N, std::move(logs));
}

void BM_Simple(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto N = static_cast<std::size_t>(state.range(1));
  const auto pm = random_matrix(n, N, 1);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_simple(pm, N / n));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * N));
}
BENCHMARK(BM_Simple)->Args({20, 640})->Args({50, 800})->Args({50, 1600});

void BM_Recycle(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto N = static_cast<std::size_t>(state.range(1));
  const auto pm = random_matrix(n, N, 2);
  RngStream rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_recycle(pm, rng));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * N));
}
BENCHMARK(BM_Recycle)->Args({20, 640})->Args({50, 800})->Args({50, 1600});

void BM_PermExact(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto N = static_cast<std::size_t>(state.range(1));
  const auto pm = random_matrix(n, N, 4);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_perm_exact(pm));
}
BENCHMARK(BM_PermExact)->Args({3, 6})->Args({4, 8})->Args({5, 10});

void BM_PoissonBetaMatrix(benchmark::State& state) {
  const auto N = static_cast<std::size_t>(state.range(0));
  RngStream data_rng(5);
  const std::vector<double> theta{500.0, 2.0, 8.0};
  const PoissonBetaModel model(pb_simulate_data({500.0, 2.0, 8.0, 5.0}, 50, data_rng), 5.0);
  RngStream rng(6);
  for (auto _ : state) {
    const auto zeta = model.sample_particles(theta, N, rng);
    benchmark::DoNotOptimize(model.potential_matrix(theta, zeta));
  }
}
BENCHMARK(BM_PoissonBetaMatrix)->Arg(800)->Arg(1600);

void BM_PoissonBetaLikelihood(benchmark::State& state) {
  const auto N = static_cast<std::size_t>(state.range(0));
  RngStream data_rng(5);
  const std::vector<double> theta{500.0, 2.0, 8.0};
  const PoissonBetaModel model(pb_simulate_data({500.0, 2.0, 8.0, 5.0}, 50, data_rng), 5.0);
  const auto estimator = make_likelihood_estimator(model, EstimatorKind::recycle, N);
  RngStream rng(7);
  for (auto _ : state) benchmark::DoNotOptimize(estimator(theta, rng));
}
BENCHMARK(BM_PoissonBetaLikelihood)->Arg(800)->Arg(1600);

}  // namespace
BENCHMARK_MAIN();
