// Serial reference kernels against their OpenMP versions.
#include <benchmark/benchmark.h>

#include <random>
#include <span>
#include <vector>

#include "clusmfl/kernels.hpp"

namespace {

using clusmfl::Matrix;
namespace k = clusmfl::kernels;

Matrix random_matrix(std::size_t rows, std::size_t cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = dist(rng);
  return m;
}

template <Matrix (*Fn)(const Matrix&, const Matrix&)>
void BM_MatmulNt(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 90, 1);
  const Matrix b = random_matrix(64, 90, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * 64 * 90));
}

template <Matrix (*Fn)(const Matrix&, const Matrix&)>
void BM_MatmulTn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 64, 1);
  const Matrix b = random_matrix(n, 90, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(a, b));
}

template <Matrix (*Fn)(const Matrix&)>
void BM_Distances(benchmark::State& state) {
  const Matrix p = random_matrix(static_cast<std::size_t>(state.range(0)), 32, 3);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(p));
}

template <std::vector<std::size_t> (*Fn)(const Matrix&)>
void BM_NearestNeighbors(benchmark::State& state) {
  const Matrix p = random_matrix(static_cast<std::size_t>(state.range(0)), 32, 4);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(p));
}

using WeightedSumFn = void (*)(std::span<const std::span<const double>>,
                               std::span<const double>, std::span<double>);

template <WeightedSumFn Fn>
void BM_WeightedSum(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const Matrix params = random_matrix(10, len, 5);
  std::vector<std::span<const double>> inputs;
  for (std::size_t i = 0; i < 10; ++i) inputs.push_back(params.row(i));
  const std::vector<double> w(10, 0.1);
  std::vector<double> out(len);
  for (auto _ : state) {
    Fn(inputs, w, out);
    benchmark::ClobberMemory();
  }
}

}  // namespace

BENCHMARK(BM_MatmulNt<k::serial::matmul_nt>)->Name("matmul_nt/serial")->Arg(100)->Arg(1000);
BENCHMARK(BM_MatmulNt<k::omp::matmul_nt>)->Name("matmul_nt/omp")->Arg(100)->Arg(1000);
BENCHMARK(BM_MatmulTn<k::serial::matmul_tn>)->Name("matmul_tn/serial")->Arg(100)->Arg(1000);
BENCHMARK(BM_MatmulTn<k::omp::matmul_tn>)->Name("matmul_tn/omp")->Arg(100)->Arg(1000);
BENCHMARK(BM_Distances<k::serial::pairwise_sq_distances>)->Name("distances/serial")->Arg(64)->Arg(512);
BENCHMARK(BM_Distances<k::omp::pairwise_sq_distances>)->Name("distances/omp")->Arg(64)->Arg(512);
BENCHMARK(BM_NearestNeighbors<k::serial::nearest_neighbors>)->Name("first_nn/serial")->Arg(64)->Arg(512);
BENCHMARK(BM_NearestNeighbors<k::omp::nearest_neighbors>)->Name("first_nn/omp")->Arg(64)->Arg(512);
BENCHMARK(BM_WeightedSum<k::serial::weighted_sum>)->Name("weighted_sum/serial")->Arg(10000)->Arg(200000);
BENCHMARK(BM_WeightedSum<k::omp::weighted_sum>)->Name("weighted_sum/omp")->Arg(10000)->Arg(200000);

BENCHMARK_MAIN();
