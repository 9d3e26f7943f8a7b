// Serial reference kernels against their OpenMP counterparts.
// Threads come from OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "taso/tensor/kernels.hpp"
#include "taso/tensor/random.hpp"

namespace {

using taso::Matrix;

Matrix filled(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  taso::Rng rng(seed);
  return taso::gaussian_matrix(rows, cols, 1.0, rng);
}

template <Matrix (*Kernel)(const Matrix&, const Matrix&)>
void bm_square(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = filled(n, n, 1);
  const Matrix b = filled(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

// Shape of a rank-1 adapter forward on a batch: (batch x q) * (q x p)^T.
template <Matrix (*Kernel)(const Matrix&, const Matrix&)>
void bm_batch(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const Matrix x = filled(batch, 64, 3);
  const Matrix w = filled(64, 64, 4);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(x, w));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch * 64 * 64));
}

namespace k = taso::kernels;

BENCHMARK(bm_square<k::serial::matmul<double>>)->Name("matmul/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(bm_square<k::parallel::matmul<double>>)->Name("matmul/parallel")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(bm_square<k::serial::matmul_tn<double>>)->Name("matmul_tn/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(bm_square<k::parallel::matmul_tn<double>>)->Name("matmul_tn/parallel")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(bm_batch<k::serial::matmul_nt<double>>)->Name("matmul_nt_batch/serial")->Arg(128)->Arg(1024);
BENCHMARK(bm_batch<k::parallel::matmul_nt<double>>)->Name("matmul_nt_batch/parallel")->Arg(128)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
