// Serial vs OpenMP kernels at the shapes training and evaluation actually hit.
// Run with OMP_NUM_THREADS set to compare thread counts.

#include <vector>

#include <benchmark/benchmark.h>

#include "buildiff/kernels.hpp"
#include "buildiff/rng.hpp"

namespace {

using namespace buildiff;

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// args: m (rows = batch * points), k, n
template <bool Parallel>
void BM_Matmul(benchmark::State& st) {
  const auto m = static_cast<std::size_t>(st.range(0));
  const auto k = static_cast<std::size_t>(st.range(1));
  const auto n = static_cast<std::size_t>(st.range(2));
  const auto a = random_vec(m * k, 1), b = random_vec(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : st) {
    if constexpr (Parallel) kernels::parallel::matmul(a, b, c, m, k, n);
    else kernels::serial::matmul(a, b, c, m, k, n);
    benchmark::DoNotOptimize(c.data());
  }
  st.counters["GFLOP/s"] = benchmark::Counter(2.0 * m * k * n, benchmark::Counter::kIsIterationInvariantRate,
                                              benchmark::Counter::kIs1000);
}

template <bool Parallel>
void BM_MatmulAddBt(benchmark::State& st) {
  const auto m = static_cast<std::size_t>(st.range(0));
  const auto k = static_cast<std::size_t>(st.range(1));
  const auto n = static_cast<std::size_t>(st.range(2));
  const auto g = random_vec(m * n, 3), b = random_vec(k * n, 4);
  std::vector<double> c(m * k, 0.0);
  for (auto _ : st) {
    if constexpr (Parallel) kernels::parallel::matmul_add_bt(g, b, c, m, k, n);
    else kernels::serial::matmul_add_bt(g, b, c, m, k, n);
    benchmark::DoNotOptimize(c.data());
  }
  st.counters["GFLOP/s"] = benchmark::Counter(2.0 * m * k * n, benchmark::Counter::kIsIterationInvariantRate,
                                              benchmark::Counter::kIs1000);
}

template <bool Parallel>
void BM_MatmulAddAt(benchmark::State& st) {
  const auto m = static_cast<std::size_t>(st.range(0));
  const auto k = static_cast<std::size_t>(st.range(1));
  const auto n = static_cast<std::size_t>(st.range(2));
  const auto a = random_vec(m * k, 5), g = random_vec(m * n, 6);
  std::vector<double> c(k * n, 0.0);
  for (auto _ : st) {
    if constexpr (Parallel) kernels::parallel::matmul_add_at(a, g, c, m, k, n);
    else kernels::serial::matmul_add_at(a, g, c, m, k, n);
    benchmark::DoNotOptimize(c.data());
  }
  st.counters["GFLOP/s"] = benchmark::Counter(2.0 * m * k * n, benchmark::Counter::kIsIterationInvariantRate,
                                              benchmark::Counter::kIs1000);
}

// args: query points, reference points
template <bool Parallel>
void BM_Nearest(benchmark::State& st) {
  const auto nq = static_cast<std::size_t>(st.range(0));
  const auto nr = static_cast<std::size_t>(st.range(1));
  const auto q = random_vec(3 * nq, 7), r = random_vec(3 * nr, 8);
  std::vector<kernels::NearestHit> out(nq);
  for (auto _ : st) {
    if constexpr (Parallel) kernels::parallel::nearest(q, r, out);
    else kernels::serial::nearest(q, r, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_DistanceMatrix(benchmark::State& st) {
  const auto na = static_cast<std::size_t>(st.range(0));
  const auto nb = static_cast<std::size_t>(st.range(1));
  const auto a = random_vec(3 * na, 9), b = random_vec(3 * nb, 10);
  std::vector<double> out(na * nb);
  for (auto _ : st) {
    if constexpr (Parallel) kernels::parallel::distance_matrix(a, b, out);
    else kernels::serial::distance_matrix(a, b, out);
    benchmark::DoNotOptimize(out.data());
  }
}

// Toy base model: batch 8 x 256 points = 2048 rows through 64- to 256-wide layers.
void matmul_shapes(benchmark::internal::Benchmark* b) {
  b->Args({2048, 64, 64})->Args({2048, 128, 64})->Args({2048, 64, 3})->Args({2048, 256, 256});
}

void cloud_shapes(benchmark::internal::Benchmark* b) {
  b->Args({256, 256})->Args({2048, 2048});
}

}  // namespace

BENCHMARK(BM_Matmul<false>)->Apply(matmul_shapes)->Name("matmul/serial");
BENCHMARK(BM_Matmul<true>)->Apply(matmul_shapes)->Name("matmul/parallel");
BENCHMARK(BM_MatmulAddBt<false>)->Apply(matmul_shapes)->Name("matmul_add_bt/serial");
BENCHMARK(BM_MatmulAddBt<true>)->Apply(matmul_shapes)->Name("matmul_add_bt/parallel");
BENCHMARK(BM_MatmulAddAt<false>)->Apply(matmul_shapes)->Name("matmul_add_at/serial");
BENCHMARK(BM_MatmulAddAt<true>)->Apply(matmul_shapes)->Name("matmul_add_at/parallel");
BENCHMARK(BM_Nearest<false>)->Apply(cloud_shapes)->Name("nearest/serial");
BENCHMARK(BM_Nearest<true>)->Apply(cloud_shapes)->Name("nearest/parallel");
BENCHMARK(BM_DistanceMatrix<false>)->Apply(cloud_shapes)->Name("distance_matrix/serial");
BENCHMARK(BM_DistanceMatrix<true>)->Apply(cloud_shapes)->Name("distance_matrix/parallel");

BENCHMARK_MAIN();
