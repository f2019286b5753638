// Serial vs OpenMP kernels. Range argument = number of rows.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "shelflife/kernels.hpp"

namespace k = shelflife::kernels;

namespace {

k::AftDesign make_design(std::size_t n) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  k::AftDesign d;
  d.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = z(rng), s = z(rng);
    d.push_back({1.0, v, s, v * s}, std::log(1.0 + 100.0 * u(rng)), u(rng) < 0.6);
  }
  return d;
}

std::vector<double> make_points(std::size_t n, std::size_t d) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> p(n * d);
  for (double& x : p) x = z(rng);
  return p;
}

const std::array<double, 4> kTheta{3.0, -0.2, 0.1, 0.05};

void BM_aft_serial(benchmark::State& st) {
  const auto d = make_design(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(k::weibull_aft_serial(d, kTheta, -0.3));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_aft_parallel(benchmark::State& st) {
  const auto d = make_design(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(k::weibull_aft_parallel(d, kTheta, -0.3));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_power_sums_serial(benchmark::State& st) {
  const auto d = make_design(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(k::weibull_power_sums_serial(d.log_t, 0.8, 2.0));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_power_sums_parallel(benchmark::State& st) {
  const auto d = make_design(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(k::weibull_power_sums_parallel(d.log_t, 0.8, 2.0));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_pairwise_serial(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto p = make_points(n, 5);
  std::vector<double> out(n * n);
  for (auto _ : st) {
    k::pairwise_euclidean_serial(p, n, 5, out);
    benchmark::ClobberMemory();
  }
}

void BM_pairwise_parallel(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto p = make_points(n, 5);
  std::vector<double> out(n * n);
  for (auto _ : st) {
    k::pairwise_euclidean_parallel(p, n, 5, out);
    benchmark::ClobberMemory();
  }
}

}  // namespace

BENCHMARK(BM_aft_serial)->RangeMultiplier(10)->Range(1000, 1000000);
BENCHMARK(BM_aft_parallel)->RangeMultiplier(10)->Range(1000, 1000000)->UseRealTime();
BENCHMARK(BM_power_sums_serial)->RangeMultiplier(10)->Range(1000, 1000000);
BENCHMARK(BM_power_sums_parallel)->RangeMultiplier(10)->Range(1000, 1000000)->UseRealTime();
BENCHMARK(BM_pairwise_serial)->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK(BM_pairwise_parallel)->RangeMultiplier(4)->Range(64, 4096)->UseRealTime();

BENCHMARK_MAIN();
