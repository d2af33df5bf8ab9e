// Parallel audit kernels against their serial references.
#include <benchmark/benchmark.h>

#include <random>

#include "synthgym/privacy.hpp"
#include "synthgym/stats.hpp"
#include "synthgym/toy.hpp"
#include "synthgym/validate.hpp"

using namespace synthgym;

namespace {

Panel toy(std::size_t patients, std::uint64_t seed) {
  ToyPanelConfig c;
  c.patients = patients;
  c.seed = seed;
  return make_toy_panel(c);
}

std::vector<double> ranks(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = static_cast<double>(gen() % 97);
  return x;
}

void BM_MinDistance(benchmark::State& st) {
  const Panel a = toy(st.range(0), 1), b = toy(st.range(0), 2);
  for (auto _ : st) benchmark::DoNotOptimize(min_euclidean_distance(a, b));
}
void BM_MinDistanceSerial(benchmark::State& st) {
  const Panel a = toy(st.range(0), 1), b = toy(st.range(0), 2);
  for (auto _ : st) benchmark::DoNotOptimize(serial::min_euclidean_distance(a, b));
}

void BM_Stage2(benchmark::State& st) {
  const Panel a = toy(500, 1), b = toy(500, 2);
  Stage2Config c;
  for (auto _ : st) benchmark::DoNotOptimize(stage2_run(a, b, c));
}
void BM_Stage2Serial(benchmark::State& st) {
  const Panel a = toy(500, 1), b = toy(500, 2);
  Stage2Config c;
  for (auto _ : st) benchmark::DoNotOptimize(serial::stage2_run(a, b, c));
}

void BM_StaticCorrelations(benchmark::State& st) {
  const Panel a = toy(st.range(0), 3);
  for (auto _ : st) benchmark::DoNotOptimize(static_correlations(a));
}
void BM_StaticCorrelationsSerial(benchmark::State& st) {
  const Panel a = toy(st.range(0), 3);
  for (auto _ : st) benchmark::DoNotOptimize(serial::static_correlations(a));
}

void BM_DynamicCorrelations(benchmark::State& st) {
  const Panel a = toy(st.range(0), 4);
  for (auto _ : st) benchmark::DoNotOptimize(dynamic_correlations(a));
}
void BM_DynamicCorrelationsSerial(benchmark::State& st) {
  const Panel a = toy(st.range(0), 4);
  for (auto _ : st) benchmark::DoNotOptimize(serial::dynamic_correlations(a));
}

void BM_KendallTau(benchmark::State& st) {
  const auto x = ranks(st.range(0), 5), y = ranks(st.range(0), 6);
  for (auto _ : st) benchmark::DoNotOptimize(stats::kendall_tau_b(x, y));
}
void BM_KendallTauSerial(benchmark::State& st) {
  const auto x = ranks(st.range(0), 5), y = ranks(st.range(0), 6);
  for (auto _ : st) benchmark::DoNotOptimize(stats::serial::kendall_tau_b(x, y));
}

}  // namespace

BENCHMARK(BM_MinDistance)->Arg(200)->Arg(1000);
BENCHMARK(BM_MinDistanceSerial)->Arg(200)->Arg(1000);
BENCHMARK(BM_Stage2);
BENCHMARK(BM_Stage2Serial);
BENCHMARK(BM_StaticCorrelations)->Arg(500)->Arg(2000);
BENCHMARK(BM_StaticCorrelationsSerial)->Arg(500)->Arg(2000);
BENCHMARK(BM_DynamicCorrelations)->Arg(500)->Arg(2000);
BENCHMARK(BM_DynamicCorrelationsSerial)->Arg(500)->Arg(2000);
BENCHMARK(BM_KendallTau)->Arg(1000)->Arg(10000);
BENCHMARK(BM_KendallTauSerial)->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
