#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "twophase/popgen.hpp"
#include "twophase/sampling.hpp"

namespace twophase {
namespace {

std::vector<double> sizes(std::size_t m) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(100.0, 300.0);
  std::vector<double> s(m);
  for (double& v : s) v = u(rng);
  return s;
}

// Arguments: frame size, sample size.
void BM_PpsInclusion(benchmark::State& state) {
  const auto s = sizes(static_cast<std::size_t>(state.range(0)));
  const int n = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(pps_inclusion_probabilities(s, n));
}
BENCHMARK(BM_PpsInclusion)->Args({25, 10})->Args({1000, 100})->Args({100000, 1000});

void BM_SystematicPps(benchmark::State& state) {
  const auto s = sizes(static_cast<std::size_t>(state.range(0)));
  const int n = static_cast<int>(state.range(1));
  Rng rng(9);
  for (auto _ : state) benchmark::DoNotOptimize(systematic_pps_sample(s, n, rng));
}
BENCHMARK(BM_SystematicPps)->Args({25, 10})->Args({1000, 100})->Args({100000, 1000});

void BM_GeneratePopulation(benchmark::State& state) {
  PopulationConfig c;
  std::uint64_t seed = 1;
  for (auto _ : state) {
    c.seed = seed++;
    benchmark::DoNotOptimize(generate_population(c));
  }
}
BENCHMARK(BM_GeneratePopulation)->Unit(benchmark::kMillisecond);

void BM_DrawTwoPhaseSample(benchmark::State& state) {
  const Population pop = generate_population(PopulationConfig{});
  const ScenarioConfig sc = ScenarioConfig::make(Scenario::S1);
  std::uint64_t seed = 1;
  for (auto _ : state) benchmark::DoNotOptimize(draw_two_phase_sample(pop, sc, seed++));
}
BENCHMARK(BM_DrawTwoPhaseSample)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace twophase
