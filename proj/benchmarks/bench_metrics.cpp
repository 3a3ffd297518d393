// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "farm/metrics.hpp"

namespace {

std::vector<farm::metrics::ScoredSample> samples(std::size_t n) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<farm::metrics::ScoredSample> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {i % 500, u(rng), u(rng) < 0.1};
  return out;
}

void BM_Auc(benchmark::State& state) {
  const auto s = samples(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(farm::metrics::auc(s));
}
BENCHMARK(BM_Auc)->Arg(10000);

void BM_Gauc(benchmark::State& state) {
  const auto s = samples(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(farm::metrics::gauc(s));
}
BENCHMARK(BM_Gauc)->Arg(10000);

}  // namespace
