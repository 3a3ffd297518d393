// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "farm/numerics/tensor.hpp"
#include "farm/spectral.hpp"

namespace {

farm::num::Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  farm::num::Tensor t({r, c});
  for (double& v : t.data()) v = u(rng);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor(n, 92, 1);
  const auto b = random_tensor(92, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(farm::num::matmul(a, b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * 92 * 64));
}
BENCHMARK(BM_Matmul)->Arg(50)->Arg(12800);

void BM_SoftmaxRows(benchmark::State& state) {
  const auto x = random_tensor(50, 50, 3);
  for (auto _ : state) benchmark::DoNotOptimize(farm::num::softmax_rows(x));
}
BENCHMARK(BM_SoftmaxRows);

void BM_LowPass(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor(n, 92, 4);
  for (auto _ : state) benchmark::DoNotOptimize(farm::spectral::low_pass(x, {5}));
}
BENCHMARK(BM_LowPass)->Arg(8)->Arg(50);

void BM_LowPassProjection(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(farm::spectral::low_pass_projection(50, {5}));
}
BENCHMARK(BM_LowPassProjection);

}  // namespace
