// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "farm/data.hpp"
#include "farm/model.hpp"
#include "farm/numerics/optim.hpp"
#include "farm/trainer.hpp"

namespace {

struct Fixture {
  Fixture() {
    farm::data::StreamConfig sc;
    sc.n_users = 200;
    events = farm::data::generate_stream(sc);
    vocab = sc.vocab();
    set.emplace(events, vocab, 50, 6 * farm::data::kSecondsPerDay, INT64_MAX);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < 256 && i < set->size(); ++i) idx.push_back(i);
    batch = farm::train::gather(*set, idx);
  }
  std::vector<farm::data::InteractionEvent> events;
  farm::FeatureVocab vocab;
  std::optional<farm::data::SampleSet> set;
  std::vector<farm::SampleInput> batch;
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_Forward(benchmark::State& state) {
  const auto& f = fixture();
  const farm::model::FarmModel model({}, f.vocab);
  const auto params = model.init_params(1);
  for (auto _ : state) {
    farm::num::Tape tape(false);
    benchmark::DoNotOptimize(model.forward(tape, params, f.batch).total.scalar());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * f.batch.size()));
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto& f = fixture();
  const farm::model::FarmModel model({}, f.vocab);
  auto params = model.init_params(1);
  for (auto _ : state) {
    farm::num::Tape tape;
    const auto fw = model.forward(tape, params, f.batch);
    tape.backward(fw.total, params);
    farm::num::adam_step(params, farm::num::AdamConfig{});
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * f.batch.size()));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
