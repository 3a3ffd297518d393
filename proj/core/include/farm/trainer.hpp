// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "farm/data.hpp"
#include "farm/dataset_io.hpp"
#include "farm/error.hpp"
#include "farm/model.hpp"
#include "farm/run_config.hpp"

namespace farm::train {

// Raised when the loss stops being finite.
class TrainingError : public Error {
 public:
  using Error::Error;
};

struct TaskMetrics {
  std::optional<double> auc;
  std::optional<double> uauc;
  std::optional<double> gauc;
  std::size_t positives = 0;
};

struct EvalReport {
  std::size_t n_samples = 0;
  std::array<TaskMetrics, kNumTasks> tasks;
  double l_xtrs = 0.0;
  spectral::FrequencyGates gate_mean;

  // Mean AUC over the tasks where it is defined, restricted to `tasks`.
  std::optional<double> mean_auc(std::span<const std::size_t> tasks) const;
};

struct EpochLog {
  int epoch = 0;
  double mean_total = 0.0;
  double mean_xtrs = 0.0;
  double mean_cl = 0.0;
  std::optional<EvalReport> eval;
};

struct RunReport {
  std::string config_text;
  std::string config_hash;
  std::string dataset_hash;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<double> batch_losses;  // total loss per optimizer step
  std::vector<EpochLog> epochs;
  EvalReport test;
  double wall_seconds = 0.0;

  std::string to_json() const;
  std::string to_text() const;
};

// Train and test samples for a run: the first train_days days provide
// training candidates; the following day provides test candidates whose
// histories may reach back into the training days.
struct PreparedData {
  std::vector<data::InteractionEvent> context;  // train days plus the test day
  data::SampleSet train;
  data::SampleSet test;
};

PreparedData prepare(std::span<const data::InteractionEvent> events, const RunConfig& cfg);

// Materializes samples [indices] of a set.
std::vector<SampleInput> gather(const data::SampleSet& set, std::span<const std::size_t> indices);

// Frozen-parameter evaluation. Samples are processed in fixed chunks of
// `batch_size`, so results do not depend on the number of workers
// (FARM_THREADS caps them; default is the hardware concurrency).
EvalReport evaluate(const model::FarmModel& model, const num::ParamStore& params,
                    const data::SampleSet& set, std::size_t batch_size);

// Per-sample predictions in set order, same chunking as evaluate().
std::vector<model::XtrPrediction> predict_all(const model::FarmModel& model,
                                              const num::ParamStore& params,
                                              const data::SampleSet& set, std::size_t batch_size);

struct TrainOptions {
  // Called after every optimizer step with (epoch, batch, loss).
  std::function<void(int, std::size_t, const model::LossBreakdown&)> on_step;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  num::ParamStore params;
  RunReport report;
};

TrainResult train(const model::FarmModel& model, const PreparedData& data, const RunConfig& cfg,
                  const TrainOptions& opts = {});

// Reports both train and eval from a config and dataset: prepare, init,
// train, evaluate.
TrainResult run(std::span<const data::InteractionEvent> events, const RunConfig& cfg,
                const TrainOptions& opts = {});

// The five ablation variants in table order: full model, then without the
// video frequency path, live frequency path, contrastive alignment, fusion.
struct Variant {
  std::string name;
  model::Ablation ablation;
};
std::vector<Variant> ablation_variants();

// Cosine similarity of the two alignment heads for one user's latest state.
double alignment_cosine(const model::FarmModel& model, const num::ParamStore& params,
                        const SampleInput& state);

std::size_t eval_workers();

}  // namespace farm::train
