// SPDX-License-Identifier: Apache-2.0
#include "farm/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <json.hpp>
#include <thread>

#include "farm/error.hpp"
#include "farm/metrics.hpp"
#include "farm/numerics/optim.hpp"

namespace farm::train {

using json = nlohmann::ordered_json;

std::optional<double> EvalReport::mean_auc(std::span<const std::size_t> task_ids) const {
  double sum = 0.0;
  int n = 0;
  for (std::size_t t : task_ids) {
    if (tasks.at(t).auc) {
      sum += *tasks[t].auc;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

PreparedData prepare(std::span<const data::InteractionEvent> events, const RunConfig& cfg) {
  cfg.validate();
  auto split = data::split_train_test(events, cfg.train_days);
  const FeatureVocab vocab = cfg.stream.vocab();
  std::vector<data::InteractionEvent> context = split.train;
  context.insert(context.end(), split.test.begin(), split.test.end());
  const std::int64_t from = cfg.train_days * data::kSecondsPerDay;
  data::SampleSet train(split.train, vocab, cfg.model.seq_len);
  data::SampleSet test(context, vocab, cfg.model.seq_len, from, from + data::kSecondsPerDay);
  if (train.size() == 0) throw DataError("no live candidates in the training days");
  if (test.size() == 0) throw DataError("no live candidates on the test day");
  return {std::move(context), std::move(train), std::move(test)};
}

std::vector<SampleInput> gather(const data::SampleSet& set, std::span<const std::size_t> indices) {
  std::vector<SampleInput> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(set.materialize(i));
  return out;
}

std::size_t eval_workers() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FARM_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

namespace {

struct ChunkOutputs {
  std::vector<model::XtrPrediction> preds;
  std::vector<spectral::FrequencyGates> gates;
};

ChunkOutputs run_chunks(const model::FarmModel& model, const num::ParamStore& params,
                        const data::SampleSet& set, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("evaluate: batch size must be positive");
  const std::size_t n = set.size();
  ChunkOutputs out;
  out.preds.resize(n);
  out.gates.resize(n);
  const std::size_t n_chunks = (n + batch_size - 1) / batch_size;
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n_chunks);
  auto worker = [&] {
    for (std::size_t c = next++; c < n_chunks; c = next++) {
      try {
        const std::size_t begin = c * batch_size;
        const std::size_t end = std::min(n, begin + batch_size);
        std::vector<std::size_t> idx(end - begin);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
        const auto samples = gather(set, idx);
        num::Tape tape(false);
        const auto fw = model.forward(tape, params, samples);
        const num::Tensor& p = fw.probs.value();
        const num::Tensor& g = fw.gates.value();
        for (std::size_t i = 0; i < idx.size(); ++i) {
          for (std::size_t t = 0; t < kNumTasks; ++t) out.preds[begin + i][t] = p(i, t);
          out.gates[begin + i] = {g(i, 0), g(i, 1), g(i, 2), g(i, 3)};
        }
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(eval_workers(), std::max<std::size_t>(1, n_chunks));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace

std::vector<model::XtrPrediction> predict_all(const model::FarmModel& model,
                                              const num::ParamStore& params,
                                              const data::SampleSet& set, std::size_t batch_size) {
  return run_chunks(model, params, set, batch_size).preds;
}

EvalReport evaluate(const model::FarmModel& model, const num::ParamStore& params,
                    const data::SampleSet& set, std::size_t batch_size) {
  const ChunkOutputs outs = run_chunks(model, params, set, batch_size);
  const std::size_t n = set.size();
  EvalReport r;
  r.n_samples = n;
  std::vector<TaskLabels> labels(n);
  std::vector<std::uint64_t> users(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ref = set.ref(i);
    const std::uint64_t uid = set.user_of(i);
    labels[i] = data::task_labels(set.live_event(uid, ref.candidate));
    users[i] = uid;
  }
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    std::vector<metrics::ScoredSample> scored(n);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      scored[i] = {users[i], outs.preds[i][t], labels[i][t] > 0.5};
      pos += scored[i].label ? 1 : 0;
    }
    r.tasks[t] = {metrics::auc(scored), metrics::uauc(scored), metrics::gauc(scored), pos};
  }
  if (n > 0) {
    r.l_xtrs = model::xtrs_loss(outs.preds, labels);
    spectral::FrequencyGates m{0, 0, 0, 0};
    for (const auto& g : outs.gates) {
      m.alpha += g.alpha;
      m.beta += g.beta;
      m.gamma += g.gamma;
      m.delta += g.delta;
    }
    const double inv = 1.0 / static_cast<double>(n);
    r.gate_mean = {m.alpha * inv, m.beta * inv, m.gamma * inv, m.delta * inv};
  }
  return r;
}

TrainResult train(const model::FarmModel& model, const PreparedData& data, const RunConfig& cfg,
                  const TrainOptions& opts) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  result.params = model.init_params(derive_seed(cfg.seed, "init"));
  RunReport& rep = result.report;
  rep.config_text = cfg.to_text();
  rep.config_hash = cfg.hash();
  rep.n_train = data.train.size();
  rep.n_test = data.test.size();
  const num::AdamConfig adam = cfg.adam();
  const double lambda = model.config().effective_lambda();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = data::build_batches(
        data.train.size(), cfg.batch_size,
        derive_seed(cfg.seed, "order." + std::to_string(epoch)));
    EpochLog log;
    log.epoch = epoch + 1;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto samples = gather(data.train, batches[b]);
      num::Tape tape;
      const auto fw = model.forward(tape, result.params, samples);
      const auto loss = model::total_loss(fw.l_xtrs.scalar(), fw.l_cl.scalar(), lambda);
      if (!std::isfinite(loss.total)) {
        char msg[160];
        std::snprintf(msg, sizeof msg, "non-finite loss at epoch %d batch %zu (lr=%g)", epoch + 1,
                      b, cfg.lr);
        throw TrainingError(msg);
      }
      tape.backward(fw.total, result.params);
      num::adam_step(result.params, adam);
      rep.batch_losses.push_back(loss.total);
      log.mean_total += loss.total;
      log.mean_xtrs += loss.l_xtrs;
      log.mean_cl += loss.l_cl;
      if (opts.on_step) opts.on_step(epoch + 1, b, loss);
    }
    const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(1, batches.size()));
    log.mean_total *= inv;
    log.mean_xtrs *= inv;
    log.mean_cl *= inv;
    const bool last = epoch + 1 == cfg.epochs;
    if (cfg.eval_each_epoch || last) {
      log.eval = evaluate(model, result.params, data.test, cfg.batch_size);
    }
    if (opts.on_epoch) opts.on_epoch(log);
    rep.epochs.push_back(std::move(log));
  }
  rep.test = *rep.epochs.back().eval;
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

TrainResult run(std::span<const data::InteractionEvent> events, const RunConfig& cfg,
                const TrainOptions& opts) {
  const PreparedData data = prepare(events, cfg);
  const model::FarmModel model(cfg.model, cfg.vocab());
  return train(model, data, cfg, opts);
}

std::vector<Variant> ablation_variants() {
  std::vector<Variant> v;
  v.push_back({"FARM", {}});
  model::Ablation a;
  a.video_frequency = false;
  v.push_back({"w/o V-FA", a});
  a = {};
  a.live_frequency = false;
  v.push_back({"w/o L-FA", a});
  a = {};
  a.contrastive_align = false;
  v.push_back({"w/o C-PA", a});
  a = {};
  a.cross_fuse = false;
  v.push_back({"w/o C-PF", a});
  return v;
}

double alignment_cosine(const model::FarmModel& model, const num::ParamStore& params,
                        const SampleInput& state) {
  const auto a = model.align_heads(params, state);
  double dot = 0.0, nv = 0.0, nl = 0.0;
  for (std::size_t i = 0; i < a.h_video.size(); ++i) {
    dot += a.h_video[i] * a.h_live[i];
    nv += a.h_video[i] * a.h_video[i];
    nl += a.h_live[i] * a.h_live[i];
  }
  if (nv == 0.0 || nl == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(nv * nl), -1.0, 1.0);
}

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json eval_json(const EvalReport& r) {
  json tasks = json::object();
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    const auto& m = r.tasks[t];
    tasks[kTaskNames[t]] = {{"auc", opt_json(m.auc)},
                            {"uauc", opt_json(m.uauc)},
                            {"gauc", opt_json(m.gauc)},
                            {"positives", m.positives}};
  }
  return {{"n_samples", r.n_samples},
          {"l_xtrs", r.l_xtrs},
          {"gates",
           {{"alpha", r.gate_mean.alpha},
            {"beta", r.gate_mean.beta},
            {"gamma", r.gate_mean.gamma},
            {"delta", r.gate_mean.delta}}},
          {"tasks", tasks}};
}

std::string fmt_metric(const std::optional<double>& v) {
  if (!v) return "     n/a";
  char buf[16];
  std::snprintf(buf, sizeof buf, "%8.4f", *v);
  return buf;
}

}  // namespace

std::string RunReport::to_json() const {
  json epochs_j = json::array();
  for (const auto& e : epochs) {
    json j = {{"epoch", e.epoch},
              {"mean_total", e.mean_total},
              {"mean_xtrs", e.mean_xtrs},
              {"mean_cl", e.mean_cl}};
    if (e.eval) j["eval"] = eval_json(*e.eval);
    epochs_j.push_back(std::move(j));
  }
  json cfg = json::object();
  {
    std::size_t pos = 0;
    while (pos < config_text.size()) {
      const auto nl = config_text.find('\n', pos);
      const std::string line = config_text.substr(pos, nl - pos);
      const auto eq = line.find('=');
      if (eq != std::string::npos) cfg[line.substr(0, eq)] = line.substr(eq + 1);
      pos = nl == std::string::npos ? config_text.size() : nl + 1;
    }
  }
  json j = {{"config", cfg},
            {"config_hash", config_hash},
            {"dataset_hash", dataset_hash},
            {"n_train", n_train},
            {"n_test", n_test},
            {"batch_losses", batch_losses},
            {"epochs", epochs_j},
            {"test", eval_json(test)},
            {"wall_seconds", wall_seconds}};
  return j.dump(2) + "\n";
}

std::string RunReport::to_text() const {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "config %s  dataset %s\ntrain samples %zu  test samples %zu\n",
                config_hash.c_str(), dataset_hash.empty() ? "-" : dataset_hash.c_str(), n_train,
                n_test);
  out += buf;
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "epoch %d  loss %.5f  xtrs %.5f  cl %.5f\n", e.epoch,
                  e.mean_total, e.mean_xtrs, e.mean_cl);
    out += buf;
  }
  out += "\ntask               AUC     UAUC     GAUC  positives\n";
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    const auto& m = test.tasks[t];
    std::snprintf(buf, sizeof buf, "%-15s %s %s %s  %9zu\n", kTaskNames[t],
                  fmt_metric(m.auc).c_str(), fmt_metric(m.uauc).c_str(),
                  fmt_metric(m.gauc).c_str(), m.positives);
    out += buf;
  }
  std::snprintf(buf, sizeof buf,
                "\ngates  alpha %.4f  beta %.4f  gamma %.4f  delta %.4f\nwall %.1f s\n",
                test.gate_mean.alpha, test.gate_mean.beta, test.gate_mean.gamma,
                test.gate_mean.delta, wall_seconds);
  out += buf;
  return out;
}

}  // namespace farm::train
