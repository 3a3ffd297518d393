// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "farm/checkpoint.hpp"
#include "farm/dataset_io.hpp"
#include "farm/error.hpp"

namespace farm::cli {

using json = nlohmann::ordered_json;

RunConfig resolve_config(const std::optional<fs::path>& config_path, const Overrides& o) {
  RunConfig base = o.large_batch_preset ? RunConfig::large_batch_preset() : RunConfig{};
  RunConfig cfg = config_path ? RunConfig::load(*config_path, base) : base;
  if (o.seed) cfg.seed = *o.seed;
  if (o.no_vfa) cfg.model.ablation.video_frequency = false;
  if (o.no_lfa) cfg.model.ablation.live_frequency = false;
  if (o.no_cpa) cfg.model.ablation.contrastive_align = false;
  if (o.no_cpf) cfg.model.ablation.cross_fuse = false;
  cfg.validate();
  return cfg;
}

std::string git_blob_hash(const fs::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw Error("cannot read " + file.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  const std::string content = ss.str();
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  SHA_CTX ctx;
  SHA1_Init(&ctx);
  SHA1_Update(&ctx, header.data(), header.size());
  SHA1_Update(&ctx, content.data(), content.size());
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1_Final(digest, &ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char b : digest) {
    out += hex[b >> 4];
    out += hex[b & 15];
  }
  return out;
}

namespace {

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + p.string());
  os << s;
  if (!os) throw Error("write failed: " + p.string());
}

// The dataset header is authoritative for the generator settings and thus the
// vocabulary.
data::Dataset load_for(RunConfig& cfg, const fs::path& dataset) {
  data::Dataset ds = data::read_dataset(dataset);
  cfg.stream = ds.config;
  cfg.validate();
  return ds;
}

void check_vocab(const num::ParamStore& params, const FeatureVocab& vocab) {
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    for (const char* d : {"video", "live"}) {
      const auto& dv = std::string(d) == "video" ? vocab.video : vocab.live;
      const std::string name = model::embedding_name(d, f);
      if (!params.contains(name)) throw ConfigError("checkpoint lacks " + name);
      const auto& shape = params.value(name).shape();
      const num::Shape want{static_cast<std::size_t>(dv.features[f].cardinality), dv.features[f].width};
      if (shape != want) {
        throw ConfigError("vocab mismatch for " + name + ": checkpoint " +
                          num::shape_to_string(shape) + ", dataset " + num::shape_to_string(want));
      }
    }
  }
}

}  // namespace

GenDataSummary cmd_gen_data(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  cfg.stream.validate();
  const auto events = data::generate_stream(cfg.stream);
  data::write_dataset(out, cfg.stream, events);
  GenDataSummary s;
  for (const auto& e : events) {
    if (e.domain == data::Domain::kVideo) {
      ++s.video_events;
    } else {
      ++s.live_events;
      for (std::size_t t = 0; t < kNumTasks; ++t) s.live_positives[t] += e.labels.values[t];
    }
  }
  log << "wrote " << events.size() << " events to " << out.string() << "\n";
  log << "video " << s.video_events << "  live " << s.live_events << "  ratio "
      << (s.live_events ? static_cast<double>(s.video_events) / s.live_events : 0.0) << "\n";
  log << "live positives:";
  for (std::size_t t = 0; t < kNumTasks; ++t) log << " " << kTaskNames[t] << "=" << s.live_positives[t];
  log << "\n";
  return s;
}

train::RunReport cmd_train(RunConfig cfg, const fs::path& dataset, const fs::path& out_dir,
                           std::ostream& log) {
  const auto ds = load_for(cfg, dataset);
  fs::create_directories(out_dir);
  const std::string dataset_hash = git_blob_hash(dataset);
  write_text(out_dir / "config.txt", cfg.to_text());
  write_text(out_dir / "dataset.sha1", dataset_hash + "\n");

  const auto data = train::prepare(ds.events, cfg);
  const model::FarmModel model(cfg.model, cfg.vocab());
  log << "train samples " << data.train.size() << ", test samples " << data.test.size() << "\n";
  train::TrainOptions opts;
  opts.on_epoch = [&](const train::EpochLog& e) {
    log << "epoch " << e.epoch << " loss " << e.mean_total;
    if (e.eval) {
      const std::size_t sparse[] = {3, 4, 5};
      const auto m = e.eval->mean_auc(sparse);
      log << " sparse AUC " << (m ? std::to_string(*m) : std::string("n/a"));
    }
    log << "\n";
  };
  auto result = train::train(model, data, cfg, opts);
  result.report.dataset_hash = dataset_hash;
  checkpoint::save(out_dir / "checkpoint.bin", result.params);
  write_text(out_dir / "report.json", result.report.to_json());
  write_text(out_dir / "report.txt", result.report.to_text());
  log << result.report.to_text();
  return result.report;
}

RunConfig config_for_checkpoint(const fs::path& checkpoint,
                                const std::optional<fs::path>& config_path) {
  const fs::path p = config_path ? *config_path : checkpoint.parent_path() / "config.txt";
  if (!fs::exists(p)) {
    throw ConfigError("no config for checkpoint: pass --config or keep config.txt next to it");
  }
  return RunConfig::load(p);
}

train::RunReport cmd_eval(const fs::path& checkpoint, const fs::path& dataset,
                          const std::optional<fs::path>& config_path,
                          const std::optional<fs::path>& out_dir, std::ostream& log) {
  RunConfig cfg = config_for_checkpoint(checkpoint, config_path);
  const auto ds = load_for(cfg, dataset);
  const num::ParamStore params = checkpoint::load(checkpoint);
  check_vocab(params, cfg.vocab());
  const auto data = train::prepare(ds.events, cfg);
  const model::FarmModel model(cfg.model, cfg.vocab());
  train::RunReport rep;
  rep.config_text = cfg.to_text();
  rep.config_hash = cfg.hash();
  rep.dataset_hash = git_blob_hash(dataset);
  rep.n_train = data.train.size();
  rep.n_test = data.test.size();
  rep.test = train::evaluate(model, params, data.test, cfg.batch_size);
  if (out_dir) {
    fs::create_directories(*out_dir);
    write_text(*out_dir / "report.json", rep.to_json());
    write_text(*out_dir / "report.txt", rep.to_text());
  }
  log << rep.to_text();
  return rep;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg_in, const fs::path& dataset,
                                    const std::vector<std::uint64_t>& seeds,
                                    const std::optional<fs::path>& out_dir, std::ostream& log) {
  if (seeds.empty()) throw ConfigError("ablate: need at least one seed");
  RunConfig cfg = cfg_in;
  const auto ds = load_for(cfg, dataset);
  const auto data = train::prepare(ds.events, cfg);
  std::vector<AblationRow> rows;
  for (const auto& v : train::ablation_variants()) {
    AblationRow row;
    row.variant = v.name;
    for (std::uint64_t seed : seeds) {
      RunConfig rc = cfg;
      rc.seed = seed;
      rc.eval_each_epoch = false;
      rc.model.ablation = v.ablation;
      const model::FarmModel model(rc.model, rc.vocab());
      auto res = train::train(model, data, rc);
      log << v.name << " seed " << seed << " done in " << res.report.wall_seconds << " s\n";
      row.per_seed.push_back(res.report.test);
    }
    const double inv = 1.0 / static_cast<double>(seeds.size());
    for (const auto& r : row.per_seed) {
      for (std::size_t t = 0; t < kNumTasks; ++t) {
        row.mean[t][0] += r.tasks[t].auc.value_or(0.5) * inv;
        row.mean[t][1] += r.tasks[t].uauc.value_or(0.5) * inv;
        row.mean[t][2] += r.tasks[t].gauc.value_or(0.5) * inv;
      }
    }
    row.sparse_auc = (row.mean[3][0] + row.mean[4][0] + row.mean[5][0]) / 3.0;
    rows.push_back(std::move(row));
  }
  const std::string table = ablation_table(rows);
  log << table;
  if (out_dir) {
    fs::create_directories(*out_dir);
    write_text(*out_dir / "config.txt", cfg.to_text());
    write_text(*out_dir / "dataset.sha1", git_blob_hash(dataset) + "\n");
    write_text(*out_dir / "ablation.txt", table);
    json j = json::array();
    for (const auto& r : rows) {
      json metrics = json::object();
      for (std::size_t t = 0; t < kNumTasks; ++t) {
        metrics[kTaskNames[t]] = {{"auc", r.mean[t][0]}, {"uauc", r.mean[t][1]}, {"gauc", r.mean[t][2]}};
      }
      j.push_back({{"variant", r.variant}, {"sparse_auc", r.sparse_auc}, {"metrics", metrics}});
    }
    write_text(*out_dir / "ablation.json", j.dump(2) + "\n");
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::string out = "variant   ";
  char buf[64];
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    for (const char* m : {"AUC", "UAUC", "GAUC"}) {
      std::snprintf(buf, sizeof buf, " %5s-%-4s", kTaskShortNames[t], m);
      out += buf;
    }
  }
  out += "  sparseAUC     delta\n";
  const double base = rows.empty() ? 0.0 : rows.front().sparse_auc;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-10s", r.variant.c_str());
    out += buf;
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      for (std::size_t k = 0; k < 3; ++k) {
        std::snprintf(buf, sizeof buf, " %10.4f", r.mean[t][k]);
        out += buf;
      }
    }
    std::snprintf(buf, sizeof buf, " %10.4f %+9.4f\n", r.sparse_auc, r.sparse_auc - base);
    out += buf;
  }
  return out;
}

void cmd_export_similarity(const fs::path& checkpoint, const fs::path& dataset,
                           const std::optional<fs::path>& config_path, const fs::path& out_csv,
                           std::size_t n_users, std::ostream& log) {
  RunConfig cfg = config_for_checkpoint(checkpoint, config_path);
  const auto ds = load_for(cfg, dataset);
  const num::ParamStore params = checkpoint::load(checkpoint);
  check_vocab(params, cfg.vocab());
  const data::SampleSet set(ds.events, cfg.vocab(), cfg.model.seq_len);
  const model::FarmModel model(cfg.model, cfg.vocab());
  std::vector<SampleInput> states;
  for (std::uint64_t u : set.user_ids()) {
    auto s = set.latest_state(u);
    if (s && !s->video.empty() && !s->live.empty()) states.push_back(std::move(*s));
  }
  std::mt19937_64 rng(derive_seed(cfg.seed, "similarity"));
  std::shuffle(states.begin(), states.end(), rng);
  if (states.size() > n_users) states.resize(n_users);
  std::sort(states.begin(), states.end(),
            [](const auto& a, const auto& b) { return a.user_id < b.user_id; });
  std::ofstream os(out_csv);
  if (!os) throw Error("cannot write " + out_csv.string());
  os << "user_id,cosine\n";
  os.precision(17);
  double sum = 0.0;
  for (const auto& s : states) {
    const double c = train::alignment_cosine(model, params, s);
    sum += c;
    os << s.user_id << ',' << c << '\n';
  }
  log << "exported " << states.size() << " users, mean cosine "
      << (states.empty() ? 0.0 : sum / static_cast<double>(states.size())) << "\n";
}

void cmd_export_attention(const fs::path& checkpoint, const fs::path& dataset,
                          const std::optional<fs::path>& config_path, std::uint64_t user_id,
                          const fs::path& out_csv, std::ostream& log) {
  RunConfig cfg = config_for_checkpoint(checkpoint, config_path);
  const auto ds = load_for(cfg, dataset);
  const num::ParamStore params = checkpoint::load(checkpoint);
  check_vocab(params, cfg.vocab());
  if (!cfg.model.ablation.cross_fuse) throw ConfigError("model was trained without fusion");
  const data::SampleSet set(ds.events, cfg.vocab(), cfg.model.seq_len);
  const auto ids = set.user_ids();
  if (!std::binary_search(ids.begin(), ids.end(), user_id)) {
    throw DataError("unknown user " + std::to_string(user_id));
  }
  const auto state = set.latest_state(user_id);
  if (!state || state->video.empty() || state->live.empty()) {
    throw DataError("user " + std::to_string(user_id) + " lacks history in one domain");
  }
  const model::FarmModel model(cfg.model, cfg.vocab());
  const auto fused = model.fuse(params, *state);
  const num::Tensor w = fused.cross.mean_over_heads();
  std::ofstream os(out_csv);
  if (!os) throw Error("cannot write " + out_csv.string());
  os << "live_pos";
  for (std::size_t k = 0; k < w.cols(); ++k) os << ",video_" << k;
  os << '\n';
  os.precision(17);
  for (std::size_t q = 0; q < w.rows(); ++q) {
    os << q;
    for (std::size_t k = 0; k < w.cols(); ++k) os << ',' << w(q, k);
    os << '\n';
  }
  log << "exported " << w.rows() << " x " << w.cols() << " cross-attention weights for user "
      << user_id << "\n";
}

}  // namespace farm::cli
