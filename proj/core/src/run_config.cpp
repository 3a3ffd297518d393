// SPDX-License-Identifier: Apache-2.0
#include "farm/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "farm/error.hpp"

namespace farm {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("config: bad value for " + key + ": '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + s + "'");
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Get>
Field make_field(std::string key, Get ref) {
  using T = std::remove_reference_t<decltype(ref(std::declval<RunConfig&>()))>;
  Field f;
  f.key = key;
  f.get = [ref](const RunConfig& c) {
    auto& v = ref(const_cast<RunConfig&>(c));
    if constexpr (std::is_same_v<T, bool>) {
      return std::string(v ? "true" : "false");
    } else if constexpr (std::is_floating_point_v<T>) {
      return format_double(v);
    } else {
      return std::to_string(v);
    }
  };
  f.set = [ref, key](RunConfig& c, const std::string& s) {
    if constexpr (std::is_same_v<T, bool>) {
      ref(c) = parse_bool(key, s);
    } else {
      ref(c) = parse_number<T>(key, s);
    }
  };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
#define FARM_FIELD(key, expr) f.push_back(make_field(key, [](RunConfig& c) -> auto& { return expr; }))
    FARM_FIELD("seq_len", c.model.seq_len);
    FARM_FIELD("video_dim", c.model.video_dim);
    FARM_FIELD("live_dim", c.model.live_dim);
    FARM_FIELD("cutoff", c.model.cutoff.c);
    FARM_FIELD("lambda", c.model.lambda);
    FARM_FIELD("tau", c.model.tau);
    FARM_FIELD("num_heads", c.model.attention.num_heads);
    FARM_FIELD("model_dim", c.model.attention.model_dim);
    FARM_FIELD("align_dim", c.model.align_dim);
    FARM_FIELD("mlp_layers", c.model.mlp_layers);
    FARM_FIELD("gate_hidden", c.model.gate_hidden);
    FARM_FIELD("n_experts", c.model.n_experts);
    FARM_FIELD("expert_hidden", c.model.expert_hidden);
    FARM_FIELD("expert_dim", c.model.expert_dim);
    FARM_FIELD("tower_hidden", c.model.tower_hidden);
    FARM_FIELD("vfa", c.model.ablation.video_frequency);
    FARM_FIELD("lfa", c.model.ablation.live_frequency);
    FARM_FIELD("cpa", c.model.ablation.contrastive_align);
    FARM_FIELD("cpf", c.model.ablation.cross_fuse);
    FARM_FIELD("lr", c.lr);
    FARM_FIELD("batch_size", c.batch_size);
    FARM_FIELD("epochs", c.epochs);
    FARM_FIELD("train_days", c.train_days);
    FARM_FIELD("seed", c.seed);
    FARM_FIELD("eval_each_epoch", c.eval_each_epoch);
    FARM_FIELD("stream.n_users", c.stream.n_users);
    FARM_FIELD("stream.n_authors_per_domain", c.stream.n_authors_per_domain);
    FARM_FIELD("stream.days", c.stream.days);
    FARM_FIELD("stream.exposure_ratio", c.stream.exposure_ratio);
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      f.push_back(make_field(std::string("stream.rate.") + kTaskNames[t],
                             [t](RunConfig& c) -> auto& { return c.stream.base_rates[t]; }));
    }
    FARM_FIELD("stream.rho", c.stream.rho);
    FARM_FIELD("stream.seed", c.stream.seed);
    FARM_FIELD("stream.latent_dim", c.stream.latent_dim);
    FARM_FIELD("stream.n_tags", c.stream.n_tags);
    FARM_FIELD("stream.n_clusters", c.stream.n_clusters);
    FARM_FIELD("stream.n_pages", c.stream.n_pages);
    FARM_FIELD("stream.events_per_user_day", c.stream.events_per_user_day);
    FARM_FIELD("stream.activity_spread", c.stream.activity_spread);
    FARM_FIELD("stream.exploration", c.stream.exploration);
    FARM_FIELD("stream.tag_sharpness", c.stream.tag_sharpness);
    FARM_FIELD("stream.affinity_weight", c.stream.affinity_weight);
    FARM_FIELD("stream.propensity_weight", c.stream.propensity_weight);
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      f.push_back(make_field(std::string("stream.video_rate.") + kTaskNames[t],
                             [t](RunConfig& c) -> auto& { return c.stream.video_rates[t]; }));
    }
#undef FARM_FIELD
    return f;
  }();
  return all;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  stream.validate();
  if (!(lr > 0.0)) throw ConfigError("config: lr must be positive");
  if (batch_size == 0) throw ConfigError("config: batch_size must be positive");
  if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (train_days < 1 || train_days >= stream.days) {
    throw ConfigError("config: train_days must be in [1, stream.days)");
  }
  (void)vocab();
}

FeatureVocab RunConfig::vocab() const {
  const FeatureVocab base = stream.vocab();
  if (base.video.dim() == model.video_dim && base.live.dim() == model.live_dim) return base;
  return FeatureVocab::with_dims(base, model.video_dim, model.live_dim);
}

num::AdamConfig RunConfig::adam() const {
  num::AdamConfig a;
  a.lr = lr;
  return a;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + "=" + f.get(*this) + "\n";
  return out;
}

std::string RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_text()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig RunConfig::parse(const std::string& text, RunConfig base) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "preset") {
      if (value != "large-batch") throw ConfigError("config: unknown preset '" + value + "'");
      const RunConfig p = large_batch_preset();
      base.batch_size = p.batch_size;
      continue;
    }
    bool found = false;
    for (const auto& f : fields()) {
      if (f.key == key) {
        f.set(base, value);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return base;
}

RunConfig RunConfig::load(const std::filesystem::path& path, RunConfig base) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), std::move(base));
}

RunConfig RunConfig::parse(const std::string& text) { return parse(text, RunConfig{}); }

RunConfig RunConfig::load(const std::filesystem::path& path) { return load(path, RunConfig{}); }

RunConfig RunConfig::large_batch_preset() {
  RunConfig c;
  c.batch_size = 5000;
  return c;
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& name) {
  auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  std::uint64_t h = mix(seed);
  for (unsigned char ch : name) h = mix(h ^ ch);
  return h;
}

}  // namespace farm
