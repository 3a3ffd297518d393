// SPDX-License-Identifier: Apache-2.0
#include "farm/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string_view>

#include "farm/error.hpp"

namespace farm::data {

const char* domain_name(Domain d) { return d == Domain::kVideo ? "video" : "live"; }

Domain parse_domain(const std::string& s) {
  if (s == "video") return Domain::kVideo;
  if (s == "live") return Domain::kLive;
  throw FormatError("unknown domain: " + s);
}

bool BehaviorLabels::any() const {
  return std::any_of(values.begin(), values.end(), [](auto v) { return v != 0; });
}

void StreamConfig::validate() const {
  if (n_users == 0) throw ConfigError("stream: n_users must be positive");
  if (n_authors_per_domain <= 0) throw ConfigError("stream: n_authors_per_domain must be positive");
  if (days < 2) throw ConfigError("stream: need at least two days (train + test)");
  if (!(exposure_ratio > 0.0)) throw ConfigError("stream: exposure_ratio must be positive");
  if (rho < 0.0 || rho > 1.0) throw ConfigError("stream: rho must be in [0, 1]");
  if (latent_dim <= 0 || n_tags <= 0 || n_clusters <= 0 || n_pages <= 0) {
    throw ConfigError("stream: world sizes must be positive");
  }
  if (n_tags > n_authors_per_domain) throw ConfigError("stream: more tags than authors");
  if (!(events_per_user_day > 0.0)) throw ConfigError("stream: events_per_user_day must be positive");
  if (exploration < 0.0 || exploration > 1.0) throw ConfigError("stream: exploration outside [0, 1]");
  auto check_rates = [](const std::array<double, kNumTasks>& rates, const char* which) {
    for (std::size_t i = 0; i < kNumTasks; ++i) {
      if (!(rates[i] > 0.0 && rates[i] < 1.0)) {
        throw ConfigError(std::string("stream: ") + which + " rate for " + kTaskNames[i] +
                          " outside (0, 1)");
      }
      if (i > 0 && rates[i] > rates[i - 1]) {
        throw ConfigError(std::string("stream: ") + which + " rates must be non-increasing from " +
                          kTaskNames[i - 1] + " to " + kTaskNames[i]);
      }
    }
  };
  check_rates(base_rates, "live");
  check_rates(video_rates, "video");
}

FeatureVocab StreamConfig::vocab() const {
  return FeatureVocab::standard(n_authors_per_domain, n_pages, n_tags, n_clusters, kPlayBuckets,
                                kLagBuckets, kLabelCodes);
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named PRNG substream derived from the stream seed.
std::mt19937_64 substream(std::uint64_t seed, std::string_view name, std::uint64_t id = 0) {
  std::uint64_t h = splitmix(seed);
  for (char c : name) h = splitmix(h ^ static_cast<unsigned char>(c));
  h = splitmix(h ^ id);
  return std::mt19937_64(h);
}

double logistic(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

std::vector<double> normal_vector(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = nd(rng);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

int bucketize(double value, std::initializer_list<double> edges) {
  int b = 0;
  for (double e : edges) {
    if (value < e) return b;
    ++b;
  }
  return b;
}

constexpr double kAuthorNoise = 0.5;

struct Exposure {
  double affinity;
  double propensity;
};

// Stage k of the behaviour chain fires with probability
// logistic(bias[k] + w_aff * affinity [+ w_prop * propensity for k >= 3]).
double stage_logit(const StreamConfig& cfg, std::size_t stage, double bias, const Exposure& x) {
  double z = bias + cfg.affinity_weight * x.affinity;
  if (stage >= 3) z += cfg.propensity_weight * x.propensity;
  return z;
}

std::vector<double> tag_distribution(const StreamConfig& cfg,
                                     const std::vector<std::vector<double>>& centroids,
                                     const std::vector<double>& z) {
  const double norm = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
  std::vector<double> logits(centroids.size());
  for (std::size_t t = 0; t < centroids.size(); ++t) {
    logits[t] = cfg.tag_sharpness * dot(z, centroids[t]) * norm;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    sum += l;
  }
  const double uniform = 1.0 / static_cast<double>(centroids.size());
  for (double& l : logits) l = (1.0 - cfg.exploration) * l / sum + cfg.exploration * uniform;
  return logits;
}

}  // namespace

SyntheticWorld::SyntheticWorld(const StreamConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  auto rng = substream(cfg_.seed, "world");
  for (int t = 0; t < cfg_.n_tags; ++t) tag_centroids_.push_back(normal_vector(rng, cfg_.latent_dim));

  auto make_authors = [&](std::vector<AuthorProfile>& authors,
                          std::vector<std::vector<int>>& by_tag) {
    std::uniform_int_distribution<int> tag_dist(0, cfg_.n_tags - 1);
    std::uniform_int_distribution<int> page_dist(0, cfg_.n_pages - 1);
    std::normal_distribution<double> pop(0.0, 0.5);
    by_tag.assign(static_cast<std::size_t>(cfg_.n_tags), {});
    for (int a = 0; a < cfg_.n_authors_per_domain; ++a) {
      AuthorProfile p;
      p.tag = a < cfg_.n_tags ? a : tag_dist(rng);
      p.cluster = p.tag % cfg_.n_clusters;
      p.page = page_dist(rng);
      p.popularity = pop(rng);
      p.z = normal_vector(rng, cfg_.latent_dim);
      const auto& c = tag_centroids_[static_cast<std::size_t>(p.tag)];
      for (std::size_t i = 0; i < p.z.size(); ++i) p.z[i] = c[i] + kAuthorNoise * p.z[i];
      by_tag[static_cast<std::size_t>(p.tag)].push_back(a);
      authors.push_back(std::move(p));
    }
  };
  make_authors(video_authors_, video_by_tag_);
  make_authors(live_authors_, live_by_tag_);
  calibrate(Domain::kVideo);
  calibrate(Domain::kLive);
}

UserProfile SyntheticWorld::user(std::uint64_t user_id) const {
  auto rng = substream(cfg_.seed, "user", user_id);
  UserProfile u;
  u.z_shared = normal_vector(rng, cfg_.latent_dim);
  const auto own_video = normal_vector(rng, cfg_.latent_dim);
  const auto own_live = normal_vector(rng, cfg_.latent_dim);
  const double a = std::sqrt(cfg_.rho), b = std::sqrt(1.0 - cfg_.rho);
  u.z_video.resize(u.z_shared.size());
  u.z_live.resize(u.z_shared.size());
  for (std::size_t i = 0; i < u.z_shared.size(); ++i) {
    u.z_video[i] = a * u.z_shared[i] + b * own_video[i];
    u.z_live[i] = a * u.z_shared[i] + b * own_live[i];
  }
  std::normal_distribution<double> nd(0.0, 1.0);
  u.propensity = nd(rng);
  const double s = cfg_.activity_spread;
  std::lognormal_distribution<double> act(-0.5 * s * s, s);
  u.activity = cfg_.events_per_user_day * act(rng);
  return u;
}

const AuthorProfile& SyntheticWorld::author(Domain d, int author_id) const {
  const auto& v = d == Domain::kVideo ? video_authors_ : live_authors_;
  return v.at(static_cast<std::size_t>(author_id));
}

double SyntheticWorld::affinity(const UserProfile& u, Domain d, int author_id) const {
  const AuthorProfile& a = author(d, author_id);
  const auto& z = d == Domain::kVideo ? u.z_video : u.z_live;
  const double norm =
      1.0 / std::sqrt(static_cast<double>(cfg_.latent_dim) * (1.0 + kAuthorNoise * kAuthorNoise));
  return dot(z, a.z) * norm + a.popularity;
}

const std::array<double, kNumTasks>& SyntheticWorld::stage_bias(Domain d) const {
  return d == Domain::kVideo ? video_bias_ : live_bias_;
}

void SyntheticWorld::calibrate(Domain d) {
  // Importance-weighted bisection: stage k's bias is chosen so that the
  // expected marginal rate of stage k over sampled exposures matches the
  // configured rate, given the stages before it.
  auto rng = substream(cfg_.seed, d == Domain::kVideo ? "calibrate.video" : "calibrate.live");
  const auto& by_tag = d == Domain::kVideo ? video_by_tag_ : live_by_tag_;
  const auto& rates = d == Domain::kVideo ? cfg_.video_rates : cfg_.base_rates;
  constexpr int kSamples = 20000;
  std::vector<Exposure> xs;
  xs.reserve(kSamples);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int i = 0; i < kSamples; ++i) {
    UserProfile u;
    u.z_video = normal_vector(rng, cfg_.latent_dim);
    u.z_live = u.z_video;
    const auto probs = tag_distribution(cfg_, tag_centroids_, u.z_video);
    std::discrete_distribution<int> tag(probs.begin(), probs.end());
    const auto& pool = by_tag[static_cast<std::size_t>(tag(rng))];
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    xs.push_back({affinity(u, d, pool[pick(rng)]), nd(rng)});
  }
  std::vector<double> weight(xs.size(), 1.0);
  auto& bias = d == Domain::kVideo ? video_bias_ : live_bias_;
  double prev_rate = 1.0;
  for (std::size_t k = 0; k < kNumTasks; ++k) {
    const double total_w = std::accumulate(weight.begin(), weight.end(), 0.0);
    const double target = rates[k] / prev_rate;
    double lo = -40.0, hi = 40.0;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      double acc = 0.0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        acc += weight[i] * logistic(stage_logit(cfg_, k, mid, xs[i]));
      }
      (acc / total_w < target ? lo : hi) = mid;
    }
    bias[k] = 0.5 * (lo + hi);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      weight[i] *= logistic(stage_logit(cfg_, k, bias[k], xs[i]));
    }
    prev_rate = rates[k];
  }
}

std::vector<InteractionEvent> SyntheticWorld::generate_user(std::uint64_t user_id) const {
  const UserProfile u = user(user_id);
  auto rng = substream(cfg_.seed, "events", user_id);
  const auto video_tags = tag_distribution(cfg_, tag_centroids_, u.z_video);
  const auto live_tags = tag_distribution(cfg_, tag_centroids_, u.z_live);
  std::discrete_distribution<int> video_tag(video_tags.begin(), video_tags.end());
  std::discrete_distribution<int> live_tag(live_tags.begin(), live_tags.end());
  std::poisson_distribution<int> count(u.activity);
  std::bernoulli_distribution is_live(1.0 / (1.0 + cfg_.exposure_ratio));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<InteractionEvent> events;
  std::uint64_t session = 0;
  for (int day = 0; day < cfg_.days; ++day) {
    const int n = count(rng);
    std::vector<std::int64_t> starts(static_cast<std::size_t>(n));
    for (auto& t : starts) {
      t = day * kSecondsPerDay + static_cast<std::int64_t>(unit(rng) * (kSecondsPerDay - 3600));
    }
    std::sort(starts.begin(), starts.end());
    for (std::int64_t start : starts) {
      const Domain d = is_live(rng) ? Domain::kLive : Domain::kVideo;
      const auto& pool = (d == Domain::kVideo ? video_by_tag_ : live_by_tag_)
          [static_cast<std::size_t>(d == Domain::kVideo ? video_tag(rng) : live_tag(rng))];
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      const int author_id = pool[pick(rng)];
      const AuthorProfile& a = author(d, author_id);

      const Exposure x{affinity(u, d, author_id), u.propensity};
      const auto& bias = stage_bias(d);
      InteractionEvent e;
      e.user_id = user_id;
      e.domain = d;
      e.author_id = author_id;
      e.session_id = (user_id << 24) | session++;
      int depth = 0;
      for (std::size_t k = 0; k < kNumTasks; ++k) {
        if (unit(rng) >= logistic(stage_logit(cfg_, k, bias[k], x))) break;
        e.labels.values[k] = 1;
        ++depth;
      }
      // Dwell grows with engagement depth.
      const double dwell = std::exp(std::log(2.0 + 25.0 * depth * depth) + 0.5 * (unit(rng) - 0.5));
      e.side_info = {a.page, a.tag, a.cluster,
                     bucketize(dwell, {3, 6, 12, 30, 90, 240, 600}), 0, depth};
      if (d == Domain::kLive) {
        // First-only reporting: a session reports once, immediately at its
        // first positive or on exit when nothing fired.
        const double offset = depth > 0 ? 1.0 + 9.0 * unit(rng) : dwell;
        e.timestamp = start + static_cast<std::int64_t>(offset);
      } else {
        e.timestamp = start;
      }
      events.push_back(e);
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  std::array<std::int64_t, 2> last = {-1, -1};
  for (auto& e : events) {
    auto& prev = last[static_cast<std::size_t>(e.domain)];
    e.side_info.lag_bucket =
        prev < 0 ? kLagBuckets - 1
                 : bucketize(static_cast<double>(e.timestamp - prev),
                             {60, 300, 1800, 3600, 4 * 3600, 12 * 3600, 24 * 3600});
    prev = e.timestamp;
  }
  return events;
}

std::vector<InteractionEvent> generate_stream(const StreamConfig& cfg) {
  const SyntheticWorld world(cfg);
  std::vector<InteractionEvent> all;
  all.reserve(static_cast<std::size_t>(cfg.n_users * cfg.days * cfg.events_per_user_day * 1.1));
  for (std::uint64_t u = 0; u < cfg.n_users; ++u) {
    auto ev = world.generate_user(u);
    all.insert(all.end(), ev.begin(), ev.end());
  }
  std::sort(all.begin(), all.end(), [](const InteractionEvent& a, const InteractionEvent& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    if (a.user_id != b.user_id) return a.user_id < b.user_id;
    if (a.domain != b.domain) return a.domain < b.domain;
    return a.session_id < b.session_id;
  });
  return all;
}

TrainTestSplit split_train_test(std::span<const InteractionEvent> events, int train_days) {
  if (train_days < 1) throw ConfigError("split: train_days must be >= 1");
  const std::int64_t boundary = train_days * kSecondsPerDay;
  const std::int64_t end = boundary + kSecondsPerDay;
  TrainTestSplit split;
  std::int64_t latest = INT64_MIN;
  for (const auto& e : events) {
    latest = std::max(latest, e.timestamp);
    if (e.timestamp < boundary) {
      split.train.push_back(e);
    } else if (e.timestamp < end) {
      split.test.push_back(e);
    }
  }
  if (latest < boundary) {
    throw DataError("split: stream ends before day " + std::to_string(train_days) +
                    "; need more than " + std::to_string(train_days) + " days");
  }
  if (split.test.empty()) throw DataError("split: test day contains no events");
  return split;
}

EventFeatures history_features(const InteractionEvent& e) {
  return {e.author_id,
          e.side_info.page,
          e.side_info.tag,
          e.side_info.cluster,
          e.side_info.play_bucket,
          e.side_info.lag_bucket,
          e.side_info.label_code};
}

EventFeatures candidate_features(const InteractionEvent& e) {
  return {e.author_id, e.side_info.page, e.side_info.tag, e.side_info.cluster,
          kPadIndex,   kPadIndex,         kPadIndex};
}

TaskLabels task_labels(const InteractionEvent& e) {
  TaskLabels out{};
  for (std::size_t i = 0; i < kNumTasks; ++i) out[i] = e.labels.values[i];
  return out;
}

SampleSet::SampleSet(std::span<const InteractionEvent> context, const FeatureVocab& vocab,
                     std::size_t seq_len, std::int64_t from, std::int64_t to)
    : seq_len_(seq_len) {
  if (seq_len == 0) throw ConfigError("sample set: sequence length must be positive");
  std::vector<std::uint64_t> ids;
  ids.reserve(context.size());
  for (const auto& e : context) ids.push_back(e.user_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  users_.resize(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) users_[i].user_id = ids[i];
  for (const auto& e : context) {
    const DomainVocab& dv = e.domain == Domain::kVideo ? vocab.video : vocab.live;
    dv.check_index(history_features(e), domain_name(e.domain));
    auto& u = users_[static_cast<std::size_t>(
        std::lower_bound(ids.begin(), ids.end(), e.user_id) - ids.begin())];
    (e.domain == Domain::kVideo ? u.video : u.live).push_back(e);
  }
  auto by_time = [](const InteractionEvent& a, const InteractionEvent& b) {
    return a.timestamp < b.timestamp;
  };
  for (std::size_t slot = 0; slot < users_.size(); ++slot) {
    auto& u = users_[slot];
    std::stable_sort(u.video.begin(), u.video.end(), by_time);
    std::stable_sort(u.live.begin(), u.live.end(), by_time);
    for (std::size_t c = 0; c < u.live.size(); ++c) {
      const std::int64_t t = u.live[c].timestamp;
      if (t < from || t >= to) continue;
      auto before = [t](const std::vector<InteractionEvent>& seq) {
        return static_cast<std::size_t>(
            std::lower_bound(seq.begin(), seq.end(), t,
                             [](const InteractionEvent& e, std::int64_t v) { return e.timestamp < v; }) -
            seq.begin());
      };
      const std::size_t ve = before(u.video);
      const std::size_t le = before(u.live);
      refs_.push_back({static_cast<std::uint32_t>(slot), static_cast<std::uint32_t>(c),
                       static_cast<std::uint32_t>(ve > seq_len ? ve - seq_len : 0),
                       static_cast<std::uint32_t>(ve),
                       static_cast<std::uint32_t>(le > seq_len ? le - seq_len : 0),
                       static_cast<std::uint32_t>(le)});
    }
  }
  // Stream order: by candidate time, then user.
  std::stable_sort(refs_.begin(), refs_.end(), [this](const Ref& a, const Ref& b) {
    const auto ta = users_[a.user_slot].live[a.candidate].timestamp;
    const auto tb = users_[b.user_slot].live[b.candidate].timestamp;
    if (ta != tb) return ta < tb;
    return users_[a.user_slot].user_id < users_[b.user_slot].user_id;
  });
}

SampleInput SampleSet::materialize(std::size_t i) const {
  const Ref& r = refs_.at(i);
  const UserEvents& u = users_[r.user_slot];
  const InteractionEvent& cand = u.live[r.candidate];
  SampleInput s;
  s.user_id = u.user_id;
  s.timestamp = cand.timestamp;
  s.video.reserve(r.video_end - r.video_begin);
  for (std::uint32_t k = r.video_begin; k < r.video_end; ++k) s.video.push_back(history_features(u.video[k]));
  s.live.reserve(r.live_end - r.live_begin);
  for (std::uint32_t k = r.live_begin; k < r.live_end; ++k) s.live.push_back(history_features(u.live[k]));
  s.candidate = candidate_features(cand);
  s.labels = task_labels(cand);
  return s;
}

const SampleSet::UserEvents& SampleSet::user(std::uint64_t user_id) const {
  auto it = std::lower_bound(users_.begin(), users_.end(), user_id,
                             [](const UserEvents& u, std::uint64_t id) { return u.user_id < id; });
  if (it == users_.end() || it->user_id != user_id) {
    throw DataError("unknown user " + std::to_string(user_id));
  }
  return *it;
}

std::optional<SampleInput> SampleSet::latest_state(std::uint64_t user_id) const {
  auto it = std::lower_bound(users_.begin(), users_.end(), user_id,
                             [](const UserEvents& u, std::uint64_t id) { return u.user_id < id; });
  if (it == users_.end() || it->user_id != user_id) return std::nullopt;
  const UserEvents& u = *it;
  SampleInput s;
  s.user_id = user_id;
  const std::size_t vb = u.video.size() > seq_len_ ? u.video.size() - seq_len_ : 0;
  const std::size_t lb = u.live.size() > seq_len_ ? u.live.size() - seq_len_ : 0;
  for (std::size_t k = vb; k < u.video.size(); ++k) s.video.push_back(history_features(u.video[k]));
  for (std::size_t k = lb; k < u.live.size(); ++k) s.live.push_back(history_features(u.live[k]));
  if (!u.live.empty()) {
    s.candidate = candidate_features(u.live.back());
    s.timestamp = u.live.back().timestamp;
  } else if (!u.video.empty()) {
    s.candidate = {kPadIndex, kPadIndex, kPadIndex, kPadIndex, kPadIndex, kPadIndex, kPadIndex};
    s.timestamp = u.video.back().timestamp;
  }
  return s;
}

std::vector<std::uint64_t> SampleSet::user_ids() const {
  std::vector<std::uint64_t> out;
  out.reserve(users_.size());
  for (const auto& u : users_) out.push_back(u.user_id);
  return out;
}

const InteractionEvent& SampleSet::video_event(std::uint64_t user_id, std::size_t i) const {
  return user(user_id).video.at(i);
}

const InteractionEvent& SampleSet::live_event(std::uint64_t user_id, std::size_t i) const {
  return user(user_id).live.at(i);
}

std::vector<std::vector<std::size_t>> build_batches(std::size_t n_samples, std::size_t batch_size,
                                                    std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n_samples; i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n_samples, i + batch_size)));
  }
  return batches;
}

}  // namespace farm::data
