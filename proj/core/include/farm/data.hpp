// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "farm/features.hpp"

namespace farm::data {

enum class Domain : std::uint8_t { kVideo, kLive };

const char* domain_name(Domain d);
Domain parse_domain(const std::string& s);

struct SideInfo {
  int page = 0;
  int tag = 0;
  int cluster = 0;
  int play_bucket = 0;
  int lag_bucket = 0;
  int label_code = 0;

  friend bool operator==(const SideInfo&, const SideInfo&) = default;
};

struct BehaviorLabels {
  std::array<std::uint8_t, kNumTasks> values{};  // click .. gift

  bool any() const;
  friend bool operator==(const BehaviorLabels&, const BehaviorLabels&) = default;
};

struct InteractionEvent {
  std::uint64_t user_id = 0;
  Domain domain = Domain::kVideo;
  int author_id = 0;
  std::int64_t timestamp = 0;  // seconds since stream start
  SideInfo side_info;
  BehaviorLabels labels;
  std::uint64_t session_id = 0;

  friend bool operator==(const InteractionEvent&, const InteractionEvent&) = default;
};

inline constexpr std::int64_t kSecondsPerDay = 86400;
inline constexpr int kPlayBuckets = 8;
inline constexpr int kLagBuckets = 8;
inline constexpr int kLabelCodes = 7;  // deepest behavior reached, 0 = exposure only

struct StreamConfig {
  std::uint64_t n_users = 2000;
  int n_authors_per_domain = 1000;
  int days = 8;
  double exposure_ratio = 9.0;  // video : live
  std::array<double, kNumTasks> base_rates = {0.10, 0.06, 0.03, 0.01, 0.005, 0.001};
  double rho = 0.9;
  std::uint64_t seed = 42;

  // Synthetic-world shape.
  int latent_dim = 16;
  int n_tags = 24;
  int n_clusters = 6;
  int n_pages = 4;
  double events_per_user_day = 31.0;
  double activity_spread = 0.5;       // lognormal sigma of per-user activity
  double exploration = 0.3;           // share of exposures drawn uniformly over tags
  double tag_sharpness = 2.0;         // softmax temperature over tag affinities
  double affinity_weight = 1.5;       // weight of latent affinity in label logits
  double propensity_weight = 1.5;     // weight of per-user engagement propensity on like/comment/gift

  // Video-domain behaviour rates (feed plays are far more common than live clicks).
  std::array<double, kNumTasks> video_rates = {0.60, 0.40, 0.20, 0.05, 0.01, 0.005};

  void validate() const;
  FeatureVocab vocab() const;
};

// Ground-truth machinery exposed for tests; not part of the emitted dataset.
struct UserProfile {
  std::vector<double> z_shared;
  std::vector<double> z_video;
  std::vector<double> z_live;
  double propensity = 0.0;
  double activity = 0.0;  // events per day
};

struct AuthorProfile {
  int tag = 0;
  int cluster = 0;
  int page = 0;
  double popularity = 0.0;
  std::vector<double> z;
};

class SyntheticWorld {
 public:
  explicit SyntheticWorld(const StreamConfig& cfg);

  const StreamConfig& config() const { return cfg_; }
  UserProfile user(std::uint64_t user_id) const;
  const AuthorProfile& author(Domain d, int author_id) const;
  // Latent affinity of a user for an author in a domain (before behaviour biases).
  double affinity(const UserProfile& u, Domain d, int author_id) const;
  // Conditional-chain biases; stage k fires only if stage k-1 fired.
  const std::array<double, kNumTasks>& stage_bias(Domain d) const;

  std::vector<InteractionEvent> generate_user(std::uint64_t user_id) const;

 private:
  void calibrate(Domain d);

  StreamConfig cfg_;
  std::vector<std::vector<double>> tag_centroids_;
  std::vector<AuthorProfile> video_authors_;
  std::vector<AuthorProfile> live_authors_;
  std::vector<std::vector<int>> video_by_tag_;
  std::vector<std::vector<int>> live_by_tag_;
  std::array<double, kNumTasks> video_bias_{};
  std::array<double, kNumTasks> live_bias_{};
};

// Timestamp-ordered (ties by user, then domain, then session) event stream.
// Pure function of the config.
std::vector<InteractionEvent> generate_stream(const StreamConfig& cfg);

struct TrainTestSplit {
  std::vector<InteractionEvent> train;
  std::vector<InteractionEvent> test;
};

// First `train_days` days go to train, the following day to test.
TrainTestSplit split_train_test(std::span<const InteractionEvent> events, int train_days);

EventFeatures history_features(const InteractionEvent& e);
// Author attributes only: behaviour features are unknown at request time.
EventFeatures candidate_features(const InteractionEvent& e);
TaskLabels task_labels(const InteractionEvent& e);

// Index of live candidates with their causal histories. Events are grouped
// per user so a sample is materialized on demand.
class SampleSet {
 public:
  struct Ref {
    std::uint32_t user_slot;
    std::uint32_t candidate;     // index into that user's live events
    std::uint32_t video_begin, video_end;
    std::uint32_t live_begin, live_end;
  };

  // `context` supplies histories; candidates are the live events of
  // `context` with timestamp in [from, to).
  SampleSet(std::span<const InteractionEvent> context, const FeatureVocab& vocab,
            std::size_t seq_len, std::int64_t from = INT64_MIN, std::int64_t to = INT64_MAX);

  std::size_t size() const { return refs_.size(); }
  std::size_t seq_len() const { return seq_len_; }
  const Ref& ref(std::size_t i) const { return refs_[i]; }
  SampleInput materialize(std::size_t i) const;
  std::uint64_t user_of(std::size_t i) const { return users_[refs_[i].user_slot].user_id; }

  // Histories at the end of the context for one user (no candidate).
  std::optional<SampleInput> latest_state(std::uint64_t user_id) const;
  std::vector<std::uint64_t> user_ids() const;
  const InteractionEvent& video_event(std::uint64_t user_id, std::size_t i) const;
  const InteractionEvent& live_event(std::uint64_t user_id, std::size_t i) const;

 private:
  struct UserEvents {
    std::uint64_t user_id = 0;
    std::vector<InteractionEvent> video;
    std::vector<InteractionEvent> live;
  };
  const UserEvents& user(std::uint64_t user_id) const;

  std::size_t seq_len_;
  std::vector<UserEvents> users_;
  std::vector<Ref> refs_;
};

// Consecutive batches of sample indices, optionally shuffled.
std::vector<std::vector<std::size_t>> build_batches(std::size_t n_samples, std::size_t batch_size,
                                                    std::optional<std::uint64_t> shuffle_seed);

}  // namespace farm::data
