// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace farm {

inline constexpr std::size_t kNumFeatures = 7;
inline constexpr std::size_t kNumTasks = 6;
inline constexpr int kPadIndex = -1;

enum class Feature : std::size_t { kAuthor, kPage, kTag, kCluster, kPlay, kLag, kLabel };

inline constexpr std::array<const char*, kNumFeatures> kFeatureNames = {
    "author_id", "page", "tag", "cluster", "play_bucket", "lag_bucket", "label_code"};

inline constexpr std::array<const char*, kNumTasks> kTaskNames = {
    "click", "effective_view", "long_view", "like", "comment", "gift"};

inline constexpr std::array<const char*, kNumTasks> kTaskShortNames = {
    "ctr", "etr", "lvtr", "ltr", "cmtr", "gtr"};

// Raw per-event feature indices in Feature order; kPadIndex marks padding or
// a feature unknown at request time.
using EventFeatures = std::array<int, kNumFeatures>;
using TaskLabels = std::array<double, kNumTasks>;

struct FeatureSpec {
  std::string name;
  int cardinality = 1;
  std::size_t width = 1;
};

struct DomainVocab {
  std::array<FeatureSpec, kNumFeatures> features;

  std::size_t dim() const;
  // Cardinalities >= 1, widths > 0, widths summing to `declared_dim`.
  void validate(std::size_t declared_dim, const std::string& domain) const;
  void check_index(const EventFeatures& f, const std::string& domain) const;
};

struct FeatureVocab {
  DomainVocab video;
  DomainVocab live;

  // Widths 32+8+16+12+8+8+8 = 92 (video) and 24+4+12+8+4+4+8 = 64 (live).
  static FeatureVocab standard(int n_authors, int n_pages, int n_tags, int n_clusters,
                               int n_play_buckets, int n_lag_buckets, int n_label_codes);
  // Rescales widths to the requested totals; used for small test models.
  static FeatureVocab with_dims(const FeatureVocab& base, std::size_t video_dim,
                                std::size_t live_dim);

  bool operator==(const FeatureVocab& other) const;
};

inline bool operator==(const FeatureSpec& a, const FeatureSpec& b) {
  return a.name == b.name && a.cardinality == b.cardinality && a.width == b.width;
}

// One training or evaluation example: a live candidate plus the user's
// histories strictly before it (oldest first, at most L rows each).
struct SampleInput {
  std::uint64_t user_id = 0;
  std::int64_t timestamp = 0;
  std::vector<EventFeatures> video;
  std::vector<EventFeatures> live;
  EventFeatures candidate{};
  TaskLabels labels{};
};

}  // namespace farm
