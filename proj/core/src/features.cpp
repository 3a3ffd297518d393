// SPDX-License-Identifier: Apache-2.0
#include "farm/features.hpp"

#include <cmath>
#include <numeric>

#include "farm/error.hpp"

namespace farm {

std::size_t DomainVocab::dim() const {
  std::size_t d = 0;
  for (const auto& f : features) d += f.width;
  return d;
}

void DomainVocab::validate(std::size_t declared_dim, const std::string& domain) const {
  for (const auto& f : features) {
    if (f.cardinality < 1) throw ConfigError(domain + " feature " + f.name + ": cardinality < 1");
    if (f.width == 0) throw ConfigError(domain + " feature " + f.name + ": zero width");
  }
  if (dim() != declared_dim) {
    throw ConfigError(domain + " embedding widths sum to " + std::to_string(dim()) +
                      ", expected " + std::to_string(declared_dim));
  }
}

void DomainVocab::check_index(const EventFeatures& f, const std::string& domain) const {
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (f[i] == kPadIndex) continue;
    if (f[i] < 0 || f[i] >= features[i].cardinality) {
      throw DataError(domain + " feature " + features[i].name + ": index " +
                      std::to_string(f[i]) + " outside vocabulary of " +
                      std::to_string(features[i].cardinality));
    }
  }
}

FeatureVocab FeatureVocab::standard(int n_authors, int n_pages, int n_tags, int n_clusters,
                                    int n_play_buckets, int n_lag_buckets, int n_label_codes) {
  const std::array<int, kNumFeatures> cards = {n_authors,      n_pages,       n_tags,
                                               n_clusters,     n_play_buckets, n_lag_buckets,
                                               n_label_codes};
  const std::array<std::size_t, kNumFeatures> video_w = {32, 8, 16, 12, 8, 8, 8};
  const std::array<std::size_t, kNumFeatures> live_w = {24, 4, 12, 8, 4, 4, 8};
  FeatureVocab v;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    v.video.features[i] = {kFeatureNames[i], cards[i], video_w[i]};
    v.live.features[i] = {kFeatureNames[i], cards[i], live_w[i]};
  }
  return v;
}

namespace {

void rescale(DomainVocab& d, std::size_t target) {
  const double total = static_cast<double>(d.dim());
  std::size_t assigned = 0;
  for (auto& f : d.features) {
    f.width = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(static_cast<double>(f.width) * target / total)));
    assigned += f.width;
  }
  // Hand the rounding remainder to the widest features first.
  std::size_t i = 0;
  while (assigned < target) {
    d.features[i % kNumFeatures].width += 1;
    ++assigned;
    ++i;
  }
  while (assigned > target) {
    auto& f = d.features[i % kNumFeatures];
    if (f.width > 1) {
      f.width -= 1;
      --assigned;
    }
    ++i;
  }
}

}  // namespace

FeatureVocab FeatureVocab::with_dims(const FeatureVocab& base, std::size_t video_dim,
                                     std::size_t live_dim) {
  if (video_dim < kNumFeatures || live_dim < kNumFeatures) {
    throw ConfigError("embedding dims must allow one column per feature");
  }
  FeatureVocab v = base;
  rescale(v.video, video_dim);
  rescale(v.live, live_dim);
  return v;
}

bool FeatureVocab::operator==(const FeatureVocab& other) const {
  return video.features == other.video.features && live.features == other.live.features;
}

}  // namespace farm
