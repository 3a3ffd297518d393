// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace farm::metrics {

struct ScoredSample {
  std::uint64_t user_id = 0;
  double score = 0.0;
  bool label = false;
};

// Mann-Whitney AUC with average ranks for ties. Empty when either class is
// missing.
std::optional<double> auc(std::span<const ScoredSample> samples);

struct UserAuc {
  std::uint64_t user_id = 0;
  std::size_t n_samples = 0;
  double auc = 0.0;
};

// Per-user AUC for users that have both classes, ordered by user id.
std::vector<UserAuc> per_user_auc(std::span<const ScoredSample> samples);

// Unweighted mean of per-user AUC over users with both classes.
std::optional<double> uauc(std::span<const ScoredSample> samples);
// Per-user AUC weighted by the user's sample count.
std::optional<double> gauc(std::span<const ScoredSample> samples);

}  // namespace farm::metrics
