// SPDX-License-Identifier: Apache-2.0
#include "farm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "farm/error.hpp"

namespace farm::metrics {

std::optional<double> auc(std::span<const ScoredSample> samples) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (const auto& s : samples) {
    if (!std::isfinite(s.score)) throw DataError("auc: non-finite score");
  }
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return samples[a].score < samples[b].score; });
  // Sum of 1-based average ranks of the positives.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && samples[order[j]].score == samples[order[i]].score) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (samples[order[k]].label) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = samples.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

std::vector<UserAuc> per_user_auc(std::span<const ScoredSample> samples) {
  std::vector<ScoredSample> sorted(samples.begin(), samples.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.user_id < b.user_id; });
  std::vector<UserAuc> out;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].user_id == sorted[i].user_id) ++j;
    const std::span<const ScoredSample> group(sorted.data() + i, j - i);
    if (const auto a = auc(group)) out.push_back({sorted[i].user_id, group.size(), *a});
    i = j;
  }
  return out;
}

std::optional<double> uauc(std::span<const ScoredSample> samples) {
  const auto users = per_user_auc(samples);
  if (users.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& u : users) sum += u.auc;
  return sum / static_cast<double>(users.size());
}

std::optional<double> gauc(std::span<const ScoredSample> samples) {
  const auto users = per_user_auc(samples);
  if (users.empty()) return std::nullopt;
  double weighted = 0.0;
  double total = 0.0;
  for (const auto& u : users) {
    weighted += static_cast<double>(u.n_samples) * u.auc;
    total += static_cast<double>(u.n_samples);
  }
  return weighted / total;
}

}  // namespace farm::metrics
