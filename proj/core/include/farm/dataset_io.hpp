// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "farm/data.hpp"

namespace farm::data {

inline constexpr const char* kDatasetSchema = "farm.events";
inline constexpr int kDatasetVersion = 1;

struct Dataset {
  StreamConfig config;  // generator settings recorded in the header
  std::vector<InteractionEvent> events;

  FeatureVocab vocab() const { return config.vocab(); }
};

// JSON lines: a schema header, then one event per line. Paths ending in
// ".gz" are gzip-compressed.
void write_dataset(const std::filesystem::path& path, const StreamConfig& cfg,
                   std::span<const InteractionEvent> events);
Dataset read_dataset(const std::filesystem::path& path);

std::string event_to_json(const InteractionEvent& e);
InteractionEvent event_from_json(const std::string& line);

}  // namespace farm::data
