// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "farm/data.hpp"
#include "farm/model.hpp"
#include "farm/numerics/optim.hpp"

namespace farm {

// Every knob of a run. Serialized as flat `key=value` lines; stream settings
// use a `stream.` prefix.
struct RunConfig {
  model::ModelConfig model;
  data::StreamConfig stream;
  double lr = 1e-3;
  std::size_t batch_size = 256;
  int epochs = 1;
  int train_days = 7;
  std::uint64_t seed = 1;
  bool eval_each_epoch = true;

  void validate() const;
  FeatureVocab vocab() const;
  num::AdamConfig adam() const;

  std::string to_text() const;
  // 64-bit FNV-1a of to_text(), hex.
  std::string hash() const;

  // Keys not mentioned keep their value from `base`.
  static RunConfig parse(const std::string& text, RunConfig base);
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path, RunConfig base);
  static RunConfig load(const std::filesystem::path& path);
  // Large-batch settings used by the original experiments.
  static RunConfig large_batch_preset();
};

// Named sub-seed derived from the run seed, so that e.g. parameter init and
// data order are independent streams.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& name);

}  // namespace farm
