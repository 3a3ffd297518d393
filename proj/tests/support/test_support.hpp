// SPDX-License-Identifier: Apache-2.0
// Shared fixtures for unit and acceptance tests.
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "farm/features.hpp"
#include "farm/model.hpp"
#include "farm/numerics/param_store.hpp"
#include "farm/numerics/tensor.hpp"
#include "farm/run_config.hpp"

namespace farm::testing {

num::Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                          double lo = -2.0, double hi = 2.0);

// Textbook triple loop; independent of the Eigen-backed kernels.
num::Tensor naive_matmul(const num::Tensor& a, const num::Tensor& b);

// Small vocabulary and model used wherever full-size dims would only cost time.
FeatureVocab tiny_vocab();
model::ModelConfig tiny_config(std::size_t seq_len = 8);

// A run that trains in well under a second: tiny model over a small stream.
RunConfig tiny_run(std::uint64_t n_users = 40);

// Adds N(0, scale) noise to every parameter. Fresh inits put zero biases
// behind zero inputs (empty histories), i.e. exactly on a ReLU kink where
// finite differences are meaningless; gradient checks start from here instead.
void jitter(num::ParamStore& ps, std::uint64_t seed, double scale = 0.05);

// Random sample whose histories have the given lengths.
SampleInput random_sample(const FeatureVocab& vocab, std::size_t n_video, std::size_t n_live,
                          std::mt19937_64& rng, std::uint64_t user_id = 0);

// A batch with a mix of empty, short and over-long histories.
std::vector<SampleInput> mixed_batch(const FeatureVocab& vocab, std::size_t batch,
                                     std::size_t seq_len, std::mt19937_64& rng);

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& p);

}  // namespace farm::testing
