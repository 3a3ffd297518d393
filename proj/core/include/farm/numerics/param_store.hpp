// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "farm/numerics/tensor.hpp"

namespace farm::num {

struct ParamEntry {
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
};

// Named trainable tensors plus optimizer state. Single writer: the training
// loop owns it; evaluation workers only read.
class ParamStore {
 public:
  // Adds a parameter initialized to `value`. Throws on duplicate names.
  ParamEntry& add(const std::string& name, Tensor value);

  // Xavier/Glorot uniform in +-sqrt(6 / (fan_in + fan_out)).
  ParamEntry& add_glorot(const std::string& name, std::size_t fan_in, std::size_t fan_out,
                         std::mt19937_64& rng);
  ParamEntry& add_zeros(const std::string& name, Shape shape);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const ParamEntry& at(const std::string& name) const;
  ParamEntry& at(const std::string& name);
  const Tensor& value(const std::string& name) const { return at(name).value; }
  Tensor& value(const std::string& name) { return at(name).value; }
  Tensor& grad(const std::string& name) { return at(name).grad; }

  const std::map<std::string, ParamEntry>& entries() const noexcept { return entries_; }
  std::map<std::string, ParamEntry>& entries() noexcept { return entries_; }
  std::vector<std::string> names() const;

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t num_scalars() const;

  std::uint64_t step_count() const noexcept { return step_count_; }
  void set_step_count(std::uint64_t s) noexcept { step_count_ = s; }
  void increment_step() noexcept { ++step_count_; }

  void zero_grad();

 private:
  std::map<std::string, ParamEntry> entries_;
  std::uint64_t step_count_ = 0;
};

}  // namespace farm::num
