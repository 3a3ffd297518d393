// SPDX-License-Identifier: Apache-2.0
#include "farm/numerics/param_store.hpp"

#include <cmath>

#include "farm/error.hpp"

namespace farm::num {

ParamEntry& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  ParamEntry entry;
  entry.grad = Tensor::zeros_like(value);
  entry.adam_m = Tensor::zeros_like(value);
  entry.adam_v = Tensor::zeros_like(value);
  entry.value = std::move(value);
  return entries_.emplace(name, std::move(entry)).first->second;
}

ParamEntry& ParamStore::add_glorot(const std::string& name, std::size_t fan_in,
                                   std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w({fan_in, fan_out});
  for (double& v : w.data()) v = dist(rng);
  return add(name, std::move(w));
}

ParamEntry& ParamStore::add_zeros(const std::string& name, Shape shape) {
  return add(name, Tensor(std::move(shape)));
}

const ParamEntry& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw MissingParameterError(name);
  return it->second;
}

ParamEntry& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw MissingParameterError(name);
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, e] : entries_) e.grad.fill(0.0);
}

}  // namespace farm::num
