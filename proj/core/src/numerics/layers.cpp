// SPDX-License-Identifier: Apache-2.0
#include "farm/numerics/layers.hpp"

#include "farm/error.hpp"

namespace farm::num {

namespace {

std::string weight_name(const std::string& prefix, std::size_t layer) {
  return prefix + ".l" + std::to_string(layer) + ".w";
}

std::string bias_name(const std::string& prefix, std::size_t layer) {
  return prefix + ".l" + std::to_string(layer) + ".b";
}

}  // namespace

void init_mlp(ParamStore& params, const std::string& prefix, std::span<const std::size_t> dims,
              std::mt19937_64& rng) {
  if (dims.size() < 2) throw ConfigError("init_mlp: need at least input and output widths");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    params.add_glorot(weight_name(prefix, i), dims[i], dims[i + 1], rng);
    params.add_zeros(bias_name(prefix, i), {1, dims[i + 1]});
  }
}

std::size_t mlp_depth(const ParamStore& params, const std::string& prefix) {
  std::size_t n = 0;
  while (params.contains(weight_name(prefix, n))) ++n;
  return n;
}

Var mlp_forward(Tape& tape, const ParamStore& params, const std::string& prefix, Var x) {
  const std::size_t depth = mlp_depth(params, prefix);
  if (depth == 0) throw MissingParameterError(weight_name(prefix, 0));
  Var h = x;
  for (std::size_t i = 0; i < depth; ++i) {
    const std::string bn = bias_name(prefix, i);
    if (!params.contains(bn)) throw MissingParameterError(bn);
    h = add_row(matmul(h, tape.param(params, weight_name(prefix, i))), tape.param(params, bn));
    if (i + 1 < depth) h = relu(h);
  }
  return h;
}

Tensor mlp_forward(const ParamStore& params, const std::string& prefix, const Tensor& x) {
  Tape tape(false);
  return mlp_forward(tape, params, prefix, tape.constant(x)).value();
}

}  // namespace farm::num
