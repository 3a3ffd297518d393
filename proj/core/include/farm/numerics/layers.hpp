// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <span>
#include <string>

#include "farm/numerics/autodiff.hpp"
#include "farm/numerics/param_store.hpp"

namespace farm::num {

// Registers `<prefix>.l{i}.w` [dims[i] x dims[i+1]] and `<prefix>.l{i}.b`
// [1 x dims[i+1]] for every consecutive pair in `dims`.
void init_mlp(ParamStore& params, const std::string& prefix, std::span<const std::size_t> dims,
              std::mt19937_64& rng);

// Affine layers with ReLU in between; the last layer stays affine.
// Layers are discovered from the store by probing `<prefix>.l0.w`, `.l1.w`, ...
Var mlp_forward(Tape& tape, const ParamStore& params, const std::string& prefix, Var x);

// Non-differentiable convenience wrapper.
Tensor mlp_forward(const ParamStore& params, const std::string& prefix, const Tensor& x);

std::size_t mlp_depth(const ParamStore& params, const std::string& prefix);

}  // namespace farm::num
