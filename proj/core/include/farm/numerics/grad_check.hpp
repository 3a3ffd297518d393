// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "farm/numerics/autodiff.hpp"
#include "farm/numerics/param_store.hpp"

namespace farm::num {

// Builds a single-element loss from the current parameter values.
using LossFn = std::function<Var(Tape&, const ParamStore&)>;

struct GradCheckOptions {
  // Per-coordinate error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  // Central differences of a double loss of order 1-10 carry about 1e-10 of
  // round-off at h = 1e-5, so below the floor the check turns into an
  // absolute bound of floor * tolerance.
  double floor = 1e-4;
  // 0 checks every coordinate; otherwise a seeded sample of this many per entry.
  std::size_t max_coords_per_entry = 0;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_entry;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

// Central differences (f(p + h) - f(p - h)) / 2h per coordinate against the
// reverse-mode gradient. Parameter values and gradients are left as found.
GradCheckResult grad_check(const LossFn& f, ParamStore& params, double h = 1e-5,
                           const GradCheckOptions& opts = {});

}  // namespace farm::num
