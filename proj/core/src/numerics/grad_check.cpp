// SPDX-License-Identifier: Apache-2.0
#include "farm/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace farm::num {

namespace {

double evaluate(const LossFn& f, const ParamStore& params) {
  Tape tape(false);
  return f(tape, params).scalar();
}

}  // namespace

GradCheckResult grad_check(const LossFn& f, ParamStore& params, double h,
                           const GradCheckOptions& opts) {
  std::map<std::string, Tensor> saved;
  for (auto& [name, e] : params.entries()) {
    saved.emplace(name, e.grad);
    e.grad.fill(0.0);
  }
  {
    Tape tape(true);
    Var loss = f(tape, params);
    tape.backward(loss, params);
  }

  GradCheckResult result;
  std::mt19937_64 rng(opts.seed);
  for (auto& [name, e] : params.entries()) {
    std::vector<std::size_t> coords(e.value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords_per_entry != 0 && coords.size() > opts.max_coords_per_entry) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_entry);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double orig = e.value[i];
      // Difference quotient over the step actually representable at orig.
      auto central = [&](double step) {
        const double up = orig + step, down = orig - step;
        e.value[i] = up;
        const double fp = evaluate(f, params);
        e.value[i] = down;
        const double fm = evaluate(f, params);
        e.value[i] = orig;
        return (fp - fm) / (up - down);
      };
      const double numeric = central(h);
      const double analytic = e.grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.floor});
      const double err = denom > 0.0 ? std::abs(analytic - numeric) / denom : 0.0;
      ++result.coords_checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_entry = name;
        result.worst_index = i;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }

  for (auto& [name, e] : params.entries()) e.grad = std::move(saved.at(name));
  return result;
}

}  // namespace farm::num
