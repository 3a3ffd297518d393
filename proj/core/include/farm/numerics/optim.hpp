// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "farm/numerics/param_store.hpp"

namespace farm::num {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update over every entry, then zeroes the gradients
// and bumps the step counter.
void adam_step(ParamStore& params, double lr, double beta1, double beta2, double eps);

inline void adam_step(ParamStore& params, const AdamConfig& cfg) {
  adam_step(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
}

}  // namespace farm::num
