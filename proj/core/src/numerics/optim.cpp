// SPDX-License-Identifier: Apache-2.0
#include "farm/numerics/optim.hpp"

#include <cmath>

namespace farm::num {

void adam_step(ParamStore& params, double lr, double beta1, double beta2, double eps) {
  const double t = static_cast<double>(params.step_count() + 1);
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (auto& [_, e] : params.entries()) {
    double* w = e.value.raw();
    double* g = e.grad.raw();
    double* m = e.adam_m.raw();
    double* v = e.adam_v.raw();
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
      g[i] = 0.0;
    }
  }
  params.increment_step();
}

}  // namespace farm::num
