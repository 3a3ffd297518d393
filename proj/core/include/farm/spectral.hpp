// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "farm/numerics/autodiff.hpp"
#include "farm/numerics/param_store.hpp"
#include "farm/numerics/tensor.hpp"

namespace farm::spectral {

using num::Tensor;
using num::Var;

// Unitary DFT matrix F with F[j][k] = exp(2*pi*i*j*k/n) / sqrt(n), kept as a
// real/imaginary pair.
struct DftBasis {
  std::size_t n = 0;
  Tensor real_part;
  Tensor imag_part;
};

DftBasis build_dft_basis(std::size_t n);

// Number of low-frequency bins kept, counted on the half-spectrum.
struct CutoffConfig {
  std::size_t c = 5;

  void validate(std::size_t length) const;
};

// Real n x n matrix P with low_pass(x) = P x along the length axis: transform,
// keep bins k with min(k, n - k) < c, transform back. P is symmetric and
// idempotent.
Tensor low_pass_projection(std::size_t n, CutoffConfig cutoff);

// Per-column filters over the rows (length axis) of x [L x D].
Tensor low_pass(const Tensor& x, CutoffConfig cutoff);
Tensor high_pass(const Tensor& x, CutoffConfig cutoff);
Tensor frequency_mix(const Tensor& x, double low_gate, double high_gate, CutoffConfig cutoff);

// Differentiable forms. `projection` is a precomputed low-pass matrix whose
// size matches x.rows(); callers with zero-padded sequences may pass the
// leading block of the full-length projection.
Var low_pass(Var x, const Tensor& projection);
Var high_pass(Var x, const Tensor& projection);
// low_gate * Low[x] + high_gate * High[x]; gates are [1 x 1] vars.
Var frequency_mix(Var x, Var low_gate, Var high_gate, const Tensor& projection);

// Batched frequency_mix over stacked groups of rows in x [rows x D]. Group i
// uses rows segments[i], gates low_gate(i, 0) / high_gate(i, 0) ([G x 1]) and
// projections[segments[i].count]. Rows outside every group pass through
// unchanged. One tape node for the whole batch; `projections` must outlive
// the backward pass.
Var frequency_mix_segments(Var x, std::span<const num::Segment> segments, Var low_gate,
                           Var high_gate, std::span<const Tensor> projections);

struct FrequencyGates {
  double alpha = 0.5;  // video low
  double beta = 0.5;   // video high
  double gamma = 0.5;  // live low
  double delta = 0.5;  // live high
};

struct GateVars {
  Var alpha, beta, gamma, delta;

  FrequencyGates values() const;
};

inline constexpr const char* kGateAlpha = "gate.alpha";
inline constexpr const char* kGateBeta = "gate.beta";
inline constexpr const char* kGateGamma = "gate.gamma";
inline constexpr const char* kGateDelta = "gate.delta";

// Each gate is sigmoid(MLP(mean of the valid rows)) with its own MLP; alpha
// and beta read the video sequence, gamma and delta the live one. An empty
// sequence pools to the zero vector.
GateVars compute_gates(num::Tape& tape, const num::ParamStore& params, Var v_video, Var v_live);
FrequencyGates compute_gates(const num::ParamStore& params, const Tensor& v_video,
                             const Tensor& v_live);

}  // namespace farm::spectral
