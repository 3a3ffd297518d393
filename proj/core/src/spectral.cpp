// SPDX-License-Identifier: Apache-2.0
#include "farm/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <numbers>

#include "farm/error.hpp"
#include "farm/numerics/layers.hpp"
#include "numerics/eigen_map.hpp"

namespace farm::spectral {

DftBasis build_dft_basis(std::size_t n) {
  if (n == 0) throw ConfigError("build_dft_basis: length must be positive");
  DftBasis basis{n, Tensor({n, n}), Tensor({n, n})};
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      // Reduce j*k mod n first so the angle stays small and exact for the
      // symmetric entries.
      const std::size_t jk = (j * k) % n;
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(jk) /
                           static_cast<double>(n);
      basis.real_part(j, k) = std::cos(angle) * norm;
      basis.imag_part(j, k) = std::sin(angle) * norm;
    }
  }
  return basis;
}

void CutoffConfig::validate(std::size_t length) const {
  if (c == 0) throw ConfigError("cutoff must be at least 1");
  if (c > length) {
    throw ConfigError("cutoff " + std::to_string(c) + " exceeds sequence length " +
                      std::to_string(length));
  }
}

Tensor low_pass_projection(std::size_t n, CutoffConfig cutoff) {
  cutoff.validate(n);
  const DftBasis f = build_dft_basis(n);
  std::vector<double> keep(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    if (std::min(k, n - k) < cutoff.c) keep[k] = 1.0;
  }
  // P = F^H diag(keep) F. The mask is conjugate-symmetric, so the imaginary
  // part cancels; it is computed anyway and checked.
  Tensor p({n, n});
  double imag_residue = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t s = 0; s < n; ++s) {
      double re = 0.0;
      double im = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (keep[k] == 0.0) continue;
        const double ar = f.real_part(k, t), ai = f.imag_part(k, t);
        const double br = f.real_part(k, s), bi = f.imag_part(k, s);
        re += ar * br + ai * bi;
        im += ar * bi - ai * br;
      }
      p(t, s) = re;
      imag_residue = std::max(imag_residue, std::abs(im));
    }
  }
  if (imag_residue > 1e-10) {
    throw Error("low_pass_projection: imaginary residue " + std::to_string(imag_residue));
  }
  return p;
}

Tensor low_pass(const Tensor& x, CutoffConfig cutoff) {
  if (x.rank() != 2) throw ShapeError("low_pass: expected [L x D], got " +
                                      num::shape_to_string(x.shape()));
  return num::matmul(low_pass_projection(x.rows(), cutoff), x);
}

Tensor high_pass(const Tensor& x, CutoffConfig cutoff) {
  return num::sub(x, low_pass(x, cutoff));
}

Tensor frequency_mix(const Tensor& x, double low_gate, double high_gate, CutoffConfig cutoff) {
  const Tensor low = low_pass(x, cutoff);
  Tensor out = num::scale(low, low_gate);
  num::axpy(out, num::sub(x, low), high_gate);
  return out;
}

namespace {

void check_projection(Var x, const Tensor& projection) {
  if (projection.rows() != x.rows() || projection.cols() != x.rows()) {
    throw ShapeError("low_pass: projection " + num::shape_to_string(projection.shape()) +
                     " does not match sequence " + num::shape_to_string(x.shape()));
  }
}

}  // namespace

Var low_pass(Var x, const Tensor& projection) {
  check_projection(x, projection);
  return num::matmul(x.tape()->constant(projection), x);
}

Var high_pass(Var x, const Tensor& projection) { return num::sub(x, low_pass(x, projection)); }

Var frequency_mix(Var x, Var low_gate, Var high_gate, const Tensor& projection) {
  Var low = low_pass(x, projection);
  Var high = num::sub(x, low);
  return num::add(num::scale_by(low, low_gate), num::scale_by(high, high_gate));
}

Var frequency_mix_segments(Var x, std::span<const num::Segment> segments, Var low_gate,
                           Var high_gate, std::span<const Tensor> projections) {
  using num::detail::RowMatrix;
  const std::size_t G = segments.size();
  if (low_gate.rows() != G || high_gate.rows() != G || low_gate.cols() != 1 ||
      high_gate.cols() != 1) {
    throw ShapeError("frequency_mix_segments: gates " + num::shape_to_string(low_gate.shape()) +
                     " / " + num::shape_to_string(high_gate.shape()) + " for " +
                     std::to_string(G) + " groups");
  }
  const auto ix = [](std::size_t n) { return static_cast<Eigen::Index>(n); };
  for (std::size_t i = 0; i < G; ++i) {
    const auto& s = segments[i];
    if (s.begin + s.count > x.rows()) {
      throw ShapeError("frequency_mix_segments: group " + std::to_string(i) + " exceeds " +
                       num::shape_to_string(x.shape()));
    }
    if (s.count >= projections.size() || projections[s.count].rows() != s.count ||
        (s.count > 0 && projections[s.count].cols() != s.count)) {
      throw ShapeError("frequency_mix_segments: no " + std::to_string(s.count) + "x" +
                       std::to_string(s.count) + " projection");
    }
  }
  Tensor out = x.value();
  {
    const auto X = num::detail::as_matrix(x.value());
    auto O = num::detail::as_matrix(out);
    for (std::size_t i = 0; i < G; ++i) {
      const auto& s = segments[i];
      if (s.count == 0) continue;
      const double lo = low_gate.value()[i], hi = high_gate.value()[i];
      const auto xs = X.middleRows(ix(s.begin), ix(s.count));
      const RowMatrix px = num::detail::as_matrix(projections[s.count]) * xs;
      O.middleRows(ix(s.begin), ix(s.count)) = hi * xs + (lo - hi) * px;
    }
  }
  std::vector<num::Segment> segs(segments.begin(), segments.end());
  return x.tape()->record(
      std::move(out), {x, low_gate, high_gate},
      [x, low_gate, high_gate, segs = std::move(segs), projections, ix](num::Tape& tp,
                                                                         const Tensor& g) {
        const bool gx = tp.needs_grad(x), gl = tp.needs_grad(low_gate),
                   gh = tp.needs_grad(high_gate);
        const auto X = num::detail::as_matrix(x.value());
        const auto Gm = num::detail::as_matrix(g);
        std::optional<num::detail::MatMap> dX;
        if (gx) dX.emplace(num::detail::as_matrix(tp.grad_buffer(x)));
        Tensor* dlo = gl ? &tp.grad_buffer(low_gate) : nullptr;
        Tensor* dhi = gh ? &tp.grad_buffer(high_gate) : nullptr;
        // Rows outside every group are an identity map.
        std::vector<bool> covered(x.rows(), false);
        for (std::size_t i = 0; i < segs.size(); ++i) {
          const auto& s = segs[i];
          if (s.count == 0) continue;
          std::fill_n(covered.begin() + static_cast<std::ptrdiff_t>(s.begin), s.count, true);
          const double lo = low_gate.value()[i], hi = high_gate.value()[i];
          const auto P = num::detail::as_matrix(projections[s.count]);
          const auto gs = Gm.middleRows(ix(s.begin), ix(s.count));
          const auto xs = X.middleRows(ix(s.begin), ix(s.count));
          if (gx) {
            dX->middleRows(ix(s.begin), ix(s.count)).noalias() +=
                hi * gs + (lo - hi) * (P.transpose() * gs);
          }
          if (gl || gh) {
            const RowMatrix px = P * xs;
            const double low_dot = gs.cwiseProduct(px).sum();
            if (dlo) (*dlo)[i] += low_dot;
            if (dhi) (*dhi)[i] += gs.cwiseProduct(xs).sum() - low_dot;
          }
        }
        if (gx) {
          for (std::size_t r = 0; r < covered.size(); ++r) {
            if (!covered[r]) dX->row(ix(r)) += Gm.row(ix(r));
          }
        }
      });
}

FrequencyGates GateVars::values() const {
  return {alpha.scalar(), beta.scalar(), gamma.scalar(), delta.scalar()};
}

namespace {

Var pooled(Var seq) {
  if (seq.rows() == 0) return seq.tape()->constant(Tensor({1, seq.cols()}));
  return num::mean_rows(seq);
}

Var gate(num::Tape& tape, const num::ParamStore& params, const char* prefix, Var pool) {
  Var logit = num::mlp_forward(tape, params, prefix, pool);
  if (logit.value().size() != 1) {
    throw ShapeError(std::string("gate MLP ") + prefix + " must produce a scalar, got " +
                     num::shape_to_string(logit.shape()));
  }
  return num::sigmoid(logit);
}

}  // namespace

GateVars compute_gates(num::Tape& tape, const num::ParamStore& params, Var v_video, Var v_live) {
  Var pv = pooled(v_video);
  Var pl = pooled(v_live);
  return {gate(tape, params, kGateAlpha, pv), gate(tape, params, kGateBeta, pv),
          gate(tape, params, kGateGamma, pl), gate(tape, params, kGateDelta, pl)};
}

FrequencyGates compute_gates(const num::ParamStore& params, const Tensor& v_video,
                             const Tensor& v_live) {
  num::Tape tape(false);
  return compute_gates(tape, params, tape.constant(v_video), tape.constant(v_live)).values();
}

}  // namespace farm::spectral
