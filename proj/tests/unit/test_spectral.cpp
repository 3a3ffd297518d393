// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "farm/error.hpp"
#include "farm/model.hpp"
#include "farm/numerics/grad_check.hpp"
#include "farm/spectral.hpp"
#include "test_support.hpp"

namespace {

using farm::num::ParamStore;
using farm::num::Segment;
using farm::num::Tape;
using farm::num::Tensor;
using farm::num::Var;
using farm::spectral::CutoffConfig;
using farm::testing::random_tensor;
using cd = std::complex<double>;

// Low-pass by explicit forward/inverse DFT sums per column.
Tensor oracle_low_pass(const Tensor& x, std::size_t c) {
  const std::size_t n = x.rows();
  Tensor out({n, x.cols()});
  for (std::size_t col = 0; col < x.cols(); ++col) {
    std::vector<cd> spec(n);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j < n; ++j) {
        spec[k] += x(j, col) * std::polar(1.0, -2.0 * std::numbers::pi * double(j * k) / double(n));
      }
      if (std::min(k, n - k) >= c) spec[k] = 0.0;
    }
    for (std::size_t j = 0; j < n; ++j) {
      cd s = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        s += spec[k] * std::polar(1.0, 2.0 * std::numbers::pi * double(j * k) / double(n));
      }
      EXPECT_LT(std::abs(s.imag()) / double(n), 1e-10);
      out(j, col) = s.real() / double(n);
    }
  }
  return out;
}

TEST(DftBasis, SmallCases) {
  const auto b1 = farm::spectral::build_dft_basis(1);
  EXPECT_EQ(b1.real_part, Tensor::matrix(1, 1, {1.0}));
  EXPECT_EQ(b1.imag_part, Tensor::matrix(1, 1, {0.0}));
  const auto b2 = farm::spectral::build_dft_basis(2);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(b2.real_part(0, 0), r, 1e-15);
  EXPECT_NEAR(b2.real_part(0, 1), r, 1e-15);
  EXPECT_NEAR(b2.real_part(1, 0), r, 1e-15);
  EXPECT_NEAR(b2.real_part(1, 1), -r, 1e-15);
  for (double v : b2.imag_part.data()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(DftBasis, RowsAreFourierVectorsAndUnitary) {
  for (std::size_t n = 1; n <= 64; ++n) {
    const auto b = farm::spectral::build_dft_basis(n);
    double worst = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const cd f = std::polar(1.0 / std::sqrt(double(n)),
                                2.0 * std::numbers::pi * double(i * j) / double(n));
        EXPECT_NEAR(b.real_part(i, j), f.real(), 1e-12);
        EXPECT_NEAR(b.imag_part(i, j), f.imag(), 1e-12);
        cd s = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          s += cd(b.real_part(i, k), b.imag_part(i, k)) *
               std::conj(cd(b.real_part(j, k), b.imag_part(j, k)));
        }
        worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
      }
    }
    EXPECT_LT(worst, 1e-10) << "n=" << n;
  }
}

TEST(LowPass, HandCases) {
  const Tensor constant({6, 2}, 3.25);
  EXPECT_LT(farm::num::max_abs_diff(farm::spectral::low_pass(constant, {1}), constant), 1e-12);
  EXPECT_LT(farm::num::max_abs_diff(farm::spectral::high_pass(constant, {1}), Tensor({6, 2})), 1e-12);
  const Tensor alt = Tensor::matrix(4, 1, {1, -1, 1, -1});
  EXPECT_LT(farm::num::max_abs_diff(farm::spectral::low_pass(alt, {1}), Tensor({4, 1})), 1e-12);
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor(7, 3, rng);
  EXPECT_LT(farm::num::max_abs_diff(farm::spectral::low_pass(x, {7}), x), 1e-12);
  EXPECT_LT(farm::num::max_abs_diff(farm::spectral::high_pass(x, {7}), Tensor({7, 3})), 1e-12);
}

TEST(LowPass, MatchesExplicitDftOracle) {
  std::mt19937_64 rng(8);
  for (std::size_t n : {1u, 2u, 5u, 8u, 13u, 50u}) {
    for (std::size_t c = 1; c <= n; c += (n > 10 ? 4 : 1)) {
      const Tensor x = random_tensor(n, 3, rng);
      EXPECT_LT(farm::num::max_abs_diff(farm::spectral::low_pass(x, {c}), oracle_low_pass(x, c)), 1e-10)
          << "n=" << n << " c=" << c;
    }
  }
}

TEST(LowPass, ReconstructionLinearityIdempotenceAllSizes) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> coef(-3, 3);
  for (std::size_t n = 1; n <= 64; ++n) {
    for (std::size_t c = 1; c <= n; ++c) {
      const CutoffConfig cut{c};
      const Tensor x = random_tensor(n, 2, rng);
      const Tensor y = random_tensor(n, 2, rng);
      const Tensor lo = farm::spectral::low_pass(x, cut);
      const Tensor sum = farm::num::add(lo, farm::spectral::high_pass(x, cut));
      ASSERT_LT(farm::num::max_abs_diff(sum, x), 1e-10) << n << "/" << c;
      ASSERT_LT(farm::num::max_abs_diff(farm::spectral::low_pass(lo, cut), lo), 1e-9);
      const double a = coef(rng), b = coef(rng);
      const Tensor lhs = farm::spectral::low_pass(
          farm::num::add(farm::num::scale(x, a), farm::num::scale(y, b)), cut);
      const Tensor rhs = farm::num::add(farm::num::scale(lo, a),
                                        farm::num::scale(farm::spectral::low_pass(y, cut), b));
      ASSERT_LT(farm::num::max_abs_diff(lhs, rhs), 1e-9);
    }
  }
}

TEST(LowPass, ProjectionIsSymmetricIdempotent) {
  const Tensor p = farm::spectral::low_pass_projection(50, {5});
  EXPECT_LT(farm::num::max_abs_diff(p, farm::num::transpose(p)), 1e-12);
  EXPECT_LT(farm::num::max_abs_diff(farm::num::matmul(p, p), p), 1e-12);
  // Rank = number of kept bins = 2c - 1 for c <= n/2.
  double trace = 0;
  for (std::size_t i = 0; i < 50; ++i) trace += p(i, i);
  EXPECT_NEAR(trace, 9.0, 1e-10);
}

TEST(LowPass, CutoffValidation) {
  EXPECT_THROW(farm::spectral::low_pass(Tensor({4, 1}), {0}), farm::ConfigError);
  EXPECT_THROW(farm::spectral::low_pass(Tensor({4, 1}), {5}), farm::ConfigError);
}

TEST(FrequencyMix, GateCornerCases) {
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor(9, 4, rng);
  const CutoffConfig cut{3};
  EXPECT_LT(farm::num::max_abs_diff(farm::spectral::frequency_mix(x, 1, 1, cut), x), 1e-12);
  EXPECT_LT(farm::num::max_abs_diff(farm::spectral::frequency_mix(x, 1, 0, cut),
                                    farm::spectral::low_pass(x, cut)),
            1e-12);
  EXPECT_LT(farm::num::max_abs_diff(farm::spectral::frequency_mix(x, 0, 0, cut), Tensor({9, 4})),
            1e-12);
}

TEST(FrequencyMix, GradientWrtInputAndGates) {
  std::mt19937_64 rng(6);
  ParamStore ps;
  ps.add("x", random_tensor(7, 3, rng));
  ps.add("lo", Tensor({1, 1}, 0.3));
  ps.add("hi", Tensor({1, 1}, 0.8));
  const Tensor proj = farm::spectral::low_pass_projection(7, {2});
  const Tensor w = random_tensor(3, 1, rng);
  auto loss = [&](Tape& t, const ParamStore& p) {
    const Var y = farm::spectral::frequency_mix(t.param(p, "x"), t.param(p, "lo"), t.param(p, "hi"), proj);
    return farm::num::sum_all(farm::num::matmul(farm::num::sigmoid(y), t.constant(w)));
  };
  EXPECT_LT(farm::num::grad_check(loss, ps).max_rel_error, 1e-6);
}

// Projections indexed by group length: leading blocks of the length-L matrix.
std::vector<Tensor> leading_blocks(std::size_t L, std::size_t c) {
  const Tensor full = farm::spectral::low_pass_projection(L, {c});
  std::vector<Tensor> out(L + 1);
  for (std::size_t n = 0; n <= L; ++n) {
    out[n] = Tensor({n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out[n](i, j) = full(i, j);
  }
  return out;
}

TEST(FrequencyMixSegments, MatchesPerGroupReference) {
  std::mt19937_64 rng(12);
  const std::vector<Segment> segs = {{0, 4}, {4, 0}, {4, 8}, {12, 1}};
  const auto proj = leading_blocks(8, 3);
  const Tensor x = random_tensor(13, 5, rng);
  const Tensor lo = random_tensor(4, 1, rng, 0, 1);
  const Tensor hi = random_tensor(4, 1, rng, 0, 1);
  Tape t(false);
  const Tensor got = farm::spectral::frequency_mix_segments(t.constant(x), segs, t.constant(lo),
                                                            t.constant(hi), proj)
                         .value();
  for (std::size_t g = 0; g < segs.size(); ++g) {
    if (segs[g].count == 0) continue;
    const Var part = farm::num::slice_rows(t.constant(x), segs[g].begin, segs[g].count);
    const Tensor ref = farm::spectral::frequency_mix(part, t.constant(Tensor({1, 1}, lo[g])),
                                                     t.constant(Tensor({1, 1}, hi[g])),
                                                     proj[segs[g].count])
                           .value();
    for (std::size_t r = 0; r < segs[g].count; ++r)
      for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(got(segs[g].begin + r, c), ref(r, c), 1e-13);
  }
}

TEST(FrequencyMixSegments, Gradient) {
  std::mt19937_64 rng(13);
  const std::vector<Segment> segs = {{0, 3}, {3, 0}, {3, 5}};
  const auto proj = leading_blocks(5, 2);
  ParamStore ps;
  ps.add("x", random_tensor(9, 3, rng));  // row 8 belongs to no group
  ps.add("lo", random_tensor(3, 1, rng, 0.1, 0.9));
  ps.add("hi", random_tensor(3, 1, rng, 0.1, 0.9));
  const Tensor w = random_tensor(3, 1, rng);
  auto loss = [&](Tape& t, const ParamStore& p) {
    const Var y = farm::spectral::frequency_mix_segments(t.param(p, "x"), segs, t.param(p, "lo"),
                                                         t.param(p, "hi"), proj);
    return farm::num::sum_all(farm::num::matmul(farm::num::sigmoid(y), t.constant(w)));
  };
  EXPECT_LT(farm::num::grad_check(loss, ps).max_rel_error, 1e-6);
}

TEST(Gates, ZeroWeightMlpsGiveOneHalf) {
  const auto vocab = farm::testing::tiny_vocab();
  ParamStore ps = farm::model::init_params(farm::testing::tiny_config(), vocab, 1);
  for (auto& [name, e] : ps.entries()) {
    if (name.starts_with("gate.")) e.value.fill(0.0);
  }
  std::mt19937_64 rng(1);
  const auto g = farm::spectral::compute_gates(ps, random_tensor(5, 14, rng), random_tensor(3, 10, rng));
  EXPECT_EQ(g.alpha, 0.5);
  EXPECT_EQ(g.beta, 0.5);
  EXPECT_EQ(g.gamma, 0.5);
  EXPECT_EQ(g.delta, 0.5);
}

TEST(Gates, StrictlyInsideUnitInterval) {
  const auto vocab = farm::testing::tiny_vocab();
  const ParamStore ps = farm::model::init_params(farm::testing::tiny_config(), vocab, 2);
  std::mt19937_64 rng(2);
  const auto g = farm::spectral::compute_gates(ps, random_tensor(5, 14, rng), Tensor({0, 10}));
  for (double v : {g.alpha, g.beta, g.gamma, g.delta}) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

}  // namespace
