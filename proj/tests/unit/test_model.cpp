// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "farm/data.hpp"
#include "farm/error.hpp"
#include "farm/model.hpp"
#include "farm/numerics/grad_check.hpp"
#include "test_support.hpp"

namespace {

using farm::SampleInput;
using farm::model::Ablation;
using farm::model::FarmModel;
using farm::model::ModelConfig;
using farm::num::ParamStore;
using farm::num::Tape;
using farm::num::Tensor;
using farm::num::Var;
using farm::testing::mixed_batch;
using farm::testing::random_sample;
using farm::testing::tiny_config;
using farm::testing::tiny_vocab;

TEST(ModelConfig, Validation) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lambda = 1.5;
  EXPECT_THROW(c.validate(), farm::ConfigError);
  c = {};
  c.tau = 0;
  EXPECT_THROW(c.validate(), farm::ConfigError);
  c = {};
  c.cutoff = {51};
  EXPECT_THROW(c.validate(), farm::ConfigError);
  c = {};
  c.ablation.contrastive_align = false;
  EXPECT_EQ(c.effective_lambda(), 0.0);
}

TEST(Embed, DefaultWidthsAndPadding) {
  const farm::data::StreamConfig sc;
  const auto vocab = sc.vocab();
  EXPECT_EQ(vocab.video.dim(), 92u);
  EXPECT_EQ(vocab.live.dim(), 64u);
  const ParamStore ps = farm::model::init_params(ModelConfig{}, vocab, 1);
  std::mt19937_64 rng(1);
  const SampleInput s = random_sample(vocab, 3, 60, rng);
  const auto e = farm::model::embed(ps, vocab, s, 50);
  EXPECT_EQ(e.video.shape(), (farm::num::Shape{50, 92}));
  EXPECT_EQ(e.live.shape(), (farm::num::Shape{50, 64}));
  EXPECT_EQ(e.candidate.shape(), (farm::num::Shape{1, 64}));
  EXPECT_EQ(std::count(e.video_mask.begin(), e.video_mask.end(), true), 3);
  EXPECT_EQ(std::count(e.live_mask.begin(), e.live_mask.end(), true), 50);
  for (std::size_t r = 3; r < 50; ++r)
    for (double v : e.video.row(r)) EXPECT_EQ(v, 0.0);
}

TEST(Embed, DeterministicAndLocal) {
  const auto vocab = tiny_vocab();
  const ParamStore ps = farm::model::init_params(tiny_config(), vocab, 2);
  std::mt19937_64 rng(2);
  SampleInput s = random_sample(vocab, 4, 2, rng);
  const auto a = farm::model::embed(ps, vocab, s, 8);
  const auto b = farm::model::embed(ps, vocab, s, 8);
  EXPECT_EQ(a.video, b.video);
  EXPECT_EQ(a.live, b.live);
  // Change the tag of video event 1 and find the tag slice.
  const auto tag = static_cast<std::size_t>(farm::Feature::kTag);
  std::size_t begin = 0;
  for (std::size_t f = 0; f < tag; ++f) begin += vocab.video.features[f].width;
  const std::size_t end = begin + vocab.video.features[tag].width;
  s.video[1][tag] = (s.video[1][tag] + 1) % vocab.video.features[tag].cardinality;
  const auto c = farm::model::embed(ps, vocab, s, 8);
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t col = 0; col < vocab.video.dim(); ++col) {
      const bool inside = r == 1 && col >= begin && col < end;
      if (!inside) {
        EXPECT_EQ(a.video(r, col), c.video(r, col));
      }
    }
  }
  bool changed = false;
  for (std::size_t col = begin; col < end; ++col) changed |= a.video(1, col) != c.video(1, col);
  EXPECT_TRUE(changed);
}

TEST(Embed, RejectsOutOfVocabularyWithFeatureName) {
  const auto vocab = tiny_vocab();
  const ParamStore ps = farm::model::init_params(tiny_config(), vocab, 3);
  std::mt19937_64 rng(3);
  SampleInput s = random_sample(vocab, 2, 2, rng);
  s.video[0][static_cast<std::size_t>(farm::Feature::kPage)] = 999;
  try {
    farm::model::embed(ps, vocab, s, 8);
    FAIL() << "expected DataError";
  } catch (const farm::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("page"), std::string::npos) << e.what();
  }
  const FarmModel model(tiny_config(), vocab);
  EXPECT_THROW(model.predict(ps, std::vector<SampleInput>{s}), farm::DataError);
}

TEST(Losses, ContrastiveClosedForms) {
  std::mt19937_64 rng(4);
  const Tensor h1 = farm::testing::random_tensor(1, 5, rng);
  const Tensor h2 = farm::testing::random_tensor(1, 5, rng);
  EXPECT_EQ(farm::model::contrastive_loss(h1, h2, 0.07), 0.0);
  // Every similarity equals 1 -> uniform softmax over two candidates.
  const Tensor ones = Tensor::matrix(2, 2, {1, 0, 1, 0});
  EXPECT_NEAR(farm::model::contrastive_loss(ones, ones, 0.07), std::numbers::ln2, 1e-12);
  const Tensor eye = Tensor::matrix(3, 3, {10, 0, 0, 0, 10, 0, 0, 0, 10});
  EXPECT_LT(farm::model::contrastive_loss(eye, eye, 0.07), 1e-12);
  EXPECT_THROW(farm::model::contrastive_loss(ones, ones, 0.0), farm::ConfigError);
  EXPECT_THROW(farm::model::contrastive_loss(ones, eye, 0.07), farm::ShapeError);
}

TEST(Losses, ContrastiveMatchesDirectFormula) {
  std::mt19937_64 rng(5);
  const Tensor hv = farm::testing::random_tensor(4, 3, rng);
  const Tensor hl = farm::testing::random_tensor(4, 3, rng);
  const double tau = 0.3;
  double expect = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    double denom = 0, pos = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0;
      for (std::size_t d = 0; d < 3; ++d) s += hl(i, d) * hv(j, d);
      denom += std::exp(s / tau);
      if (i == j) pos = std::exp(s / tau);
    }
    expect += -std::log(pos / denom) / 4.0;
  }
  EXPECT_NEAR(farm::model::contrastive_loss(hv, hl, tau), expect, 1e-12);
}

TEST(Losses, XtrsClosedForms) {
  std::vector<farm::model::XtrPrediction> half(3);
  std::vector<farm::TaskLabels> labels(3);
  for (auto& p : half) p.p.fill(0.5);
  labels[1].fill(1.0);
  labels[2][4] = 1.0;
  EXPECT_NEAR(farm::model::xtrs_loss(half, labels), 6.0 * std::numbers::ln2, 1e-12);
  std::vector<farm::model::XtrPrediction> exact(3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t t = 0; t < farm::kNumTasks; ++t) exact[i][t] = labels[i][t];
  const double clamp_floor = -6.0 * std::log1p(-1e-7);
  EXPECT_NEAR(farm::model::xtrs_loss(exact, labels), clamp_floor, 1e-15);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<farm::model::XtrPrediction> p(3);
    for (auto& x : p)
      for (double& v : x.p) v = u(rng);
    EXPECT_GE(farm::model::xtrs_loss(p, labels), 0.0);
  }
}

TEST(Losses, TotalLossArithmetic) {
  EXPECT_EQ(farm::model::total_loss(1.0, 0.5, 0.5).total, 1.25);
  EXPECT_EQ(farm::model::total_loss(0.7, 3.0, 0.0).total, 0.7);
  EXPECT_EQ(farm::model::total_loss(0.7, 0.0, 1.0).total, 0.7);
  EXPECT_THROW(farm::model::total_loss(1.0, 1.0, -0.1), farm::ConfigError);
  EXPECT_THROW(farm::model::total_loss(1.0, 1.0, 1.1), farm::ConfigError);
}

class ModelTest : public ::testing::Test {
 protected:
  ModelTest() : vocab_(tiny_vocab()), rng_(17) {}

  FarmModel make(Ablation ab = {}, std::size_t seq_len = 8) const {
    ModelConfig c = tiny_config(seq_len);
    c.ablation = ab;
    return FarmModel(c, vocab_);
  }

  farm::FeatureVocab vocab_;
  std::mt19937_64 rng_;
};

TEST_F(ModelTest, ForwardShapesAndRanges) {
  const FarmModel model = make();
  const ParamStore ps = model.init_params(1);
  const auto batch = mixed_batch(vocab_, 5, 8, rng_);
  Tape t(false);
  const auto fw = model.forward(t, ps, batch);
  EXPECT_EQ(fw.probs.shape(), (farm::num::Shape{5, 6}));
  EXPECT_EQ(fw.gates.shape(), (farm::num::Shape{5, 4}));
  EXPECT_EQ(fw.h_video.shape(), (farm::num::Shape{5, 6}));
  for (double p : fw.probs.value().data()) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  for (double g : fw.gates.value().data()) {
    EXPECT_GT(g, 0.0);
    EXPECT_LT(g, 1.0);
  }
  // Sample 1 has no live history and so no cross-domain signal.
  for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(fw.f_cross.value()(1, c), 0.0);
  EXPECT_TRUE(fw.total.value().all_finite());
}

TEST_F(ModelTest, ForcedUnitGatesEqualRawTargetAttention) {
  const FarmModel full = make();
  const FarmModel raw = make({false, false, true, true});
  const ParamStore ps = full.init_params(2);
  const auto batch = mixed_batch(vocab_, 6, 8, rng_);
  farm::model::ForwardOptions opts;
  opts.forced_gates = farm::spectral::FrequencyGates{1, 1, 1, 1};
  Tape t(false);
  const auto a = full.forward(t, ps, batch, opts);
  const auto b = raw.forward(t, ps, batch);
  EXPECT_LT(farm::num::max_abs_diff(a.f_video.value(), b.f_video.value()), 1e-9);
  EXPECT_LT(farm::num::max_abs_diff(a.f_live.value(), b.f_live.value()), 1e-9);
  // Single-sample encode agrees with the batched pass.
  const auto enc = full.frequency_aware_encode(ps, batch[0], opts);
  for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(enc.f_video(0, c), b.f_video.value()(0, c), 1e-9);
  EXPECT_EQ(enc.gates.alpha, 1.0);
}

TEST_F(ModelTest, ZeroLambdaGivesAlignmentHeadsNoGradient) {
  ModelConfig c = tiny_config();
  c.lambda = 0.0;
  const FarmModel model(c, vocab_);
  ParamStore ps = model.init_params(3);
  const auto batch = mixed_batch(vocab_, 4, 8, rng_);
  Tape t;
  const auto fw = model.forward(t, ps, batch);
  t.backward(fw.total, ps);
  std::size_t checked = 0;
  for (const auto& [name, e] : ps.entries()) {
    if (name.starts_with("align.")) {
      ++checked;
      for (double g : e.grad.data()) EXPECT_EQ(g, 0.0) << name;
    }
  }
  EXPECT_GT(checked, 0u);
  double other = 0;
  for (double g : ps.grad("att.video_self.wq").data()) other += std::abs(g);
  EXPECT_GT(other, 0.0);
}

TEST_F(ModelTest, CpaAblationEqualsZeroLambda) {
  ModelConfig zero = tiny_config();
  zero.lambda = 0.0;
  ModelConfig off = tiny_config();
  off.ablation.contrastive_align = false;
  const FarmModel a(zero, vocab_), b(off, vocab_);
  ParamStore pa = a.init_params(4), pb = b.init_params(4);
  const auto batch = mixed_batch(vocab_, 4, 8, rng_);
  Tape ta, tb;
  const auto fa = a.forward(ta, pa, batch);
  const auto fb = b.forward(tb, pb, batch);
  EXPECT_EQ(fa.total.scalar(), fb.total.scalar());
  ta.backward(fa.total, pa);
  tb.backward(fb.total, pb);
  for (const auto& [name, e] : pa.entries()) EXPECT_EQ(e.grad, pb.at(name).grad) << name;
}

TEST_F(ModelTest, EndToEndGradientCheck) {
  const FarmModel model = make();
  ParamStore ps = model.init_params(5);
  farm::testing::jitter(ps, 5);
  const auto batch = mixed_batch(vocab_, 4, 8, rng_);
  auto loss = [&](Tape& t, const ParamStore& p) { return model.forward(t, p, batch).total; };
  const auto r = farm::num::grad_check(loss, ps, 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst_entry << "[" << r.worst_index << "] analytic "
                                   << r.worst_analytic << " numeric " << r.worst_numeric;
  EXPECT_EQ(r.coords_checked, ps.num_scalars());
}

TEST_F(ModelTest, PredictionsIndependentOfBatchOrder) {
  const FarmModel model = make();
  const ParamStore ps = model.init_params(6);
  auto batch = mixed_batch(vocab_, 7, 8, rng_);
  const auto base = model.predict(ps, batch);
  std::vector<std::size_t> perm = {3, 0, 6, 1, 5, 2, 4};
  std::vector<SampleInput> shuffled;
  for (std::size_t i : perm) shuffled.push_back(batch[i]);
  const auto moved = model.predict(ps, shuffled);
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t t = 0; t < farm::kNumTasks; ++t) EXPECT_NEAR(moved[i][t], base[perm[i]][t], 1e-12);
  // And a batch of one gives the same answer.
  const auto single = model.predict(ps, std::vector<SampleInput>{batch[4]});
  for (std::size_t t = 0; t < farm::kNumTasks; ++t) EXPECT_NEAR(single[0][t], base[4][t], 1e-12);
  // Determinism.
  EXPECT_EQ(model.predict(ps, batch)[2].p, base[2].p);
}

TEST_F(ModelTest, EventsOutsideTheWindowAreIgnored) {
  const FarmModel model = make({}, 6);
  const ParamStore ps = model.init_params(7);
  SampleInput s = random_sample(vocab_, 10, 9, rng_);
  const auto base = model.predict(ps, std::vector<SampleInput>{s});
  // Only the six most recent events per domain are visible.
  for (std::size_t i = 0; i < 4; ++i) s.video[i][0] = (s.video[i][0] + 5) % 12;
  for (std::size_t i = 0; i < 3; ++i) s.live[i][2] = (s.live[i][2] + 1) % vocab_.live.features[2].cardinality;
  const auto after = model.predict(ps, std::vector<SampleInput>{s});
  EXPECT_EQ(base[0].p, after[0].p);
  s.video[4][0] = (s.video[4][0] + 5) % 12;
  EXPECT_NE(model.predict(ps, std::vector<SampleInput>{s})[0].p, base[0].p);
}

TEST_F(ModelTest, CrossFuseAblationGivesZeros) {
  const FarmModel model = make({true, true, true, false});
  const ParamStore ps = model.init_params(8);
  const SampleInput s = random_sample(vocab_, 4, 3, rng_);
  const auto fused = model.fuse(ps, s);
  EXPECT_EQ(fused.f_cross, Tensor({1, 16}));
  Tape t(false);
  const auto fw = model.forward(t, ps, std::vector<SampleInput>{s});
  EXPECT_EQ(fw.f_cross.value(), Tensor({1, 16}));
}

TEST_F(ModelTest, CrossTraceShapeAndRows) {
  const FarmModel model = make();
  const ParamStore ps = model.init_params(9);
  const SampleInput s = random_sample(vocab_, 5, 3, rng_);
  const auto fused = model.fuse(ps, s);
  EXPECT_EQ(fused.f_cross.shape(), (farm::num::Shape{1, 16}));
  EXPECT_EQ(fused.cross.q_len, 3u);
  EXPECT_EQ(fused.cross.k_len, 5u);
  const Tensor m = fused.cross.mean_over_heads();
  for (std::size_t r = 0; r < 3; ++r) {
    double sum = 0;
    for (double v : m.row(r)) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST_F(ModelTest, IdenticalDomainsGiveUnitCosine) {
  // Equal widths and mirrored parameters make the two towers the same function.
  auto vocab = farm::FeatureVocab::with_dims(vocab_, 10, 10);
  vocab.video = vocab.live;
  ModelConfig c = tiny_config();
  c.video_dim = 10;
  ASSERT_EQ(vocab.video.features, vocab.live.features);
  const FarmModel model(c, vocab);
  ParamStore ps = model.init_params(10);
  farm::testing::jitter(ps, 10);  // zero biases can switch off a whole hidden layer
  for (auto& [name, e] : ps.entries()) {
    for (const auto& [from, to] : {std::pair{"emb.video.", "emb.live."},
                                   std::pair{"att.video_self.", "att.live_self."},
                                   std::pair{"align.video.", "align.live."}}) {
      if (name.starts_with(from)) {
        ps.value(std::string(to) + name.substr(std::string(from).size())) = e.value;
      }
    }
  }
  SampleInput s = random_sample(vocab, 5, 0, rng_);
  s.live = s.video;
  const auto al = model.align_heads(ps, s);
  EXPECT_EQ(al.h_video, al.h_live);
  double dot = 0, nv = 0, nl = 0;
  for (std::size_t i = 0; i < al.h_video.size(); ++i) {
    dot += al.h_video[i] * al.h_live[i];
    nv += al.h_video[i] * al.h_video[i];
    nl += al.h_live[i] * al.h_live[i];
  }
  EXPECT_NEAR(dot / std::sqrt(nv * nl), 1.0, 1e-12);
  EXPECT_EQ(al.v_hat_video.rows(), 5u);
}

TEST_F(ModelTest, MmoeGatesSumToOne) {
  const FarmModel model = make();
  const ParamStore ps = model.init_params(11);
  std::mt19937_64 rng(11);
  Tape t(false);
  const Var f = t.constant(farm::testing::random_tensor(3, 48, rng));
  for (std::size_t task = 0; task < farm::kNumTasks; ++task) {
    const Tensor w = farm::model::mmoe_gate_weights(t, ps, f, task).value();
    EXPECT_EQ(w.cols(), 2u);
    for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(w(r, 0) + w(r, 1), 1.0, 1e-12);
  }
}

TEST_F(ModelTest, SingleExpertMakesGatesIrrelevant) {
  ModelConfig c = tiny_config();
  c.n_experts = 1;
  const FarmModel model(c, vocab_);
  ParamStore ps = model.init_params(12);
  std::mt19937_64 rng(12);
  Tape t(false);
  const Var f = t.constant(farm::testing::random_tensor(3, 48, rng));
  const Tensor before = farm::model::mmoe_predict(t, ps, f, 1).value();
  for (std::size_t task = 0; task < farm::kNumTasks; ++task) {
    for (auto& v : ps.value(farm::model::mmoe_gate_name(task) + ".l0.w").data()) v *= -7.0;
    EXPECT_EQ(farm::model::mmoe_gate_weights(t, ps, f, task).value(), Tensor({3, 1}, 1.0));
  }
  EXPECT_EQ(farm::model::mmoe_predict(t, ps, f, 1).value(), before);
}

TEST_F(ModelTest, EmptyBatchRejected) {
  const FarmModel model = make();
  const ParamStore ps = model.init_params(13);
  Tape t(false);
  EXPECT_THROW(model.forward(t, ps, std::vector<SampleInput>{}), farm::ShapeError);
}

}  // namespace
