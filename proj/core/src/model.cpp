// SPDX-License-Identifier: Apache-2.0
#include "farm/model.hpp"

#include <cmath>
#include <numeric>

#include "farm/error.hpp"
#include "farm/numerics/layers.hpp"

namespace farm::model {

using attention::Segment;

void ModelConfig::validate() const {
  if (seq_len == 0) throw ConfigError("model: seq_len must be positive");
  cutoff.validate(seq_len);
  attention.validate();
  if (video_dim == 0 || live_dim == 0 || align_dim == 0) {
    throw ConfigError("model: embedding and alignment widths must be positive");
  }
  if (mlp_layers == 0) throw ConfigError("model: mlp_layers must be >= 1");
  if (gate_hidden == 0 || expert_hidden == 0 || expert_dim == 0 || tower_hidden == 0) {
    throw ConfigError("model: hidden widths must be positive");
  }
  if (n_experts == 0) throw ConfigError("model: n_experts must be >= 1");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("model: lambda must be in [0, 1]");
  if (!(tau > 0.0)) throw ConfigError("model: tau must be positive");
}

std::string embedding_name(const char* domain, std::size_t feature) {
  return std::string("emb.") + domain + "." + kFeatureNames[feature];
}
std::string expert_name(std::size_t k) { return "mmoe.expert" + std::to_string(k); }
std::string mmoe_gate_name(std::size_t task) { return "mmoe.gate" + std::to_string(task); }
std::string tower_name(std::size_t task) { return "mmoe.tower" + std::to_string(task); }

namespace {

std::vector<std::size_t> mlp_dims(std::size_t in, std::size_t hidden, std::size_t out,
                                  std::size_t layers) {
  std::vector<std::size_t> dims{in};
  for (std::size_t i = 1; i < layers; ++i) dims.push_back(hidden);
  dims.push_back(out);
  return dims;
}

}  // namespace

num::ParamStore init_params(const ModelConfig& cfg, const FeatureVocab& vocab, std::uint64_t seed) {
  cfg.validate();
  vocab.video.validate(cfg.video_dim, "video");
  vocab.live.validate(cfg.live_dim, "live");
  std::mt19937_64 rng(seed);
  num::ParamStore ps;
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    const auto& v = vocab.video.features[f];
    ps.add_glorot(embedding_name("video", f), static_cast<std::size_t>(v.cardinality), v.width, rng);
  }
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    const auto& l = vocab.live.features[f];
    ps.add_glorot(embedding_name("live", f), static_cast<std::size_t>(l.cardinality), l.width, rng);
  }
  const std::size_t md = cfg.attention.model_dim;
  num::init_mlp(ps, spectral::kGateAlpha, mlp_dims(cfg.video_dim, cfg.gate_hidden, 1, cfg.mlp_layers), rng);
  num::init_mlp(ps, spectral::kGateBeta, mlp_dims(cfg.video_dim, cfg.gate_hidden, 1, cfg.mlp_layers), rng);
  num::init_mlp(ps, spectral::kGateGamma, mlp_dims(cfg.live_dim, cfg.gate_hidden, 1, cfg.mlp_layers), rng);
  num::init_mlp(ps, spectral::kGateDelta, mlp_dims(cfg.live_dim, cfg.gate_hidden, 1, cfg.mlp_layers), rng);
  attention::init_attention(ps, kVideoTarget, cfg.live_dim, cfg.video_dim, cfg.attention, rng);
  attention::init_attention(ps, kLiveTarget, cfg.live_dim, cfg.live_dim, cfg.attention, rng);
  attention::init_attention(ps, kVideoSelf, cfg.video_dim, cfg.video_dim, cfg.attention, rng);
  attention::init_attention(ps, kLiveSelf, cfg.live_dim, cfg.live_dim, cfg.attention, rng);
  num::init_mlp(ps, kAlignVideo, mlp_dims(md, cfg.align_dim, cfg.align_dim, cfg.mlp_layers), rng);
  num::init_mlp(ps, kAlignLive, mlp_dims(md, cfg.align_dim, cfg.align_dim, cfg.mlp_layers), rng);
  attention::init_attention(ps, kCross, md, md, cfg.attention, rng);
  attention::init_attention(ps, kFuseTarget, cfg.live_dim, md, cfg.attention, rng);
  const std::size_t head_in = 3 * md;
  for (std::size_t k = 0; k < cfg.n_experts; ++k) {
    const std::size_t dims[] = {head_in, cfg.expert_hidden, cfg.expert_dim};
    num::init_mlp(ps, expert_name(k), dims, rng);
  }
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    const std::size_t dims[] = {head_in, cfg.n_experts};
    num::init_mlp(ps, mmoe_gate_name(t), dims, rng);
  }
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    const std::size_t dims[] = {cfg.expert_dim, cfg.tower_hidden, 1};
    num::init_mlp(ps, tower_name(t), dims, rng);
  }
  return ps;
}

LossBreakdown total_loss(double l_xtrs, double l_cl, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("total_loss: lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  return {l_xtrs, l_cl, lambda, l_xtrs + lambda * l_cl};
}

Var contrastive_loss(Var h_video, Var h_live, double tau) {
  if (!(tau > 0.0)) throw ConfigError("contrastive_loss: tau must be positive");
  if (h_video.shape() != h_live.shape() || h_video.rows() == 0) {
    throw ShapeError("contrastive_loss: video " + num::shape_to_string(h_video.shape()) +
                     " vs live " + num::shape_to_string(h_live.shape()));
  }
  std::vector<int> targets(h_live.rows());
  std::iota(targets.begin(), targets.end(), 0);
  return num::cross_entropy_rows(num::scale(num::matmul_nt(h_live, h_video), 1.0 / tau), targets);
}

double contrastive_loss(const Tensor& h_video, const Tensor& h_live, double tau) {
  num::Tape tape(false);
  return contrastive_loss(tape.constant(h_video), tape.constant(h_live), tau).scalar();
}

Var xtrs_loss(Var probs, const Tensor& labels) {
  if (probs.cols() != kNumTasks) {
    throw ShapeError("xtrs_loss: expected " + std::to_string(kNumTasks) + " task columns, got " +
                     num::shape_to_string(probs.shape()));
  }
  return num::binary_cross_entropy(probs, labels, 1e-7);
}

double xtrs_loss(std::span<const XtrPrediction> preds, std::span<const TaskLabels> labels) {
  if (preds.size() != labels.size()) throw ShapeError("xtrs_loss: prediction/label count mismatch");
  Tensor p({preds.size(), kNumTasks});
  Tensor y({preds.size(), kNumTasks});
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      p(i, t) = preds[i][t];
      y(i, t) = labels[i][t];
    }
  }
  num::Tape tape(false);
  return xtrs_loss(tape.constant(std::move(p)), y).scalar();
}

Var mmoe_gate_weights(num::Tape& tape, const num::ParamStore& params, Var features,
                      std::size_t task) {
  return num::softmax_rows(num::mlp_forward(tape, params, mmoe_gate_name(task), features));
}

Var mmoe_predict(num::Tape& tape, const num::ParamStore& params, Var features,
                 std::size_t n_experts) {
  std::vector<Var> experts;
  experts.reserve(n_experts);
  for (std::size_t k = 0; k < n_experts; ++k) {
    experts.push_back(num::mlp_forward(tape, params, expert_name(k), features));
  }
  std::vector<Var> towers;
  towers.reserve(kNumTasks);
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    Var mixed;
    if (n_experts == 1) {
      mixed = experts.front();
    } else {
      const Var g = mmoe_gate_weights(tape, params, features, t);
      for (std::size_t k = 0; k < n_experts; ++k) {
        const Var term = num::scale_by(experts[k], num::slice_cols(g, k, 1));
        mixed = k == 0 ? term : num::add(mixed, term);
      }
    }
    towers.push_back(num::sigmoid(num::mlp_forward(tape, params, tower_name(t), mixed)));
  }
  return num::concat_cols(towers);
}

FarmModel::FarmModel(ModelConfig cfg, FeatureVocab vocab)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
  cfg_.validate();
  vocab_.video.validate(cfg_.video_dim, "video");
  vocab_.live.validate(cfg_.live_dim, "live");
  const Tensor full = spectral::low_pass_projection(cfg_.seq_len, cfg_.cutoff);
  projections_.resize(cfg_.seq_len + 1);
  for (std::size_t n = 1; n <= cfg_.seq_len; ++n) {
    Tensor block({n, n});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) block(i, j) = full(i, j);
    }
    projections_[n] = std::move(block);
  }
}

num::ParamStore FarmModel::init_params(std::uint64_t seed) const {
  return model::init_params(cfg_, vocab_, seed);
}

namespace {

using FeatureColumns = std::array<std::vector<int>, kNumFeatures>;

void append_rows(FeatureColumns& cols, std::span<const EventFeatures> rows) {
  for (const auto& r : rows) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) cols[f].push_back(r[f]);
  }
}

Var embed_rows(num::Tape& tape, const num::ParamStore& params, const char* domain,
               const FeatureColumns& cols) {
  std::array<Var, kNumFeatures> parts;
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    parts[f] = num::gather_rows(tape.param(params, embedding_name(domain, f)), cols[f]);
  }
  return num::concat_cols(parts);
}

// Recent suffix of a history capped at `cap` rows.
std::span<const EventFeatures> recent(const std::vector<EventFeatures>& seq, std::size_t cap) {
  const std::size_t n = std::min(seq.size(), cap);
  return std::span<const EventFeatures>(seq).subspan(seq.size() - n, n);
}

// Mean of each group's rows; empty groups pool to zeros. [groups x cols]
Var pool_segments(Var all, std::span<const Segment> segs) { return num::mean_segments(all, segs); }

Var gate_column(num::Tape& tape, const num::ParamStore& params, const char* name, Var pooled) {
  const Var g = num::sigmoid(num::mlp_forward(tape, params, name, pooled));
  if (g.cols() != 1) {
    throw ShapeError(std::string("gate MLP ") + name + " must produce one output, got " +
                     num::shape_to_string(g.shape()));
  }
  return g;
}

}  // namespace

BatchForward FarmModel::forward(num::Tape& tape, const num::ParamStore& params,
                                std::span<const SampleInput> batch,
                                const ForwardOptions& opts) const {
  const std::size_t B = batch.size();
  if (B == 0) throw ShapeError("forward: empty batch");
  const std::size_t L = cfg_.seq_len;
  const std::size_t md = cfg_.attention.model_dim;

  FeatureColumns video_cols, live_cols, cand_cols;
  std::vector<Segment> vseg(B), lseg(B), cseg(B);
  Tensor labels({B, kNumTasks});
  std::size_t voff = 0, loff = 0;
  for (std::size_t i = 0; i < B; ++i) {
    const SampleInput& s = batch[i];
    const auto v = recent(s.video, L);
    const auto l = recent(s.live, L);
    for (const auto& r : v) vocab_.video.check_index(r, "video");
    for (const auto& r : l) vocab_.live.check_index(r, "live");
    vocab_.live.check_index(s.candidate, "candidate");
    append_rows(video_cols, v);
    append_rows(live_cols, l);
    append_rows(cand_cols, std::span<const EventFeatures>(&s.candidate, 1));
    vseg[i] = {voff, v.size()};
    lseg[i] = {loff, l.size()};
    cseg[i] = {i, 1};
    voff += v.size();
    loff += l.size();
    for (std::size_t t = 0; t < kNumTasks; ++t) labels(i, t) = s.labels[t];
  }

  const Var v_all = embed_rows(tape, params, "video", video_cols);
  const Var l_all = embed_rows(tape, params, "live", live_cols);
  const Var cand = embed_rows(tape, params, "live", cand_cols);

  BatchForward out;

  // Frequency gates from the pooled raw sequences.
  Var alpha, beta, gamma, delta;
  if (opts.forced_gates) {
    const auto& fg = *opts.forced_gates;
    alpha = tape.constant(Tensor({B, 1}, fg.alpha));
    beta = tape.constant(Tensor({B, 1}, fg.beta));
    gamma = tape.constant(Tensor({B, 1}, fg.gamma));
    delta = tape.constant(Tensor({B, 1}, fg.delta));
  } else {
    const Var pooled_v = pool_segments(v_all, vseg);
    const Var pooled_l = pool_segments(l_all, lseg);
    alpha = gate_column(tape, params, spectral::kGateAlpha, pooled_v);
    beta = gate_column(tape, params, spectral::kGateBeta, pooled_v);
    gamma = gate_column(tape, params, spectral::kGateGamma, pooled_l);
    delta = gate_column(tape, params, spectral::kGateDelta, pooled_l);
  }
  {
    const Var gs[] = {alpha, beta, gamma, delta};
    out.gates = num::concat_cols(gs);
  }

  auto mix = [&](Var all, std::span<const Segment> segs, Var low, Var high, bool enabled) {
    if (!enabled || all.rows() == 0) return all;
    return spectral::frequency_mix_segments(all, segs, low, high, projections_);
  };
  const Var mixed_v = mix(v_all, vseg, alpha, beta, cfg_.ablation.video_frequency);
  const Var mixed_l = mix(l_all, lseg, gamma, delta, cfg_.ablation.live_frequency);

  const auto& acfg = cfg_.attention;
  out.f_video =
      attention::mh_attention_segments(tape, params, kVideoTarget, cand, cseg, mixed_v, vseg, acfg)
          .output;
  out.f_live =
      attention::mh_attention_segments(tape, params, kLiveTarget, cand, cseg, mixed_l, lseg, acfg)
          .output;

  // Alignment: self-attention, pooling, domain MLPs.
  const Var vhat_v =
      attention::mh_attention_segments(tape, params, kVideoSelf, v_all, vseg, v_all, vseg, acfg)
          .output;
  const Var vhat_l =
      attention::mh_attention_segments(tape, params, kLiveSelf, l_all, lseg, l_all, lseg, acfg)
          .output;
  out.h_video = num::mlp_forward(tape, params, kAlignVideo, pool_segments(vhat_v, vseg));
  out.h_live = num::mlp_forward(tape, params, kAlignLive, pool_segments(vhat_l, lseg));
  out.v_hat_video = vhat_v;
  out.v_hat_live = vhat_l;
  out.video_segments = vseg;
  out.live_segments = lseg;

  // Fusion: live queries over video keys, then the candidate over the result.
  if (cfg_.ablation.cross_fuse) {
    auto cross = attention::mh_attention_segments(tape, params, kCross, vhat_l, lseg, vhat_v, vseg,
                                                  acfg, opts.keep_traces);
    out.cross_traces = std::move(cross.traces);
    out.f_cross = attention::mh_attention_segments(tape, params, kFuseTarget, cand, cseg,
                                                   cross.output, lseg, acfg)
                      .output;
  } else {
    out.f_cross = tape.constant(Tensor({B, md}));
  }

  const Var parts[] = {out.f_video, out.f_live, out.f_cross};
  out.probs = mmoe_predict(tape, params, num::concat_cols(parts), cfg_.n_experts);
  out.l_xtrs = xtrs_loss(out.probs, labels);
  out.l_cl = contrastive_loss(out.h_video, out.h_live, cfg_.tau);
  out.total = num::add(out.l_xtrs, num::scale(out.l_cl, cfg_.effective_lambda()));
  return out;
}

std::vector<XtrPrediction> FarmModel::predict(const num::ParamStore& params,
                                              std::span<const SampleInput> batch) const {
  num::Tape tape(false);
  const BatchForward fw = forward(tape, params, batch);
  const Tensor& p = fw.probs.value();
  std::vector<XtrPrediction> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t t = 0; t < kNumTasks; ++t) out[i][t] = p(i, t);
  }
  return out;
}

FarmModel::Encoded FarmModel::frequency_aware_encode(const num::ParamStore& params,
                                                     const SampleInput& sample,
                                                     const ForwardOptions& opts) const {
  num::Tape tape(false);
  const BatchForward fw = forward(tape, params, std::span<const SampleInput>(&sample, 1), opts);
  const Tensor& g = fw.gates.value();
  return {fw.f_video.value(), fw.f_live.value(), {g[0], g[1], g[2], g[3]}};
}

FarmModel::Aligned FarmModel::align_heads(const num::ParamStore& params,
                                          const SampleInput& sample) const {
  num::Tape tape(false);
  const BatchForward fw = forward(tape, params, std::span<const SampleInput>(&sample, 1));
  return {fw.h_video.value(), fw.h_live.value(), fw.v_hat_video.value(), fw.v_hat_live.value()};
}

FarmModel::Fused FarmModel::fuse(const num::ParamStore& params, const SampleInput& sample) const {
  if (!cfg_.ablation.cross_fuse) {
    return {Tensor({1, cfg_.attention.model_dim}), {}};
  }
  num::Tape tape(false);
  ForwardOptions opts;
  opts.keep_traces = true;
  BatchForward fw = forward(tape, params, std::span<const SampleInput>(&sample, 1), opts);
  return {fw.f_cross.value(), std::move(fw.cross_traces.front())};
}

EmbeddedPair embed(const num::ParamStore& params, const FeatureVocab& vocab,
                   const SampleInput& sample, std::size_t seq_len) {
  if (seq_len == 0) throw ConfigError("embed: seq_len must be positive");
  num::Tape tape(false);
  auto padded = [&](const std::vector<EventFeatures>& seq, const DomainVocab& dv,
                    const char* domain, Tensor& dst, std::vector<bool>& mask) {
    const auto rows = recent(seq, seq_len);
    for (const auto& r : rows) dv.check_index(r, domain);
    FeatureColumns cols;
    append_rows(cols, rows);
    for (std::size_t k = rows.size(); k < seq_len; ++k) {
      for (auto& c : cols) c.push_back(kPadIndex);
    }
    dst = embed_rows(tape, params, domain, cols).value();
    mask.assign(seq_len, false);
    std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(rows.size()), true);
  };
  EmbeddedPair out;
  padded(sample.video, vocab.video, "video", out.video, out.video_mask);
  padded(sample.live, vocab.live, "live", out.live, out.live_mask);
  vocab.live.check_index(sample.candidate, "candidate");
  FeatureColumns cc;
  append_rows(cc, std::span<const EventFeatures>(&sample.candidate, 1));
  out.candidate = embed_rows(tape, params, "live", cc).value();
  return out;
}

}  // namespace farm::model
