// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "farm/attention.hpp"
#include "farm/features.hpp"
#include "farm/numerics/autodiff.hpp"
#include "farm/numerics/param_store.hpp"
#include "farm/spectral.hpp"

namespace farm::model {

using num::Tensor;
using num::Var;

// Which parts of the architecture are active. Disabling the frequency path of
// a domain keeps its target attention but feeds it the raw embeddings;
// disabling alignment zeroes the contrastive weight; disabling fusion
// replaces the fused representation with zeros.
struct Ablation {
  bool video_frequency = true;
  bool live_frequency = true;
  bool contrastive_align = true;
  bool cross_fuse = true;

  friend bool operator==(const Ablation&, const Ablation&) = default;
};

struct ModelConfig {
  std::size_t seq_len = 50;
  std::size_t video_dim = 92;
  std::size_t live_dim = 64;
  spectral::CutoffConfig cutoff{5};
  attention::AttentionConfig attention{4, 64};
  std::size_t align_dim = 64;
  std::size_t mlp_layers = 3;    // gate and alignment MLPs
  std::size_t gate_hidden = 32;
  std::size_t n_experts = 4;
  std::size_t expert_hidden = 64;
  std::size_t expert_dim = 32;
  std::size_t tower_hidden = 16;
  double lambda = 0.5;
  double tau = 0.07;
  Ablation ablation;

  void validate() const;
  // Contrastive weight after ablation.
  double effective_lambda() const { return ablation.contrastive_align ? lambda : 0.0; }
};

// Parameter names.
inline constexpr const char* kVideoSelf = "att.video_self";
inline constexpr const char* kLiveSelf = "att.live_self";
inline constexpr const char* kVideoTarget = "att.video_target";
inline constexpr const char* kLiveTarget = "att.live_target";
inline constexpr const char* kCross = "att.cross";
inline constexpr const char* kFuseTarget = "att.fuse_target";
inline constexpr const char* kAlignVideo = "align.video";
inline constexpr const char* kAlignLive = "align.live";
std::string embedding_name(const char* domain, std::size_t feature);
std::string expert_name(std::size_t k);
std::string mmoe_gate_name(std::size_t task);
std::string tower_name(std::size_t task);

// Registers every parameter with Glorot weights and zero biases.
num::ParamStore init_params(const ModelConfig& cfg, const FeatureVocab& vocab, std::uint64_t seed);

// One sample embedded and right-padded to seq_len rows; mask[i] is true for
// real events.
struct EmbeddedPair {
  Tensor video;      // [L x video_dim]
  Tensor live;       // [L x live_dim]
  Tensor candidate;  // [1 x live_dim]
  std::vector<bool> video_mask;
  std::vector<bool> live_mask;
};

EmbeddedPair embed(const num::ParamStore& params, const FeatureVocab& vocab,
                   const SampleInput& sample, std::size_t seq_len);

struct XtrPrediction {
  std::array<double, kNumTasks> p{};  // click .. gift

  double& operator[](std::size_t t) { return p[t]; }
  double operator[](std::size_t t) const { return p[t]; }
};

struct LossBreakdown {
  double l_xtrs = 0.0;
  double l_cl = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

// total = l_xtrs + lambda * l_cl with lambda in [0, 1].
LossBreakdown total_loss(double l_xtrs, double l_cl, double lambda);

// InfoNCE with live rows as anchors and the batch's video rows as candidates;
// row i's positive is video row i. Mean over rows.
Var contrastive_loss(Var h_video, Var h_live, double tau);
double contrastive_loss(const Tensor& h_video, const Tensor& h_live, double tau);

// Sum over tasks of clamped binary cross-entropy, mean over rows.
Var xtrs_loss(Var probs, const Tensor& labels);
double xtrs_loss(std::span<const XtrPrediction> preds, std::span<const TaskLabels> labels);

struct ForwardOptions {
  bool keep_traces = false;
  // Replaces the learned frequency gates; used to check that the frequency
  // path degrades to plain target attention.
  std::optional<spectral::FrequencyGates> forced_gates;
};

// Intermediate values of a batched forward pass. Per-sample rows are in
// batch order.
struct BatchForward {
  Var probs;        // [B x 6]
  Var f_video;      // [B x model_dim]
  Var f_live;       // [B x model_dim]
  Var f_cross;      // [B x model_dim]
  Var h_video;      // [B x align_dim]
  Var h_live;       // [B x align_dim]
  Var gates;        // [B x 4] alpha, beta, gamma, delta
  Var l_xtrs;
  Var l_cl;
  Var total;
  Var v_hat_video;  // self-attended sequences, stacked over the batch
  Var v_hat_live;
  std::vector<attention::Segment> video_segments;
  std::vector<attention::Segment> live_segments;
  std::vector<attention::AttentionTrace> cross_traces;  // per sample, if kept
};

class FarmModel {
 public:
  FarmModel(ModelConfig cfg, FeatureVocab vocab);

  const ModelConfig& config() const { return cfg_; }
  const FeatureVocab& vocab() const { return vocab_; }
  num::ParamStore init_params(std::uint64_t seed) const;

  // Full forward pass over a batch, including both losses. Histories longer
  // than seq_len keep their most recent rows.
  BatchForward forward(num::Tape& tape, const num::ParamStore& params,
                       std::span<const SampleInput> batch, const ForwardOptions& opts = {}) const;

  std::vector<XtrPrediction> predict(const num::ParamStore& params,
                                     std::span<const SampleInput> batch) const;

  // Pieces exposed for inspection and tests (single sample).
  struct Encoded {
    Tensor f_video, f_live;  // [1 x model_dim]
    spectral::FrequencyGates gates;
  };
  Encoded frequency_aware_encode(const num::ParamStore& params, const SampleInput& sample,
                                 const ForwardOptions& opts = {}) const;

  struct Aligned {
    Tensor h_video, h_live;          // [1 x align_dim]
    Tensor v_hat_video, v_hat_live;  // [n x model_dim] over real events
  };
  Aligned align_heads(const num::ParamStore& params, const SampleInput& sample) const;

  struct Fused {
    Tensor f_cross;                    // [1 x model_dim]
    attention::AttentionTrace cross;   // live positions x video positions
  };
  Fused fuse(const num::ParamStore& params, const SampleInput& sample) const;

 private:
  const Tensor& projection(std::size_t n) const { return projections_[n]; }

  ModelConfig cfg_;
  FeatureVocab vocab_;
  std::vector<Tensor> projections_;  // leading n x n blocks of the length-L low-pass matrix
};

// MMoE head on [B x 3*model_dim] features: shared experts, per-task softmax
// gates, per-task towers ending in a sigmoid. Returns [B x 6] probabilities.
Var mmoe_predict(num::Tape& tape, const num::ParamStore& params, Var features,
                 std::size_t n_experts);

// Softmax mixing weights of one task's gate, [B x n_experts].
Var mmoe_gate_weights(num::Tape& tape, const num::ParamStore& params, Var features,
                      std::size_t task);

}  // namespace farm::model
