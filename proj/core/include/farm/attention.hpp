// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "farm/numerics/autodiff.hpp"
#include "farm/numerics/param_store.hpp"

namespace farm::attention {

using num::Tensor;
using num::Var;

struct AttentionConfig {
  std::size_t num_heads = 4;
  std::size_t model_dim = 64;

  std::size_t head_dim() const { return model_dim / num_heads; }
  void validate() const;
};

// Softmax weights of every head, laid out [head][query][key].
struct AttentionTrace {
  std::size_t num_heads = 0;
  std::size_t q_len = 0;
  std::size_t k_len = 0;
  std::vector<double> weights;

  double at(std::size_t head, std::size_t q, std::size_t k) const {
    return weights[(head * q_len + q) * k_len + k];
  }
  // [q_len x k_len] weights of one head.
  Tensor head(std::size_t h) const;
  // Head-averaged [q_len x k_len] weights.
  Tensor mean_over_heads() const;
};

struct AttentionResult {
  Var output;  // [Lq x model_dim]
  AttentionTrace trace;
};

// Registers <prefix>.wq [q_dim x model_dim], .wk/.wv [kv_dim x model_dim] and
// .wo [model_dim x model_dim].
void init_attention(num::ParamStore& params, const std::string& prefix, std::size_t q_dim,
                    std::size_t kv_dim, const AttentionConfig& cfg, std::mt19937_64& rng);

// Scaled dot-product attention per head (1/sqrt(head_dim)), heads
// concatenated and passed through the output projection. No masking: callers
// pass only the valid key rows.
AttentionResult mh_attention(num::Tape& tape, const num::ParamStore& params,
                             const std::string& prefix, Var q_in, Var k_in, Var v_in,
                             const AttentionConfig& cfg, bool keep_trace = true);

inline AttentionResult self_attention(num::Tape& tape, const num::ParamStore& params,
                                      const std::string& prefix, Var x,
                                      const AttentionConfig& cfg, bool keep_trace = true) {
  return mh_attention(tape, params, prefix, x, x, x, cfg, keep_trace);
}

// Single-row candidate query over a behavior sequence.
AttentionResult target_attention(num::Tape& tape, const num::ParamStore& params,
                                 const std::string& prefix, Var candidate, Var seq,
                                 const AttentionConfig& cfg, bool keep_trace = true);

using num::Segment;

// Multi-head softmax(q k^T / sqrt(head_dim)) v for stacked groups, as one
// tape node. q, k, v are already projected ([rows x model_dim]); group i
// attends q rows q_segments[i] over k/v rows kv_segments[i]. Groups without
// keys produce zero rows. Traces are filled per group when requested.
Var segmented_attention_core(Var q, Var k, Var v, std::span<const Segment> q_segments,
                             std::span<const Segment> kv_segments, std::size_t num_heads,
                             std::vector<AttentionTrace>* traces = nullptr);

struct SegmentedAttention {
  Var output;                          // [sum of query counts x model_dim]
  std::vector<AttentionTrace> traces;  // one per group; empty when keys are empty
};

// Independent attention for many groups stacked along rows, sharing one set of
// projections. Group i attends q rows q_segments[i] over key/value rows
// kv_segments[i]. A group with no keys yields zero rows.
SegmentedAttention mh_attention_segments(num::Tape& tape, const num::ParamStore& params,
                                         const std::string& prefix, Var q_all,
                                         std::span<const Segment> q_segments, Var kv_all,
                                         std::span<const Segment> kv_segments,
                                         const AttentionConfig& cfg, bool keep_traces = false);

}  // namespace farm::attention
