// SPDX-License-Identifier: Apache-2.0
#include "farm/attention.hpp"

#include <cmath>
#include <memory>
#include <optional>

#include "numerics/eigen_map.hpp"

#include "farm/error.hpp"

namespace farm::attention {

void AttentionConfig::validate() const {
  if (num_heads == 0 || model_dim == 0) throw ConfigError("attention: zero heads or width");
  if (model_dim % num_heads != 0) {
    throw ConfigError("attention: model_dim " + std::to_string(model_dim) +
                      " not divisible by num_heads " + std::to_string(num_heads));
  }
}

Tensor AttentionTrace::head(std::size_t h) const {
  Tensor out({q_len, k_len});
  const double* src = weights.data() + h * q_len * k_len;
  std::copy(src, src + q_len * k_len, out.raw());
  return out;
}

Tensor AttentionTrace::mean_over_heads() const {
  Tensor out({q_len, k_len});
  for (std::size_t h = 0; h < num_heads; ++h) num::axpy(out, head(h), 1.0 / num_heads);
  return out;
}

void init_attention(num::ParamStore& params, const std::string& prefix, std::size_t q_dim,
                    std::size_t kv_dim, const AttentionConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  params.add_glorot(prefix + ".wq", q_dim, cfg.model_dim, rng);
  params.add_glorot(prefix + ".wk", kv_dim, cfg.model_dim, rng);
  params.add_glorot(prefix + ".wv", kv_dim, cfg.model_dim, rng);
  params.add_glorot(prefix + ".wo", cfg.model_dim, cfg.model_dim, rng);
}

namespace {

// Per-head softmax(q k^T / sqrt(dh)) v on already projected inputs; heads are
// concatenated along columns.
Var attend_heads(Var q, Var k, Var v, const AttentionConfig& cfg, AttentionTrace* trace) {
  const std::size_t dh = cfg.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  if (trace) trace->weights.reserve(cfg.num_heads * q.rows() * k.rows());
  std::vector<Var> heads;
  heads.reserve(cfg.num_heads);
  for (std::size_t h = 0; h < cfg.num_heads; ++h) {
    const Var qh = cfg.num_heads == 1 ? q : num::slice_cols(q, h * dh, dh);
    const Var kh = cfg.num_heads == 1 ? k : num::slice_cols(k, h * dh, dh);
    const Var vh = cfg.num_heads == 1 ? v : num::slice_cols(v, h * dh, dh);
    const Var weights = num::softmax_rows(num::scale(num::matmul_nt(qh, kh), inv_sqrt));
    if (trace) {
      const auto w = weights.value().data();
      trace->weights.insert(trace->weights.end(), w.begin(), w.end());
    }
    heads.push_back(num::matmul(weights, vh));
  }
  return cfg.num_heads == 1 ? heads.front() : num::concat_cols(heads);
}

}  // namespace

AttentionResult mh_attention(num::Tape& tape, const num::ParamStore& params,
                             const std::string& prefix, Var q_in, Var k_in, Var v_in,
                             const AttentionConfig& cfg, bool keep_trace) {
  cfg.validate();
  if (q_in.rows() == 0 || k_in.rows() == 0) {
    throw ShapeError("mh_attention(" + prefix + "): empty query or key sequence");
  }
  if (k_in.rows() != v_in.rows()) {
    throw ShapeError("mh_attention(" + prefix + "): keys " + num::shape_to_string(k_in.shape()) +
                     " and values " + num::shape_to_string(v_in.shape()) + " differ in length");
  }
  const Var wq = tape.param(params, prefix + ".wq");
  const Var wk = tape.param(params, prefix + ".wk");
  const Var wv = tape.param(params, prefix + ".wv");
  const Var wo = tape.param(params, prefix + ".wo");
  auto check_in = [&](Var in, Var w, const char* what) {
    if (in.cols() != w.rows() || w.cols() != cfg.model_dim) {
      throw ShapeError("mh_attention(" + prefix + "): " + what + " input " +
                       num::shape_to_string(in.shape()) + " vs projection " +
                       num::shape_to_string(w.shape()));
    }
  };
  check_in(q_in, wq, "query");
  check_in(k_in, wk, "key");
  check_in(v_in, wv, "value");

  AttentionResult result;
  if (keep_trace) result.trace = {cfg.num_heads, q_in.rows(), k_in.rows(), {}};
  const Var merged = attend_heads(num::matmul(q_in, wq), num::matmul(k_in, wk),
                                  num::matmul(v_in, wv), cfg, keep_trace ? &result.trace : nullptr);
  result.output = num::matmul(merged, wo);
  return result;
}

AttentionResult target_attention(num::Tape& tape, const num::ParamStore& params,
                                 const std::string& prefix, Var candidate, Var seq,
                                 const AttentionConfig& cfg, bool keep_trace) {
  if (candidate.rows() != 1) {
    throw ShapeError("target_attention(" + prefix + "): candidate must be a single row, got " +
                     num::shape_to_string(candidate.shape()));
  }
  return mh_attention(tape, params, prefix, candidate, seq, seq, cfg, keep_trace);
}

Var segmented_attention_core(Var q, Var k, Var v, std::span<const Segment> q_segments,
                             std::span<const Segment> kv_segments, std::size_t num_heads,
                             std::vector<AttentionTrace>* traces) {
  using num::detail::RowMatrix;
  const std::size_t md = q.cols();
  if (k.cols() != md || v.cols() != md || k.rows() != v.rows() || num_heads == 0 ||
      md % num_heads != 0 || q_segments.size() != kv_segments.size()) {
    throw ShapeError("segmented_attention_core: q " + num::shape_to_string(q.shape()) + ", k " +
                     num::shape_to_string(k.shape()) + ", v " + num::shape_to_string(v.shape()) +
                     ", " + std::to_string(num_heads) + " heads");
  }
  const std::size_t dh = md / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto ix = [](std::size_t n) { return static_cast<Eigen::Index>(n); };

  // Attention weights of every (group, head), kept for the backward pass.
  auto weights = std::make_shared<std::vector<RowMatrix>>();
  weights->reserve(q_segments.size() * num_heads);
  std::vector<Segment> qsegs(q_segments.begin(), q_segments.end());
  std::vector<Segment> ksegs(kv_segments.begin(), kv_segments.end());

  Tensor out({q.rows(), md});
  const auto Q = num::detail::as_matrix(q.value());
  const auto K = num::detail::as_matrix(k.value());
  const auto V = num::detail::as_matrix(v.value());
  auto O = num::detail::as_matrix(out);
  if (traces) traces->assign(qsegs.size(), AttentionTrace{});
  for (std::size_t i = 0; i < qsegs.size(); ++i) {
    const Segment qs = qsegs[i];
    const Segment ks = ksegs[i];
    if (qs.begin + qs.count > q.rows() || ks.begin + ks.count > k.rows()) {
      throw ShapeError("segmented_attention_core: group " + std::to_string(i) + " out of range");
    }
    if (qs.count == 0 || ks.count == 0) continue;
    if (traces) {
      auto& tr = (*traces)[i];
      tr = {num_heads, qs.count, ks.count, {}};
      tr.weights.reserve(num_heads * qs.count * ks.count);
    }
    for (std::size_t h = 0; h < num_heads; ++h) {
      RowMatrix a = Q.block(ix(qs.begin), ix(h * dh), ix(qs.count), ix(dh)) *
                    K.block(ix(ks.begin), ix(h * dh), ix(ks.count), ix(dh)).transpose() * scale;
      num::detail::softmax_rows_inplace(a);
      O.block(ix(qs.begin), ix(h * dh), ix(qs.count), ix(dh)).noalias() =
          a * V.block(ix(ks.begin), ix(h * dh), ix(ks.count), ix(dh));
      if (traces) {
        auto& w = (*traces)[i].weights;
        w.insert(w.end(), a.data(), a.data() + a.size());
      }
      weights->push_back(std::move(a));
    }
  }
  return q.tape()->record(
      std::move(out), {q, k, v},
      [q, k, v, weights, qsegs = std::move(qsegs), ksegs = std::move(ksegs), num_heads, dh, scale,
       ix](num::Tape& tp, const Tensor& g) {
        const bool gq = tp.needs_grad(q), gk = tp.needs_grad(k), gv = tp.needs_grad(v);
        const auto Q = num::detail::as_matrix(q.value());
        const auto K = num::detail::as_matrix(k.value());
        const auto V = num::detail::as_matrix(v.value());
        const auto G = num::detail::as_matrix(g);
        std::optional<num::detail::MatMap> dQ, dK, dV;
        if (gq) dQ.emplace(num::detail::as_matrix(tp.grad_buffer(q)));
        if (gk) dK.emplace(num::detail::as_matrix(tp.grad_buffer(k)));
        if (gv) dV.emplace(num::detail::as_matrix(tp.grad_buffer(v)));
        std::size_t w = 0;
        for (std::size_t i = 0; i < qsegs.size(); ++i) {
          const Segment qs = qsegs[i];
          const Segment ks = ksegs[i];
          if (qs.count == 0 || ks.count == 0) continue;
          for (std::size_t h = 0; h < num_heads; ++h, ++w) {
            const RowMatrix& a = (*weights)[w];
            const auto go = G.block(ix(qs.begin), ix(h * dh), ix(qs.count), ix(dh));
            const auto vh = V.block(ix(ks.begin), ix(h * dh), ix(ks.count), ix(dh));
            if (gv) {
              dV->block(ix(ks.begin), ix(h * dh), ix(ks.count), ix(dh)).noalias() +=
                  a.transpose() * go;
            }
            if (!gq && !gk) continue;
            const RowMatrix da = go * vh.transpose();
            // Softmax backward: dS = A * (dA - rowsum(dA * A)).
            RowMatrix ds = a.cwiseProduct(da);
            const Eigen::VectorXd dots = ds.rowwise().sum();
            ds -= a.cwiseProduct(dots.replicate(1, a.cols()));
            ds *= scale;
            if (gq) {
              dQ->block(ix(qs.begin), ix(h * dh), ix(qs.count), ix(dh)).noalias() +=
                  ds * K.block(ix(ks.begin), ix(h * dh), ix(ks.count), ix(dh));
            }
            if (gk) {
              dK->block(ix(ks.begin), ix(h * dh), ix(ks.count), ix(dh)).noalias() +=
                  ds.transpose() * Q.block(ix(qs.begin), ix(h * dh), ix(qs.count), ix(dh));
            }
          }
        }
      });
}

SegmentedAttention mh_attention_segments(num::Tape& tape, const num::ParamStore& params,
                                         const std::string& prefix, Var q_all,
                                         std::span<const Segment> q_segments, Var kv_all,
                                         std::span<const Segment> kv_segments,
                                         const AttentionConfig& cfg, bool keep_traces) {
  cfg.validate();
  if (q_segments.size() != kv_segments.size()) {
    throw ShapeError("mh_attention_segments(" + prefix + "): " +
                     std::to_string(q_segments.size()) + " query groups vs " +
                     std::to_string(kv_segments.size()) + " key groups");
  }
  const Var wq = tape.param(params, prefix + ".wq");
  const Var wk = tape.param(params, prefix + ".wk");
  const Var wv = tape.param(params, prefix + ".wv");
  const Var wo = tape.param(params, prefix + ".wo");
  if (q_all.cols() != wq.rows() || kv_all.cols() != wk.rows()) {
    throw ShapeError("mh_attention_segments(" + prefix + "): inputs " +
                     num::shape_to_string(q_all.shape()) + " / " +
                     num::shape_to_string(kv_all.shape()) + " vs projections " +
                     num::shape_to_string(wq.shape()) + " / " + num::shape_to_string(wk.shape()));
  }
  SegmentedAttention out;
  const Var core = segmented_attention_core(num::matmul(q_all, wq), num::matmul(kv_all, wk),
                                            num::matmul(kv_all, wv), q_segments, kv_segments,
                                            cfg.num_heads, keep_traces ? &out.traces : nullptr);
  out.output = num::matmul(core, wo);
  return out;
}

}  // namespace farm::attention
