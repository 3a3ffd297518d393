// SPDX-License-Identifier: Apache-2.0
#include "farm/numerics/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "eigen_map.hpp"
#include "farm/error.hpp"

namespace farm::num {

using detail::as_matrix;

const Tensor& Var::value() const { return tape_->value(*this); }

double Var::scalar() const {
  const Tensor& v = value();
  if (v.size() != 1) throw ShapeError("scalar(): tensor " + shape_to_string(v.shape()));
  return v[0];
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(const ParamStore& store, const std::string& name) {
  if (auto it = param_ids_.find(name); it != param_ids_.end()) return Var(this, it->second);
  Node n;
  n.value = store.value(name);
  n.requires_grad = recording_;
  n.param_name = name;
  Var v = push(std::move(n));
  param_ids_.emplace(name, v.id());
  return v;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (recording_) {
    for (const Var& in : inputs) {
      if (in.tape() != this) throw Error("tape: operand recorded on a different tape");
      n.requires_grad = n.requires_grad || needs_grad(in);
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  return push(std::move(n));
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (!n.has_grad) {
    n.grad = Tensor::zeros_like(n.value);
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor* Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  return n.has_grad ? &n.grad : nullptr;
}

void Tape::backward(Var output, ParamStore& sink) {
  if (!recording_) throw Error("backward on a non-recording tape");
  if (output.tape() != this) throw Error("backward: output belongs to another tape");
  if (value(output).size() != 1) {
    throw ShapeError("backward: output must be a single value, got " +
                     shape_to_string(value(output).shape()));
  }
  grad_buffer(output).fill(1.0);
  for (int id = output.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
  for (const auto& [name, id] : param_ids_) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.has_grad) axpy(sink.grad(name), n.grad);
  }
}

namespace {

Tape& tape_of(Var a, Var b) {
  if (!a.valid() || a.tape() != b.tape()) throw Error("operands on different tapes");
  return *a.tape();
}

void check_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Tensor out = farm::num::matmul(a.value(), b.value());
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (tp.needs_grad(a)) {
      as_matrix(tp.grad_buffer(a)).noalias() += as_matrix(g) * as_matrix(b.value()).transpose();
    }
    if (tp.needs_grad(b)) {
      as_matrix(tp.grad_buffer(b)).noalias() += as_matrix(a.value()).transpose() * as_matrix(g);
    }
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Tensor out = farm::num::matmul_nt(a.value(), b.value());
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    // C = A B^T: dA = G B, dB = G^T A
    if (tp.needs_grad(a)) {
      as_matrix(tp.grad_buffer(a)).noalias() += as_matrix(g) * as_matrix(b.value());
    }
    if (tp.needs_grad(b)) {
      as_matrix(tp.grad_buffer(b)).noalias() += as_matrix(g).transpose() * as_matrix(a.value());
    }
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  check_same_shape(a, b, "add");
  return t.record(farm::num::add(a.value(), b.value()), {a, b},
                  [a, b](Tape& tp, const Tensor& g) {
                    if (tp.needs_grad(a)) axpy(tp.grad_buffer(a), g);
                    if (tp.needs_grad(b)) axpy(tp.grad_buffer(b), g);
                  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  check_same_shape(a, b, "sub");
  return t.record(farm::num::sub(a.value(), b.value()), {a, b},
                  [a, b](Tape& tp, const Tensor& g) {
                    if (tp.needs_grad(a)) axpy(tp.grad_buffer(a), g);
                    if (tp.needs_grad(b)) axpy(tp.grad_buffer(b), g, -1.0);
                  });
}

Var add_row(Var x, Var bias) {
  Tape& t = tape_of(x, bias);
  if (bias.value().size() != x.cols()) {
    throw ShapeError("add_row: bias " + shape_to_string(bias.shape()) + " vs input " +
                     shape_to_string(x.shape()));
  }
  Tensor out = x.value();
  const Tensor& b = bias.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
  }
  return t.record(std::move(out), {x, bias}, [x, bias](Tape& tp, const Tensor& g) {
    if (tp.needs_grad(x)) axpy(tp.grad_buffer(x), g);
    if (tp.needs_grad(bias)) {
      Tensor& gb = tp.grad_buffer(bias);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
      }
    }
  });
}

Var scale(Var x, double s) {
  return x.tape()->record(farm::num::scale(x.value(), s), {x},
                          [x, s](Tape& tp, const Tensor& g) { axpy(tp.grad_buffer(x), g, s); });
}

Var scale_by(Var x, Var s) {
  Tape& t = tape_of(x, s);
  const Tensor& sv = s.value();
  const bool whole = sv.size() == 1;
  if (!whole && !(sv.rows() == x.rows() && sv.cols() == 1)) {
    throw ShapeError("scale_by: scale " + shape_to_string(sv.shape()) + " vs input " +
                     shape_to_string(x.shape()));
  }
  Tensor out = x.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const double f = whole ? sv[0] : sv[r];
    for (double& v : out.row(r)) v *= f;
  }
  return t.record(std::move(out), {x, s}, [x, s, whole](Tape& tp, const Tensor& g) {
    const Tensor& sv = s.value();
    const Tensor& xv = x.value();
    if (tp.needs_grad(x)) {
      Tensor& gx = tp.grad_buffer(x);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const double f = whole ? sv[0] : sv[r];
        auto gr = g.row(r);
        auto out = gx.row(r);
        for (std::size_t c = 0; c < gr.size(); ++c) out[c] += f * gr[c];
      }
    }
    if (tp.needs_grad(s)) {
      Tensor& gs = tp.grad_buffer(s);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto gr = g.row(r);
        auto xr = xv.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < gr.size(); ++c) acc += gr[c] * xr[c];
        gs[whole ? 0 : r] += acc;
      }
    }
  });
}

Var relu(Var x) {
  return x.tape()->record(farm::num::relu(x.value()), {x}, [x](Tape& tp, const Tensor& g) {
    const Tensor& xv = x.value();
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var sigmoid(Var x) {
  Tensor out = farm::num::sigmoid(x.value());
  auto y = std::make_shared<Tensor>(out);
  return x.tape()->record(std::move(out), {x}, [x, y](Tape& tp, const Tensor& g) {
    const Tensor& yv = *y;
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i] * (1.0 - yv[i]);
  });
}

Var softmax_rows(Var x) {
  Tape& t = *x.tape();
  Tensor out = farm::num::softmax_rows(x.value());
  auto probs = std::make_shared<Tensor>(out);
  return t.record(std::move(out), {x}, [x, probs](Tape& tp, const Tensor& g) {
    const Tensor& p = *probs;
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      auto pr = p.row(r);
      auto gr = g.row(r);
      auto out = gx.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < pr.size(); ++c) dot += pr[c] * gr[c];
      for (std::size_t c = 0; c < pr.size(); ++c) out[c] += pr[c] * (gr[c] - dot);
    }
  });
}

Var mean_rows(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.rows() == 0) {
    throw ShapeError("mean_rows: empty sequence " + shape_to_string(xv.shape()));
  }
  Tensor pooled = farm::num::mean_pool(xv).reshaped({1, xv.cols()});
  return x.tape()->record(std::move(pooled), {x}, [x](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    const double inv = 1.0 / static_cast<double>(gx.rows());
    for (std::size_t r = 0; r < gx.rows(); ++r) {
      auto out = gx.row(r);
      for (std::size_t c = 0; c < out.size(); ++c) out[c] += inv * g[c];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = *parts.front().tape();
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Tensor out({rows, cols});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(pv.row(r).begin(), pv.row(r).end(), out.row(r).begin() + off);
    }
    off += pv.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [inputs](Tape& tp, const Tensor& g) {
    std::size_t off = 0;
    for (const Var& p : inputs) {
      const std::size_t w = p.cols();
      if (tp.needs_grad(p)) {
        Tensor& gp = tp.grad_buffer(p);
        for (std::size_t r = 0; r < gp.rows(); ++r) {
          auto src = g.row(r);
          auto dst = gp.row(r);
          for (std::size_t c = 0; c < w; ++c) dst[c] += src[off + c];
        }
      }
      off += w;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape& t = *parts.front().tape();
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    rows += p.rows();
  }
  Tensor out({rows, cols});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    std::copy(pv.data().begin(), pv.data().end(), out.raw() + off * cols);
    off += pv.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [inputs, cols](Tape& tp, const Tensor& g) {
    std::size_t off = 0;
    for (const Var& p : inputs) {
      const std::size_t n = p.rows() * cols;
      if (tp.needs_grad(p)) {
        Tensor& gp = tp.grad_buffer(p);
        const double* src = g.raw() + off * cols;
        for (std::size_t i = 0; i < n; ++i) gp[i] += src[i];
      }
      off += p.rows();
    }
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  if (begin + count > xv.cols()) {
    throw ShapeError("slice_cols: range exceeds " + shape_to_string(xv.shape()));
  }
  Tensor out({xv.rows(), count});
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto src = xv.row(r);
    std::copy(src.begin() + begin, src.begin() + begin + count, out.row(r).begin());
  }
  return x.tape()->record(std::move(out), {x}, [x, begin, count](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto src = g.row(r);
      auto dst = gx.row(r);
      for (std::size_t c = 0; c < count; ++c) dst[begin + c] += src[c];
    }
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  if (begin + count > xv.rows()) {
    throw ShapeError("slice_rows: range exceeds " + shape_to_string(xv.shape()));
  }
  const std::size_t cols = xv.cols();
  Tensor out({count, cols});
  std::copy(xv.raw() + begin * cols, xv.raw() + (begin + count) * cols, out.raw());
  return x.tape()->record(std::move(out), {x},
                          [x, begin, count, cols](Tape& tp, const Tensor& g) {
                            Tensor& gx = tp.grad_buffer(x);
                            double* dst = gx.raw() + begin * cols;
                            for (std::size_t i = 0; i < count * cols; ++i) dst[i] += g[i];
                          });
}

Var gather_rows(Var table, std::span<const int> indices) {
  const Tensor& tv = table.value();
  const std::size_t cols = tv.cols();
  Tensor out({indices.size(), cols});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0) continue;
    if (static_cast<std::size_t>(idx) >= tv.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(idx) + " out of range for " +
                       shape_to_string(tv.shape()));
    }
    auto src = tv.row(static_cast<std::size_t>(idx));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return table.tape()->record(std::move(out), {table},
                              [table, idx = std::move(idx)](Tape& tp, const Tensor& g) {
                                Tensor& gt = tp.grad_buffer(table);
                                for (std::size_t i = 0; i < idx.size(); ++i) {
                                  if (idx[i] < 0) continue;
                                  auto src = g.row(i);
                                  auto dst = gt.row(static_cast<std::size_t>(idx[i]));
                                  for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                                }
                              });
}

Var cross_entropy_rows(Var logits, std::span<const int> targets) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 2 || lv.rows() != targets.size() || lv.rows() == 0) {
    throw ShapeError("cross_entropy_rows: logits " + shape_to_string(lv.shape()) + " vs " +
                     std::to_string(targets.size()) + " targets");
  }
  Tensor probs = farm::num::softmax_rows(lv);
  double loss = 0.0;
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    auto row = lv.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    const auto tgt = static_cast<std::size_t>(targets[r]);
    if (tgt >= lv.cols()) throw ShapeError("cross_entropy_rows: target out of range");
    loss += (mx + std::log(sum)) - row[tgt];
  }
  const double inv = 1.0 / static_cast<double>(lv.rows());
  std::vector<int> tg(targets.begin(), targets.end());
  return logits.tape()->record(
      Tensor({1, 1}, loss * inv), {logits},
      [logits, probs = std::move(probs), tg = std::move(tg), inv](Tape& tp, const Tensor& g) {
        Tensor& gl = tp.grad_buffer(logits);
        const double s = g[0] * inv;
        for (std::size_t r = 0; r < probs.rows(); ++r) {
          auto pr = probs.row(r);
          auto out = gl.row(r);
          for (std::size_t c = 0; c < pr.size(); ++c) out[c] += s * pr[c];
          out[static_cast<std::size_t>(tg[r])] -= s;
        }
      });
}

Var binary_cross_entropy(Var probs, const Tensor& labels, double clamp) {
  const Tensor& pv = probs.value();
  if (pv.shape() != labels.shape() || pv.rows() == 0) {
    throw ShapeError("binary_cross_entropy: probabilities " + shape_to_string(pv.shape()) +
                     " vs labels " + shape_to_string(labels.shape()));
  }
  const double inv = 1.0 / static_cast<double>(pv.rows());
  double loss = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double p = std::clamp(pv[i], clamp, 1.0 - clamp);
    loss -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  return probs.tape()->record(
      Tensor({1, 1}, loss * inv), {probs},
      [probs, labels, clamp, inv](Tape& tp, const Tensor& g) {
        const Tensor& pv = probs.value();
        Tensor& gp = tp.grad_buffer(probs);
        for (std::size_t i = 0; i < pv.size(); ++i) {
          const double p = pv[i];
          if (p < clamp || p > 1.0 - clamp) continue;  // clamped: flat
          const double y = labels[i];
          gp[i] += g[0] * inv * (-(y / p) + (1.0 - y) / (1.0 - p));
        }
      });
}

Var sum_all(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape()->record(Tensor({1, 1}, s), {x}, [x](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    for (double& v : gx.data()) v += g[0];
  });
}

Var mean_segments(Var x, std::span<const Segment> segments) {
  const Tensor& xv = x.value();
  const std::size_t cols = xv.cols();
  Tensor out({segments.size(), cols});
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Segment s = segments[i];
    if (s.begin + s.count > xv.rows()) {
      throw ShapeError("mean_segments: group " + std::to_string(i) + " exceeds " +
                       shape_to_string(xv.shape()));
    }
    if (s.count == 0) continue;
    auto o = out.row(i);
    for (std::size_t r = s.begin; r < s.begin + s.count; ++r) {
      auto in = xv.row(r);
      for (std::size_t c = 0; c < cols; ++c) o[c] += in[c];
    }
    const double inv = 1.0 / static_cast<double>(s.count);
    for (double& v : o) v *= inv;
  }
  std::vector<Segment> segs(segments.begin(), segments.end());
  return x.tape()->record(std::move(out), {x}, [x, segs = std::move(segs)](Tape& tp, const Tensor& g) {
    Tensor& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < segs.size(); ++i) {
      if (segs[i].count == 0) continue;
      const double inv = 1.0 / static_cast<double>(segs[i].count);
      auto gi = g.row(i);
      for (std::size_t r = segs[i].begin; r < segs[i].begin + segs[i].count; ++r) {
        auto dst = gx.row(r);
        for (std::size_t c = 0; c < gi.size(); ++c) dst[c] += gi[c] * inv;
      }
    }
  });
}

}  // namespace farm::num
