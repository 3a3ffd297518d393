// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "farm/numerics/param_store.hpp"
#include "farm/numerics/tensor.hpp"

namespace farm::num {

class Tape;

// Rows [begin, begin + count) of a matrix holding several stacked groups.
struct Segment {
  std::size_t begin = 0;
  std::size_t count = 0;
};

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const noexcept { return tape_; }
  int id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Linear record of a forward computation. Nodes are appended in topological
// order, so the reverse sweep is a single backwards pass over the record.
// A non-recording tape only computes values.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t num_nodes() const noexcept { return nodes_.size(); }

  Var constant(Tensor value);
  // Leaf bound to a named parameter; repeated calls return the same node.
  Var param(const ParamStore& store, const std::string& name);

  // Seeds d(output)/d(output) = 1 for a single-element output, sweeps the
  // record in reverse and adds parameter gradients into `sink`.
  void backward(Var output, ParamStore& sink);

  // Gradient of a node after backward(); nullptr if nothing flowed into it.
  const Tensor* grad(Var v) const;

  const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].value; }
  bool needs_grad(Var v) const {
    return nodes_[static_cast<std::size_t>(v.id())].requires_grad;
  }

  // Op-construction interface.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    std::string param_name;
  };

  Var push(Node node);

  bool recording_;
  std::deque<Node> nodes_;
  std::unordered_map<std::string, int> param_ids_;
};

// Differentiable ops. All operands must live on the same tape.
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_row(Var x, Var bias);   // x [n x d] + bias [1 x d] broadcast over rows
Var scale(Var x, double s);
Var scale_by(Var x, Var s);     // s is [1 x 1] (whole tensor) or [n x 1] (per row)
Var relu(Var x);
Var sigmoid(Var x);
Var softmax_rows(Var x);
Var mean_rows(Var x);           // [n x d] -> [1 x d]; n must be >= 1
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
// Looks up rows of `table`; a negative index yields a zero row.
Var gather_rows(Var table, std::span<const int> indices);
// Mean over rows of -log softmax(logits)[row, target[row]].
Var cross_entropy_rows(Var logits, std::span<const int> targets);
// (1/B) * sum over rows and columns of binary cross-entropy, with
// probabilities clamped to [clamp, 1 - clamp] before the log.
Var binary_cross_entropy(Var probs, const Tensor& labels, double clamp = 1e-7);
Var sum_all(Var x);

// Column means of each group's rows, one output row per group; an empty
// group yields a zero row.
Var mean_segments(Var x, std::span<const Segment> segments);

}  // namespace farm::num
