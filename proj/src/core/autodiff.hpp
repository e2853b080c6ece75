// Copyright 2026 The MCUR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode differentiation over dense row-major double matrices.
// A Tape records every operation of one forward pass; backward() walks the
// tape in reverse and accumulates gradients into the nodes and, for nodes
// bound to a Parameter, into Parameter::grad.

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace mcur::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A named trainable tensor. `grad` has the shape of `value` once zero_grad() ran.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad = Matrix::Zero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  [[nodiscard]] const Matrix& value() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] double scalar() const;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var constant_scalar(double value);
  /// Leaf that receives a gradient but is not tied to a Parameter.
  Var leaf(Matrix value);
  /// Leaf bound to `p`. Repeated calls with the same parameter share one node.
  Var param(Parameter& p);

  /// Records an op result. `inputs` decide whether the node needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
  void backward(Var root);

  [[nodiscard]] const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  [[nodiscard]] bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  /// Gradient of a node after backward(); zeros if nothing flowed into it.
  [[nodiscard]] Matrix grad(Var v) const;

  /// Adds `g` into the gradient slot of node `id` (no-op when it needs none).
  void accumulate(int id, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(int id, const Expr& g) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }
  [[nodiscard]] const Matrix& upstream(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

// ---- elementwise and linear algebra ---------------------------------------

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// Broadcasts a 1xC row over every row of a.
Var add_row(Var a, Var row);
/// Multiplies every row of a elementwise by a 1xC row.
Var mul_row(Var a, Var row);
/// Multiplies row r of a by column entry col(r).
Var mul_col(Var a, Var col);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var abs(Var a);
Var square(Var a);
Var sigmoid(Var a);
/// Clamps to [lo, hi]; gradient is zero where the clamp is active.
Var clamp(Var a, double lo, double hi);
/// Forwards the value, blocks the gradient.
Var detach(Var a);

// ---- reductions and reshapes -----------------------------------------------

Var sum(Var a);
Var mean(Var a);
/// Row sums: RxC -> Rx1.
Var sum_cols(Var a);
/// Mean over rows: RxC -> 1xC.
Var mean_rows(Var a);
Var concat_rows(const std::vector<Var>& parts);
/// Row-major flatten into a 1x(R*C) row.
Var flatten(Var a);
/// Picks a(r, index[r]) for every row: RxC -> Rx1.
Var pick(Var a, const std::vector<int>& index);

// ---- row-wise normalizations -----------------------------------------------

Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
/// Per-row layer normalization without affine terms.
Var layer_norm_rows(Var a, double eps = 1e-5);
/// Scales each row to unit L2 norm. Throws on a zero row.
Var l2_normalize_rows(Var a);
/// out(r) = log sum_{c : mask(r,c)} exp(a(r,c)); rows with an empty mask yield -inf
/// and pass no gradient.
Var masked_logsumexp_rows(Var a, const BoolMatrix& mask);

}  // namespace mcur::ad
