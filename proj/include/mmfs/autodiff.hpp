// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation of one forward pass. Values are stored in
// the tape's node list; backward() walks the list in reverse and accumulates
// gradients. Parameters live outside the tape and receive gradients only when
// their `trainable` flag is set at the time the tape references them.

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace mmfs {

using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

}  // namespace mmfs

namespace mmfs::ad {

struct Parameter {
  std::string name;
  std::string group;
  Mat value;
  Mat grad;  // same shape as value once touched
  bool trainable = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Mat& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool requires_grad() const;
  /// Gradient after Tape::backward; empty matrix when no gradient reached it.
  const Mat& grad() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Mat& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  /// Leaf bound to a parameter. Repeated calls return the same node.
  Var param(Parameter& p);
  Var make(Mat value, bool requires_grad, BackwardFn fn);

  void backward(const Var& scalar_output);

  const Mat& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Mat& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }
  bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  size_t size() const { return nodes_.size(); }

  template <class Expr>
  void accumulate(const Var& v, const Eigen::MatrixBase<Expr>& g) {
    Node& n = nodes_[static_cast<size_t>(v.id())];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

// ---------------------------------------------------------------------------
// Operations. Shapes follow Eigen conventions; row vectors are 1×n.

Var matmul(const Var& a, const Var& b);
/// a · bᵀ
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var add_n(const std::vector<Var>& xs);

/// a (m×n) + row (1×n) broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// a (m×n) ⊙ row (1×n) broadcast over rows.
Var mul_row(const Var& a, const Var& row);
/// a (m×n) + col (m×1) broadcast over columns.
Var add_col(const Var& a, const Var& col);
/// a (m×n) ⊙ col (m×1) broadcast over columns.
Var mul_col(const Var& a, const Var& col);

Var mul_const(const Var& a, const Mat& c);
Var add_const(const Var& a, const Mat& c);

Var gelu(const Var& a);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);

Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Divides each row by its L2 norm (norm floored at eps).
Var l2_normalize_rows(const Var& a, double eps = 1e-12);

Var concat_rows(const std::vector<Var>& xs);
Var concat_cols(const std::vector<Var>& xs);
Var slice_rows(const Var& a, Index start, Index count);
Var slice_cols(const Var& a, Index start, Index count);
Var gather_rows(const Var& a, const std::vector<Index>& rows);
/// Mean over rows, giving a 1×n row.
Var mean_rows(const Var& a);
/// Sum of all entries, giving 1×1.
Var sum(const Var& a);
/// Repeats a 1×n row k times.
Var repeat_rows(const Var& row, Index k);
/// out[:, j] = a[:, j + offset], zero outside range.
Var shift_cols(const Var& a, Index offset);
/// out[i, :] = a[i + offset, :], zero outside range.
Var shift_rows(const Var& a, Index offset);

/// Scalar-valued node whose local gradients were computed analytically by
/// the caller: d out / d inputs[i] = local_grads[i].
Var scalar_op(double value, const std::vector<Var>& inputs, std::vector<Mat> local_grads);

}  // namespace mmfs::ad
