// SPDX-License-Identifier: Apache-2.0

#include "mmfs/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "mmfs/errors.hpp"

namespace mmfs::ad {

const Mat& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }
const Mat& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Mat value) { return make(std::move(value), false, nullptr); }

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Var v = make(p.value, p.trainable, nullptr);
  nodes_.back().param = &p;
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Tape::make(Mat value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::backward(const Var& out) {
  if (out.rows() != 1 || out.cols() != 1) {
    throw ShapeError("backward() needs a scalar output");
  }
  if (!requires_grad(out.id())) return;
  nodes_[static_cast<size_t>(out.id())].grad = Mat::Ones(1, 1);
  for (int i = out.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) {
      // Copy: the closure may append to other nodes' grads but never reallocates.
      const Mat g = n.grad;
      n.backward(*this, g);
    } else if (n.param != nullptr) {
      Parameter& p = *n.param;
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
      p.grad += n.grad;
    }
  }
}

namespace {

Tape& tape_of(const Var& a) { return *a.tape(); }

bool any_grad(std::initializer_list<const Var*> xs) {
  for (const Var* x : xs) {
    if (x->requires_grad()) return true;
  }
  return false;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

double gelu_scalar(double x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

double gelu_grad_scalar(double x) {
  constexpr double k = 0.7978845608028654;
  const double u = k * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = k * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimension mismatch " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()));
  }
  Tape& t = tape_of(a);
  return t.make(a.value() * b.value(), any_grad({&a, &b}), [a, b](Tape& t, const Mat& g) {
    if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column mismatch");
  Tape& t = tape_of(a);
  return t.make(a.value() * b.value().transpose(), any_grad({&a, &b}),
                [a, b](Tape& t, const Mat& g) {
                  if (a.requires_grad()) t.accumulate(a, g * b.value());
                  if (b.requires_grad()) t.accumulate(b, g.transpose() * a.value());
                });
}

Var transpose(const Var& a) {
  Tape& t = tape_of(a);
  return t.make(a.value().transpose(), a.requires_grad(),
                [a](Tape& t, const Mat& g) { t.accumulate(a, g.transpose()); });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tape& t = tape_of(a);
  return t.make(a.value() + b.value(), any_grad({&a, &b}), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tape& t = tape_of(a);
  return t.make(a.value() - b.value(), any_grad({&a, &b}), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tape& t = tape_of(a);
  return t.make(a.value().cwiseProduct(b.value()), any_grad({&a, &b}),
                [a, b](Tape& t, const Mat& g) {
                  if (a.requires_grad()) t.accumulate(a, g.cwiseProduct(b.value()));
                  if (b.requires_grad()) t.accumulate(b, g.cwiseProduct(a.value()));
                });
}

Var scale(const Var& a, double s) {
  Tape& t = tape_of(a);
  return t.make(a.value() * s, a.requires_grad(),
                [a, s](Tape& t, const Mat& g) { t.accumulate(a, g * s); });
}

Var add_scalar(const Var& a, double s) {
  Tape& t = tape_of(a);
  return t.make((a.value().array() + s).matrix(), a.requires_grad(),
                [a](Tape& t, const Mat& g) { t.accumulate(a, g); });
}

Var add_n(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("add_n: empty input");
  Mat v = xs.front().value();
  bool rg = xs.front().requires_grad();
  for (size_t i = 1; i < xs.size(); ++i) {
    check_same_shape(xs[0], xs[i], "add_n");
    v += xs[i].value();
    rg = rg || xs[i].requires_grad();
  }
  return tape_of(xs.front()).make(std::move(v), rg, [xs](Tape& t, const Mat& g) {
    for (const Var& x : xs) t.accumulate(x, g);
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bad row shape");
  Tape& t = tape_of(a);
  Mat v = a.value().rowwise() + row.value().row(0);
  return t.make(std::move(v), any_grad({&a, &row}), [a, row](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    if (row.requires_grad()) t.accumulate(row, g.colwise().sum());
  });
}

Var mul_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("mul_row: bad row shape");
  Tape& t = tape_of(a);
  Mat v = a.value().array().rowwise() * row.value().row(0).array();
  return t.make(std::move(v), any_grad({&a, &row}), [a, row](Tape& t, const Mat& g) {
    if (a.requires_grad()) {
      t.accumulate(a, (g.array().rowwise() * row.value().row(0).array()).matrix());
    }
    if (row.requires_grad()) t.accumulate(row, g.cwiseProduct(a.value()).colwise().sum());
  });
}

Var add_col(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw ShapeError("add_col: bad column shape");
  Tape& t = tape_of(a);
  Mat v = a.value().colwise() + col.value().col(0);
  return t.make(std::move(v), any_grad({&a, &col}), [a, col](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    if (col.requires_grad()) t.accumulate(col, g.rowwise().sum());
  });
}

Var mul_col(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw ShapeError("mul_col: bad column shape");
  Tape& t = tape_of(a);
  Mat v = a.value().array().colwise() * col.value().col(0).array();
  return t.make(std::move(v), any_grad({&a, &col}), [a, col](Tape& t, const Mat& g) {
    if (a.requires_grad()) {
      t.accumulate(a, (g.array().colwise() * col.value().col(0).array()).matrix());
    }
    if (col.requires_grad()) t.accumulate(col, g.cwiseProduct(a.value()).rowwise().sum());
  });
}

Var mul_const(const Var& a, const Mat& c) {
  if (c.rows() != a.rows() || c.cols() != a.cols()) throw ShapeError("mul_const: shape mismatch");
  Tape& t = tape_of(a);
  return t.make(a.value().cwiseProduct(c), a.requires_grad(),
                [a, c](Tape& t, const Mat& g) { t.accumulate(a, g.cwiseProduct(c)); });
}

Var add_const(const Var& a, const Mat& c) {
  if (c.rows() != a.rows() || c.cols() != a.cols()) throw ShapeError("add_const: shape mismatch");
  Tape& t = tape_of(a);
  return t.make(a.value() + c, a.requires_grad(),
                [a](Tape& t, const Mat& g) { t.accumulate(a, g); });
}

Var gelu(const Var& a) {
  Tape& t = tape_of(a);
  return t.make(a.value().unaryExpr(&gelu_scalar), a.requires_grad(),
                [a](Tape& t, const Mat& g) {
                  t.accumulate(a, g.cwiseProduct(a.value().unaryExpr(&gelu_grad_scalar)));
                });
}

Var relu(const Var& a) {
  Tape& t = tape_of(a);
  return t.make(a.value().cwiseMax(0.0), a.requires_grad(), [a](Tape& t, const Mat& g) {
    t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0).matrix());
  });
}

Var sigmoid(const Var& a) {
  Tape& t = tape_of(a);
  Mat s = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return t.make(s, a.requires_grad(), [a, s](Tape& t, const Mat& g) {
    t.accumulate(a, (g.array() * s.array() * (1.0 - s.array())).matrix());
  });
}

Var tanh(const Var& a) {
  Tape& t = tape_of(a);
  Mat v = a.value().array().tanh().matrix();
  return t.make(v, a.requires_grad(), [a, v](Tape& t, const Mat& g) {
    t.accumulate(a, (g.array() * (1.0 - v.array().square())).matrix());
  });
}

Var softmax_rows(const Var& a) {
  Tape& t = tape_of(a);
  const Mat& x = a.value();
  Mat s(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    s.row(i) = (x.row(i).array() - m).exp().matrix();
    s.row(i) /= s.row(i).sum();
  }
  return t.make(s, a.requires_grad(), [a, s](Tape& t, const Mat& g) {
    // dx = s ⊙ (g - rowsum(g ⊙ s))
    const Eigen::VectorXd dot = g.cwiseProduct(s).rowwise().sum();
    t.accumulate(a, (s.array() * (g.colwise() - dot).array()).matrix());
  });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Index n = x.cols();
  if (gamma.cols() != n || beta.cols() != n) throw ShapeError("layer_norm_rows: bad affine shape");
  Tape& t = tape_of(x);
  const Mat& xv = x.value();
  Mat xhat(xv.rows(), n);
  Eigen::VectorXd inv_std(xv.rows());
  for (Index i = 0; i < xv.rows(); ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Mat y = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
          beta.value().row(0).array();
  return t.make(std::move(y), any_grad({&x, &gamma, &beta}),
                [x, gamma, beta, xhat, inv_std, n](Tape& t, const Mat& g) {
                  if (gamma.requires_grad()) t.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
                  if (beta.requires_grad()) t.accumulate(beta, g.colwise().sum());
                  if (!x.requires_grad()) return;
                  const Mat gh = g.array().rowwise() * gamma.value().row(0).array();
                  Mat dx(gh.rows(), n);
                  const double nd = static_cast<double>(n);
                  for (Index i = 0; i < gh.rows(); ++i) {
                    const double m1 = gh.row(i).mean();
                    const double m2 = gh.row(i).dot(xhat.row(i)) / nd;
                    dx.row(i) = inv_std(i) * (gh.row(i).array() - m1 - xhat.row(i).array() * m2);
                  }
                  t.accumulate(x, dx);
                });
}

Var l2_normalize_rows(const Var& a, double eps) {
  Tape& t = tape_of(a);
  const Mat& x = a.value();
  Eigen::VectorXd norms = x.rowwise().norm().cwiseMax(eps);
  Mat y = x.array().colwise() / norms.array();
  return t.make(y, a.requires_grad(), [a, y, norms](Tape& t, const Mat& g) {
    // dx = (g - y (g·y)) / |x|
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Mat dx = (g - (y.array().colwise() * dot.array()).matrix());
    dx = dx.array().colwise() / norms.array();
    t.accumulate(a, dx);
  });
}

Var concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_rows: empty input");
  const Index cols = xs.front().cols();
  Index rows = 0;
  bool rg = false;
  for (const Var& x : xs) {
    if (x.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += x.rows();
    rg = rg || x.requires_grad();
  }
  Mat v(rows, cols);
  Index r = 0;
  for (const Var& x : xs) {
    v.middleRows(r, x.rows()) = x.value();
    r += x.rows();
  }
  return tape_of(xs.front()).make(std::move(v), rg, [xs](Tape& t, const Mat& g) {
    Index r = 0;
    for (const Var& x : xs) {
      if (x.requires_grad()) t.accumulate(x, g.middleRows(r, x.rows()));
      r += x.rows();
    }
  });
}

Var concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_cols: empty input");
  const Index rows = xs.front().rows();
  Index cols = 0;
  bool rg = false;
  for (const Var& x : xs) {
    if (x.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += x.cols();
    rg = rg || x.requires_grad();
  }
  Mat v(rows, cols);
  Index c = 0;
  for (const Var& x : xs) {
    v.middleCols(c, x.cols()) = x.value();
    c += x.cols();
  }
  return tape_of(xs.front()).make(std::move(v), rg, [xs](Tape& t, const Mat& g) {
    Index c = 0;
    for (const Var& x : xs) {
      if (x.requires_grad()) t.accumulate(x, g.middleCols(c, x.cols()));
      c += x.cols();
    }
  });
}

Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
  Tape& t = tape_of(a);
  const Index rows = a.rows();
  return t.make(a.value().middleRows(start, count), a.requires_grad(),
                [a, start, count, rows](Tape& t, const Mat& g) {
                  Mat full = Mat::Zero(rows, g.cols());
                  full.middleRows(start, count) = g;
                  t.accumulate(a, full);
                });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  Tape& t = tape_of(a);
  const Index cols = a.cols();
  return t.make(a.value().middleCols(start, count), a.requires_grad(),
                [a, start, count, cols](Tape& t, const Mat& g) {
                  Mat full = Mat::Zero(g.rows(), cols);
                  full.middleCols(start, count) = g;
                  t.accumulate(a, full);
                });
}

Var gather_rows(const Var& a, const std::vector<Index>& rows) {
  Mat v(static_cast<Index>(rows.size()), a.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw ShapeError("gather_rows: index out of range");
    v.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  const Index n = a.rows();
  return tape_of(a).make(std::move(v), a.requires_grad(), [a, rows, n](Tape& t, const Mat& g) {
    Mat full = Mat::Zero(n, g.cols());
    for (size_t i = 0; i < rows.size(); ++i) full.row(rows[i]) += g.row(static_cast<Index>(i));
    t.accumulate(a, full);
  });
}

Var mean_rows(const Var& a) {
  Tape& t = tape_of(a);
  const Index n = a.rows();
  return t.make(a.value().colwise().mean(), a.requires_grad(), [a, n](Tape& t, const Mat& g) {
    t.accumulate(a, g.replicate(n, 1) / static_cast<double>(n));
  });
}

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  const Index r = a.rows();
  const Index c = a.cols();
  return t.make(std::move(v), a.requires_grad(),
                [a, r, c](Tape& t, const Mat& g) { t.accumulate(a, Mat::Constant(r, c, g(0, 0))); });
}

Var repeat_rows(const Var& row, Index k) {
  if (row.rows() != 1) throw ShapeError("repeat_rows: expects a single row");
  Tape& t = tape_of(row);
  return t.make(row.value().replicate(k, 1), row.requires_grad(),
                [row](Tape& t, const Mat& g) { t.accumulate(row, g.colwise().sum()); });
}

Var shift_cols(const Var& a, Index offset) {
  const Index n = a.cols();
  Mat v = Mat::Zero(a.rows(), n);
  // out[:, j] = a[:, j + offset]
  const Index lo = std::max<Index>(0, -offset);
  const Index hi = std::min<Index>(n, n - offset);
  if (hi > lo) v.middleCols(lo, hi - lo) = a.value().middleCols(lo + offset, hi - lo);
  return tape_of(a).make(std::move(v), a.requires_grad(),
                         [a, offset, lo, hi](Tape& t, const Mat& g) {
                           Mat d = Mat::Zero(g.rows(), g.cols());
                           if (hi > lo) d.middleCols(lo + offset, hi - lo) = g.middleCols(lo, hi - lo);
                           t.accumulate(a, d);
                         });
}

Var shift_rows(const Var& a, Index offset) {
  const Index n = a.rows();
  Mat v = Mat::Zero(n, a.cols());
  const Index lo = std::max<Index>(0, -offset);
  const Index hi = std::min<Index>(n, n - offset);
  if (hi > lo) v.middleRows(lo, hi - lo) = a.value().middleRows(lo + offset, hi - lo);
  return tape_of(a).make(std::move(v), a.requires_grad(),
                         [a, offset, lo, hi](Tape& t, const Mat& g) {
                           Mat d = Mat::Zero(g.rows(), g.cols());
                           if (hi > lo) d.middleRows(lo + offset, hi - lo) = g.middleRows(lo, hi - lo);
                           t.accumulate(a, d);
                         });
}

Var scalar_op(double value, const std::vector<Var>& inputs, std::vector<Mat> local_grads) {
  if (inputs.empty() || inputs.size() != local_grads.size()) {
    throw ShapeError("scalar_op: inputs and gradients must pair up");
  }
  bool rg = false;
  for (size_t i = 0; i < inputs.size(); ++i) {
    check_same_shape(inputs[i], inputs[i], "scalar_op");
    if (local_grads[i].rows() != inputs[i].rows() || local_grads[i].cols() != inputs[i].cols()) {
      throw ShapeError("scalar_op: gradient shape differs from input");
    }
    rg = rg || inputs[i].requires_grad();
  }
  Mat v(1, 1);
  v(0, 0) = value;
  return tape_of(inputs.front())
      .make(std::move(v), rg, [inputs, local_grads = std::move(local_grads)](Tape& t, const Mat& g) {
        for (size_t i = 0; i < inputs.size(); ++i) {
          if (inputs[i].requires_grad()) t.accumulate(inputs[i], local_grads[i] * g(0, 0));
        }
      });
}

}  // namespace mmfs::ad
