// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the unit tests: finite differences, tiny configs.

#pragma once

#include <functional>

#include "mmfs/autodiff.hpp"
#include "mmfs/data.hpp"
#include "mmfs/model_config.hpp"
#include "mmfs/random.hpp"

namespace mmfs::testing {

/// Central differences of f at x, one entry at a time.
inline Mat numeric_gradient(const std::function<double(const Mat&)>& f, Mat x, double h = 1e-6) {
  Mat g(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      const double keep = x(i, j);
      x(i, j) = keep + h;
      const double up = f(x);
      x(i, j) = keep - h;
      const double down = f(x);
      x(i, j) = keep;
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

/// ‖a − b‖ / max(‖a‖, ‖b‖), with a floor on the denominator.
inline double relative_error(const Mat& a, const Mat& b) {
  const double den = std::max({a.norm(), b.norm(), 1e-10});
  return (a - b).norm() / den;
}

/// Gradient of a scalar tape expression with respect to `x`, by backward.
inline Mat tape_gradient(const std::function<ad::Var(ad::Tape&, const ad::Var&)>& f, const Mat& x) {
  ad::Parameter p{"x", "test", x, Mat(), true};
  ad::Tape tape;
  const ad::Var out = f(tape, tape.param(p));
  tape.backward(out);
  const ad::Var leaf = tape.param(p);
  return leaf.grad().size() ? leaf.grad() : Mat::Zero(x.rows(), x.cols());
}

/// Value of the same expression on a fresh tape.
inline double tape_value(const std::function<ad::Var(ad::Tape&, const ad::Var&)>& f, const Mat& x) {
  ad::Tape tape;
  return f(tape, tape.constant(x)).scalar();
}

/// Relative error between backward and central differences of `f` at `x`.
inline double tape_gradcheck(const std::function<ad::Var(ad::Tape&, const ad::Var&)>& f, const Mat& x,
                             double h = 1e-6) {
  const Mat analytic = tape_gradient(f, x);
  const Mat numeric = numeric_gradient([&](const Mat& v) { return tape_value(f, v); }, x, h);
  return relative_error(analytic, numeric);
}

/// A model small enough for exhaustive checks.
inline ModelConfig tiny_model() {
  ModelConfig m;
  m.raw_dim = 8;
  m.dim = 8;
  m.snippets = 8;
  m.backbone_blocks = 1;
  m.ff_hidden = 16;
  m.adapter_width = 4;
  m.text_blocks = 1;
  m.num_queries = 4;
  m.decoder_layers = 2;
  m.localizer_channels = 4;
  return m;
}

inline SynthConfig tiny_data() {
  SynthConfig s;
  s.raw_dim = 8;
  s.videos_per_class = 5;
  s.min_length = 12;
  s.max_length = 24;
  return s;
}

inline Mat random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  return rng.normal_matrix(rows, cols, scale);
}

}  // namespace mmfs::testing
