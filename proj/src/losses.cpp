// SPDX-License-Identifier: Apache-2.0

#include "mmfs/losses.hpp"

#include <algorithm>
#include <cmath>

#include "mmfs/errors.hpp"

namespace mmfs {
namespace {

constexpr double kProbFloor = 1e-12;

void check_columns(const Mat& a, const Mat& b, const std::vector<Index>& columns) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("mask and target shapes differ");
  for (Index c : columns) {
    if (c < 0 || c >= a.cols()) throw ShapeError("supervised column out of range");
  }
}

}  // namespace

double classification_loss(const Mat& probs, const std::vector<int>& labels, Mat* grad) {
  if (static_cast<Index>(labels.size()) != probs.cols()) {
    throw ShapeError("classification loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(probs.cols()) + " snippets");
  }
  if (labels.empty()) throw ShapeError("classification loss over zero snippets");
  const double n = static_cast<double>(labels.size());
  if (grad) grad->setZero(probs.rows(), probs.cols());
  double total = 0.0;
  for (Index t = 0; t < probs.cols(); ++t) {
    const int y = labels[static_cast<size_t>(t)];
    if (y < 0 || y >= probs.rows()) {
      throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(probs.rows() - 1) + "]");
    }
    const double p = std::max(probs(y, t), kProbFloor);
    total -= std::log(p);
    if (grad) (*grad)(y, t) = -1.0 / (p * n);
  }
  return total / n;
}

double dice_loss(const Mat& masks, const Mat& target, const std::vector<Index>& columns, double eps,
                 Mat* grad) {
  check_columns(masks, target, columns);
  if (grad) grad->setZero(masks.rows(), masks.cols());
  if (columns.empty()) return 0.0;
  const double n = static_cast<double>(columns.size());
  double total = 0.0;
  for (Index c : columns) {
    const double inter = masks.col(c).dot(target.col(c));
    const double denom = masks.col(c).sum() + target.col(c).sum() + eps;
    const double num = 2.0 * inter + eps;
    total += 1.0 - num / denom;
    if (grad) {
      // d/dp_i of −num/denom = −(2 g_i · denom − num) / denom²
      grad->col(c) = -(2.0 * target.col(c).array() * denom - num) / (denom * denom * n);
    }
  }
  return total / n;
}

double mask_bce(const Mat& masks, const Mat& target, const std::vector<Index>& columns, Mat* grad) {
  check_columns(masks, target, columns);
  if (grad) grad->setZero(masks.rows(), masks.cols());
  if (columns.empty()) return 0.0;
  const double n = static_cast<double>(columns.size()) * static_cast<double>(masks.rows());
  double total = 0.0;
  for (Index c : columns) {
    for (Index r = 0; r < masks.rows(); ++r) {
      const double p = std::clamp(masks(r, c), kProbFloor, 1.0 - kProbFloor);
      const double g = target(r, c);
      total -= g * std::log(p) + (1.0 - g) * std::log(1.0 - p);
      if (grad) (*grad)(r, c) = (-g / p + (1.0 - g) / (1.0 - p)) / n;
    }
  }
  return total / n;
}

double bce(const Mat& probs, const Mat& target, Mat* grad) {
  std::vector<Index> all(static_cast<size_t>(probs.cols()));
  for (Index c = 0; c < probs.cols(); ++c) all[static_cast<size_t>(c)] = c;
  return mask_bce(probs, target, all, grad);
}

double cosine(const Eigen::RowVectorXd& u, const Eigen::RowVectorXd& v, Eigen::RowVectorXd* du,
              Eigen::RowVectorXd* dv) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw DataError("cosine similarity of a zero-norm embedding");
  const double c = u.dot(v) / (nu * nv);
  if (du) *du = v / (nu * nv) - c * u / (nu * nu);
  if (dv) *dv = u / (nu * nv) - c * v / (nv * nv);
  return c;
}

double token_contrastive_loss(const Mat& prompt, const Mat& text, const Mat& video,
                              TokenLossGrads* grads) {
  if (prompt.rows() != text.rows() || prompt.rows() != video.rows() || prompt.cols() != text.cols() ||
      prompt.cols() != video.cols()) {
    throw ShapeError("token contrastive loss: embedding shapes differ");
  }
  if (prompt.rows() == 0) throw ShapeError("token contrastive loss over zero classes");
  const double n = static_cast<double>(prompt.rows());
  if (grads) {
    grads->prompt.setZero(prompt.rows(), prompt.cols());
    grads->text.setZero(text.rows(), text.cols());
    grads->video.setZero(video.rows(), video.cols());
  }
  double total = 0.0;
  for (Index c = 0; c < prompt.rows(); ++c) {
    Eigen::RowVectorXd dv_a, dp_a, dt_b, dp_b;
    const double a = cosine(video.row(c), prompt.row(c), &dv_a, &dp_a);
    const double b = cosine(text.row(c), prompt.row(c), &dt_b, &dp_b);
    // −a + log(e^a + 2e^b), shifted by max for stability.
    const double m = std::max(a, b);
    const double ea = std::exp(a - m);
    const double eb = 2.0 * std::exp(b - m);
    const double s = ea + eb;
    total += -a + m + std::log(s);
    if (grads) {
      const double ga = (-1.0 + ea / s) / n;
      const double gb = (eb / s) / n;
      grads->video.row(c) = ga * dv_a;
      grads->text.row(c) = gb * dt_b;
      grads->prompt.row(c) = ga * dp_a + gb * dp_b;
    }
  }
  return total / n;
}

double background_loss(const Mat& background, const Mat& prompts, double margin, Mat* grad_background,
                       Mat* grad_prompts) {
  if (background.rows() != 1 || background.cols() != prompts.cols()) {
    throw ShapeError("background loss: background must be a single row matching the prompts");
  }
  if (!(margin > -1.0 && margin < 1.0)) throw ConfigError("model.background_margin must lie in (-1, 1)");
  if (grad_background) grad_background->setZero(1, background.cols());
  if (grad_prompts) grad_prompts->setZero(prompts.rows(), prompts.cols());
  double total = 0.0;
  for (Index j = 0; j < prompts.rows(); ++j) {
    Eigen::RowVectorXd db, dp;
    const double c = cosine(background.row(0), prompts.row(j), &db, &dp);
    const double d = c - margin;
    total += d * d;
    if (grad_background) *grad_background += 2.0 * d * db;
    if (grad_prompts) grad_prompts->row(j) = 2.0 * d * dp;
  }
  return total;
}

Mat mask_targets(const std::vector<int>& labels, int background_label) {
  const Index n = static_cast<Index>(labels.size());
  Mat out = Mat::Zero(n, n);
  Index s = 0;
  while (s < n) {
    Index e = s + 1;
    while (e < n && labels[static_cast<size_t>(e)] == labels[static_cast<size_t>(s)]) ++e;
    if (labels[static_cast<size_t>(s)] != background_label) out.block(s, s, e - s, e - s).setOnes();
    s = e;
  }
  return out;
}

std::vector<Index> supervised_columns(const std::vector<int>& labels, int background_label, Rng& rng) {
  std::vector<Index> fg, bg;
  for (size_t t = 0; t < labels.size(); ++t) {
    (labels[t] == background_label ? bg : fg).push_back(static_cast<Index>(t));
  }
  rng.shuffle(bg);
  if (bg.size() > fg.size()) bg.resize(fg.size());
  fg.insert(fg.end(), bg.begin(), bg.end());
  std::sort(fg.begin(), fg.end());
  return fg;
}

namespace ad {

Var classification_loss(const Var& probs, const std::vector<int>& labels) {
  Mat g;
  const double v = mmfs::classification_loss(probs.value(), labels, &g);
  return scalar_op(v, {probs}, {std::move(g)});
}

Var dice_loss(const Var& masks, const Mat& target, const std::vector<Index>& columns) {
  Mat g;
  const double v = mmfs::dice_loss(masks.value(), target, columns, kDiceEpsilon, &g);
  return scalar_op(v, {masks}, {std::move(g)});
}

Var mask_bce(const Var& masks, const Mat& target, const std::vector<Index>& columns) {
  Mat g;
  const double v = mmfs::mask_bce(masks.value(), target, columns, &g);
  return scalar_op(v, {masks}, {std::move(g)});
}

Var bce(const Var& probs, const Mat& target) {
  Mat g;
  const double v = mmfs::bce(probs.value(), target, &g);
  return scalar_op(v, {probs}, {std::move(g)});
}

Var token_contrastive_loss(const Var& prompt, const Var& text, const Var& video) {
  TokenLossGrads g;
  const double v = mmfs::token_contrastive_loss(prompt.value(), text.value(), video.value(), &g);
  return scalar_op(v, {prompt, text, video}, {std::move(g.prompt), std::move(g.text), std::move(g.video)});
}

Var background_loss(const Var& background, const Var& prompts, double margin) {
  Mat gb, gp;
  const double v = mmfs::background_loss(background.value(), prompts.value(), margin, &gb, &gp);
  return scalar_op(v, {background, prompts}, {std::move(gb), std::move(gp)});
}

}  // namespace ad
}  // namespace mmfs
