// SPDX-License-Identifier: Apache-2.0
//
// Loss terms. Each is a pure function returning its value and, on request,
// its analytic gradient; the Var overloads record the same computation as a
// single tape node.

#pragma once

#include <vector>

#include "mmfs/autodiff.hpp"
#include "mmfs/random.hpp"

namespace mmfs {

inline constexpr double kDiceEpsilon = 1e-6;

/// Mean cross-entropy of the columns of P ((C+1) × L) against labels in [0, C].
double classification_loss(const Mat& probs, const std::vector<int>& labels, Mat* grad = nullptr);

/// Dice loss 1 − (2Σpg + ε)/(Σp + Σg + ε) per column, averaged over `columns`.
double dice_loss(const Mat& masks, const Mat& target, const std::vector<Index>& columns,
                 double eps = kDiceEpsilon, Mat* grad = nullptr);

/// Binary cross-entropy averaged over every entry of the listed columns.
double mask_bce(const Mat& masks, const Mat& target, const std::vector<Index>& columns,
                Mat* grad = nullptr);

/// Binary cross-entropy averaged over all entries.
double bce(const Mat& probs, const Mat& target, Mat* grad = nullptr);

struct TokenLossGrads {
  Mat prompt;  // d/d ẑ
  Mat text;    // d/d z
  Mat video;   // d/d z̄
};

/// Mean over classes of −log(e^{cos(z̄,ẑ)} / (e^{cos(z̄,ẑ)} + 2 e^{cos(z,ẑ)})).
/// Rows need not be normalized; a zero row throws DataError.
double token_contrastive_loss(const Mat& prompt, const Mat& text, const Mat& video,
                              TokenLossGrads* grads = nullptr);

/// Σ_j (cos(z_bg, ẑ_j) − δ)².
double background_loss(const Mat& background, const Mat& prompts, double margin,
                       Mat* grad_background = nullptr, Mat* grad_prompts = nullptr);

/// Target columns for the mask losses: column t is the indicator of the
/// segment containing snippet t, or all zeros for background snippets.
Mat mask_targets(const std::vector<int>& labels, int background_label);

/// Every foreground column plus as many background columns, sampled without
/// replacement (all of them if there are fewer). Sorted ascending.
std::vector<Index> supervised_columns(const std::vector<int>& labels, int background_label, Rng& rng);

/// Cosine similarity and its gradients with respect to both arguments.
double cosine(const Eigen::RowVectorXd& u, const Eigen::RowVectorXd& v,
              Eigen::RowVectorXd* du = nullptr, Eigen::RowVectorXd* dv = nullptr);

namespace ad {
Var classification_loss(const Var& probs, const std::vector<int>& labels);
Var dice_loss(const Var& masks, const Mat& target, const std::vector<Index>& columns);
Var mask_bce(const Var& masks, const Mat& target, const std::vector<Index>& columns);
Var bce(const Var& probs, const Mat& target);
Var token_contrastive_loss(const Var& prompt, const Var& text, const Var& video);
Var background_loss(const Var& background, const Var& prompts, double margin);
}  // namespace ad

}  // namespace mmfs
