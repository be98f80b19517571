// SPDX-License-Identifier: Apache-2.0

#include "mmfs/head.hpp"

#include "mmfs/errors.hpp"

namespace mmfs {

Var classify_snippets(const Var& features, const Var& prototypes, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("model.temperature must be positive");
  if (features.cols() != prototypes.cols()) {
    throw ShapeError("snippet features are " + std::to_string(features.cols()) +
                     "-dim but prototypes are " + std::to_string(prototypes.cols()) + "-dim");
  }
  const Var q = ad::l2_normalize_rows(features);
  // Softmax runs over classes: compute it row-wise on the L × (C+1) logits.
  const Var logits = ad::scale(ad::matmul_nt(q, prototypes), 1.0 / temperature);
  return ad::transpose(ad::softmax_rows(logits));
}

MaskLocalizer::MaskLocalizer(ParameterStore& store, const ModelConfig& cfg, Rng& rng)
    : channels_(cfg.localizer_channels) {
  if (channels_ < 1) throw ConfigError("model.localizer_channels must be at least 1");
  const std::string g = group::kHead;
  norm_ = LayerNorm::create(store, "head.norm", g, cfg.dim);
  project_ = Linear::create(store, "head.project", g, cfg.dim, channels_, rng);
  kernel1_ = Linear::create(store, "head.kernel1", g, cfg.dim, 3 * channels_ + 1, rng,
                            1.0 / std::sqrt(3.0 * static_cast<double>(channels_)));
  kernel2_ = Linear::create(store, "head.kernel2", g, cfg.dim, 4, rng, 0.5);
}

Var MaskLocalizer::operator()(Tape& tape, const Var& features) const {
  const Var x = norm_(tape, features);
  const Var g = project_(tape, x);        // L × ch
  const Var k1 = kernel1_(tape, x);       // L × (3ch + 1)
  const Var k2 = kernel2_(tape, x);       // L × 4

  // Layer 1: h[t, s] = Σ_j k1_t[j] · g[s + j − 1] + b1_t, one row per kernel owner t.
  std::vector<Var> taps;
  for (Index j = 0; j < 3; ++j) {
    taps.push_back(ad::matmul_nt(ad::slice_cols(k1, j * channels_, channels_), ad::shift_rows(g, j - 1)));
  }
  const Var h = ad::gelu(ad::add_col(ad::add_n(taps), ad::slice_cols(k1, 3 * channels_, 1)));

  // Layer 2: depth-1 kernel of owner t slid along its own row of h.
  std::vector<Var> taps2;
  for (Index j = 0; j < 3; ++j) {
    taps2.push_back(ad::mul_col(ad::shift_cols(h, j - 1), ad::slice_cols(k2, j, 1)));
  }
  const Var logits = ad::add_col(ad::add_n(taps2), ad::slice_cols(k2, 3, 1));
  return ad::sigmoid(ad::transpose(logits));
}

}  // namespace mmfs
