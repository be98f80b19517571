// SPDX-License-Identifier: Apache-2.0
//
// Detection head: a cosine classifier against the prompt prototypes and a
// per-snippet mask localizer built from predicted (dynamic) 1-D kernels.

#pragma once

#include "mmfs/encoders.hpp"

namespace mmfs {

/// P = softmax over classes of (E_mm · normalize(Ē_q)ᵀ) / τ, a (C+1) × L
/// matrix whose columns sum to one. Rows of `prototypes` are expected to be
/// unit-norm; `features` is normalized here. Throws ConfigError if τ ≤ 0.
Var classify_snippets(const Var& features, const Var& prototypes, double temperature);

/// Two stacked dynamic-convolution layers. Snippet t predicts a width-3 kernel
/// and bias for each layer from its own feature and applies them across the
/// whole timeline; column t of the sigmoid output is the mask m_t.
class MaskLocalizer {
 public:
  MaskLocalizer() = default;
  MaskLocalizer(ParameterStore& store, const ModelConfig& cfg, Rng& rng);

  /// L × D → L × L in (0, 1).
  Var operator()(Tape& tape, const Var& features) const;

  /// The final-layer kernel generator (zeroing it makes every mask 0.5).
  const Linear& final_generator() const { return kernel2_; }

 private:
  Index channels_ = 16;
  LayerNorm norm_;
  Linear project_;   // D → channels
  Linear kernel1_;   // D → 3·channels + 1
  Linear kernel2_;   // D → 3 + 1
};

}  // namespace mmfs
