// SPDX-License-Identifier: Apache-2.0
//
// Multimodal prompts: support videos are pooled into context tokens that live
// in the text encoder's token space, prepended to the class-name tokens and
// encoded by the frozen text tower into one prototype per class. A learned
// background row completes the (C+1) × D classifier matrix E_mm.

#pragma once

#include <string>
#include <vector>

#include "mmfs/encoders.hpp"

namespace mmfs {

/// Permutation-invariant pooling of masked support snippets into
/// `tokens_per_class` token embeddings.
class SemanticsTokenizer {
 public:
  SemanticsTokenizer() = default;
  SemanticsTokenizer(ParameterStore& store, const ModelConfig& cfg, Rng& rng);

  /// Pools the foreground snippets (mask == 1) of every shot. K ≥ 1.
  Var operator()(Tape& tape, const SupportFeatures& support) const;
  /// Pools an explicit set of snippet rows (n × D, n ≥ 1).
  Var pool_set(Tape& tape, const Var& set) const;

  int tokens_per_class() const { return tokens_; }
  TokenizerKind kind() const { return kind_; }

 private:
  TokenizerKind kind_ = TokenizerKind::kSetAttention;
  int tokens_ = 1;
  // set attention
  TransformerBlock set_block_;
  TransformerBlock pool_block_;
  Parameter* seeds_ = nullptr;
  Linear to_token_space_;
  // 1-D CNN
  std::vector<Linear> taps_;
  std::vector<Linear> token_heads_;
};

/// Foreground snippet rows of all shots stacked into one set.
Var gather_foreground(const SupportFeatures& support);

/// p̂ = [context][class tokens]. Throws PromptTooLong when the prompt plus the
/// end-of-text token exceeds `max_tokens`.
Var assemble_prompt(const Var& context, const Var& class_tokens, int max_tokens);

/// Encodes each prompt with the text tower; rows are L2-normalized.
Var encode_prompts(Tape& tape, const std::vector<Var>& prompts, const TextEncoder& text);

/// E_mm = [class rows; normalize(background)], (C+1) × D.
Var build_prototypes(const Var& class_rows, const Var& background);

struct PromptOutputs {
  Var class_rows;   // ẑ_c, C × D, unit rows
  Var background;   // normalized ẑ_bg, 1 × D
  Var prototypes;   // E_mm
  Var text_only;    // z_c, C × D, unit rows (empty in FS mode)
  Var video_embed;  // z̄_c, C × D, unit rows (empty in ZS mode)
  std::vector<Var> contexts;  // ŵ_c per class (empty in ZS mode)
};

/// Owns the tokenizer, learned prompt vectors, background row and the
/// support-video embedding used by the token contrastive loss.
class PromptLearner {
 public:
  PromptLearner() = default;
  PromptLearner(ParameterStore& store, const ModelConfig& cfg, Rng& rng);

  /// `support` holds one entry per class; ignored in ZS mode.
  PromptOutputs operator()(Tape& tape, Mode mode, const std::vector<std::string>& class_names,
                           const std::vector<SupportFeatures>& support,
                           const TextEncoder& text) const;

  /// z̄_c: mean foreground snippet of all shots, projected and normalized.
  Var video_embedding(Tape& tape, const SupportFeatures& support) const;

  const SemanticsTokenizer& tokenizer() const { return tokenizer_; }

 private:
  ModelConfig cfg_;
  SemanticsTokenizer tokenizer_;
  Parameter* placeholders_ = nullptr;
  Parameter* learned_context_ = nullptr;
  Parameter* background_ = nullptr;
  Linear video_proj_;
};

}  // namespace mmfs
