// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

namespace mmfs {

/// Deployment modes: visual-only support, both modalities, text-only.
enum class Mode { kFS, kMMFS, kZS };

enum class BackboneMode { kFrozen, kAdapters, kFullTune };
enum class AdapterPlacement { kSequential, kParallel };
enum class TokenizerKind { kSetAttention, kConv1d };
enum class PromptSharing { kClassSpecific, kClassGeneric };
/// Where the prompt's context tokens come from: the support videos via the
/// semantics tokenizer, or free learned vectors shared by all classes.
enum class ContextSource { kVisual, kLearned };
enum class LocalizerInput { kRegulated, kUnregulated };

struct ModelConfig {
  int raw_dim = 64;
  int dim = 64;
  /// L: every video is rescaled to this many snippets.
  int snippets = 100;
  int backbone_blocks = 2;
  int ff_hidden = 128;
  int adapter_width = 16;
  BackboneMode backbone_mode = BackboneMode::kAdapters;
  AdapterPlacement adapter_placement = AdapterPlacement::kSequential;

  int text_blocks = 2;
  int max_tokens = 77;

  TokenizerKind tokenizer = TokenizerKind::kSetAttention;
  int tokens_per_class = 1;
  PromptSharing prompt_sharing = PromptSharing::kClassSpecific;
  ContextSource context_source = ContextSource::kVisual;
  /// Learned generic tokens standing in for the class name in FS mode.
  int placeholder_tokens = 2;

  int num_queries = 8;
  int decoder_layers = 2;
  double bin_threshold = 0.5;
  /// Support-conditioned query regulation on/off.
  bool query_masking = true;

  double temperature = 0.7;
  int localizer_channels = 16;
  LocalizerInput localizer_input = LocalizerInput::kRegulated;

  /// Target cosine between the background prototype and each class prompt.
  double background_margin = 0.1;
};

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

}  // namespace mmfs
