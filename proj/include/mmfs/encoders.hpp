// SPDX-License-Identifier: Apache-2.0
//
// Video backbone with residual adapters, the temporal self-attention
// embedding and the frozen text encoder.

#pragma once

#include <vector>

#include "mmfs/data.hpp"
#include "mmfs/model_config.hpp"
#include "mmfs/nn.hpp"
#include "mmfs/text.hpp"

namespace mmfs {

/// Parameter groups. Training policies and meta-learn flags refer to these.
namespace group {
inline constexpr const char* kBackbone = "backbone";    // θ
inline constexpr const char* kAdapters = "adapters";    // φ
inline constexpr const char* kTemporal = "temporal";
inline constexpr const char* kText = "text";
inline constexpr const char* kTokenizer = "tokenizer";
inline constexpr const char* kPrompt = "prompt";
inline constexpr const char* kBackground = "background";
inline constexpr const char* kVideoEmbed = "video_embed";
inline constexpr const char* kDecoder = "decoder";
inline constexpr const char* kRegulator = "regulator";
inline constexpr const char* kHead = "head";
}  // namespace group

/// Residual bottleneck: x + up(gelu(down(x))). `up` starts at zero.
struct AdapterUnit {
  Linear down;
  Linear up;

  static AdapterUnit create(ParameterStore& store, const std::string& name, Index dim, Index width,
                            Rng& rng);
  Var operator()(Tape& tape, const Var& x) const;
  /// The residual branch alone.
  Var branch(Tape& tape, const Var& x) const;
};

class VideoBackbone {
 public:
  VideoBackbone() = default;
  VideoBackbone(ParameterStore& store, const ModelConfig& cfg, Rng& rng);

  /// T × D_raw → T × D.
  Var operator()(Tape& tape, const Var& raw) const;

  BackboneMode mode() const { return mode_; }
  void set_mode(BackboneMode m) { mode_ = m; }

 private:
  Linear input_;
  std::vector<TransformerBlock> blocks_;
  std::vector<AdapterUnit> adapters_;
  BackboneMode mode_ = BackboneMode::kAdapters;
  AdapterPlacement placement_ = AdapterPlacement::kSequential;
};

/// One self-attention block over the L snippets; query = key = value.
class TemporalEncoder {
 public:
  TemporalEncoder() = default;
  TemporalEncoder(ParameterStore& store, const ModelConfig& cfg, Rng& rng);

  Var operator()(Tape& tape, const Var& features) const;

 private:
  TransformerBlock block_;
};

/// Linear interpolation onto `target_length` rows, recorded on the tape.
Var rescale_on_tape(const Var& x, Index target_length);

/// E = temporal(rescale(backbone(video))), an L × D matrix.
Var encode_video(Tape& tape, const VideoRecord& video, const VideoBackbone& backbone,
                 const TemporalEncoder& temporal, Index snippets);

struct SupportFeatures {
  std::vector<Var> features;  // E_s, K × (L × D)
  std::vector<Var> masked;    // Ê_s, columns outside the class's segments zeroed
  std::vector<Eigen::VectorXd> masks;  // ground-truth masks on the L timeline
};

/// Encodes the K support shots of one class. Throws EmptySupportMask when a
/// shot has no ground truth for `class_id`, unless `allow_fallback`, in which
/// case that shot stays unmasked and a warning is logged.
SupportFeatures encode_support(Tape& tape, const std::vector<const VideoRecord*>& shots,
                               int class_id, const VideoBackbone& backbone,
                               const TemporalEncoder& temporal, Index snippets,
                               bool allow_fallback);

/// Masks precomputed shot encodings with their ground truth.
SupportFeatures mask_support(const std::vector<Var>& encoded,
                             const std::vector<const VideoRecord*>& shots, int class_id,
                             bool allow_fallback);

/// Frozen text tower: token table ψ and a bidirectional transformer whose
/// end-of-text output, projected, is the sequence embedding.
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(ParameterStore& store, const ModelConfig& cfg, Rng& rng);

  const Vocabulary& vocabulary() const { return *vocab_; }
  int max_tokens() const { return max_tokens_; }

  /// T_c = ψ(name): one D-dim row per token.
  Var embed_class_name(Tape& tape, const std::string& name) const;
  Var embed_tokens(Tape& tape, const std::vector<int>& ids) const;

  /// Encodes an assembled prompt (without end-of-text) into a 1 × D row.
  /// Throws PromptTooLong when the prompt plus end-of-text exceeds max_tokens.
  Var encode(Tape& tape, const Var& prompt) const;

 private:
  const Vocabulary* vocab_ = nullptr;
  Parameter* table_ = nullptr;
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_norm_;
  Linear projection_;
  int max_tokens_ = 77;
};

}  // namespace mmfs
