// SPDX-License-Identifier: Apache-2.0
//
// The full detector: every module, its parameters, and the episode forward
// pass in FS, MMFS and ZS modes.

#pragma once

#include <cstdint>
#include <vector>

#include "mmfs/encoders.hpp"
#include "mmfs/episode.hpp"
#include "mmfs/head.hpp"
#include "mmfs/prompt.hpp"
#include "mmfs/regulation.hpp"

namespace mmfs {

struct QueryOutputs {
  const VideoRecord* video = nullptr;
  Var features;                 // E_q
  RegulationResult regulation;  // Ē_q and support masks
  Var probs;                    // P, (C+1) × L
  Var masks;                    // M, L × L
};

struct EpisodeOutputs {
  Mode mode = Mode::kMMFS;
  std::vector<SupportFeatures> support;  // one per class; empty in ZS mode
  PromptOutputs prompts;
  std::vector<QueryOutputs> queries;
};

class MmfsModel {
 public:
  MmfsModel(const ModelConfig& cfg, uint64_t seed);
  MmfsModel(const MmfsModel&) = delete;
  MmfsModel& operator=(const MmfsModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }

  /// E = temporal(rescale(backbone(video))), L × D.
  Var encode(Tape& tape, const VideoRecord& video) const;

  /// Masked support features of every episode class.
  std::vector<SupportFeatures> encode_support(Tape& tape, const Episode& episode) const;

  /// Prompts for the episode classes, then detection on `queries`. ZS mode
  /// skips the support set entirely; FS mode never touches class names.
  EpisodeOutputs forward(Tape& tape, const Episode& episode, Mode mode,
                         const std::vector<const VideoRecord*>& queries) const;

  /// Regulation and both heads for one encoded query.
  QueryOutputs detect(Tape& tape, const Var& query, const std::vector<Var>& shots,
                      const Var& prototypes) const;

  const VideoBackbone& backbone() const { return backbone_; }
  const TemporalEncoder& temporal() const { return temporal_; }
  const TextEncoder& text() const { return text_; }
  const PromptLearner& prompts() const { return prompt_; }
  const QueryRegulator& regulator() const { return regulator_; }
  const MaskLocalizer& localizer() const { return localizer_; }

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  VideoBackbone backbone_;
  TemporalEncoder temporal_;
  TextEncoder text_;
  PromptLearner prompt_;
  QueryRegulator regulator_;
  MaskLocalizer localizer_;
};

/// Throws ConfigError naming the first invalid field.
void validate(const ModelConfig& cfg);

}  // namespace mmfs
