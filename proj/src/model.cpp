// SPDX-License-Identifier: Apache-2.0

#include "mmfs/model.hpp"

#include "mmfs/errors.hpp"

namespace mmfs {

void validate(const ModelConfig& c) {
  auto need = [](bool ok, const char* field, const char* what) {
    if (!ok) throw ConfigError(std::string("model.") + field + ": " + what);
  };
  need(c.raw_dim >= 1, "raw_dim", "must be at least 1");
  need(c.dim >= 2, "dim", "must be at least 2");
  need(c.snippets >= 2, "snippets", "must be at least 2");
  need(c.backbone_blocks >= 0, "backbone_blocks", "must be non-negative");
  need(c.ff_hidden >= 1, "ff_hidden", "must be at least 1");
  need(c.adapter_width >= 1, "adapter_width", "must be at least 1");
  need(c.text_blocks >= 0, "text_blocks", "must be non-negative");
  need(c.max_tokens >= 2, "max_tokens", "must be at least 2");
  need(c.tokens_per_class >= 1, "tokens_per_class", "must be at least 1");
  need(c.placeholder_tokens >= 1, "placeholder_tokens", "must be at least 1");
  need(c.tokens_per_class + c.placeholder_tokens < c.max_tokens, "tokens_per_class",
       "context plus placeholders must leave room for end-of-text");
  need(c.num_queries >= 1, "num_queries", "must be at least 1");
  need(c.decoder_layers >= 1, "decoder_layers", "must be at least 1");
  need(c.bin_threshold > 0.0 && c.bin_threshold < 1.0, "bin_threshold", "must lie in (0, 1)");
  need(c.temperature > 0.0, "temperature", "must be positive");
  need(c.localizer_channels >= 1, "localizer_channels", "must be at least 1");
  need(c.background_margin > -1.0 && c.background_margin < 1.0, "background_margin",
       "must lie in (-1, 1)");
}

namespace {
const ModelConfig& validated(const ModelConfig& c) {
  validate(c);
  return c;
}
}  // namespace

// Construction order fixes the parameter order and the RNG stream; changing
// it changes every initial weight.
MmfsModel::MmfsModel(const ModelConfig& cfg, uint64_t seed) : cfg_(validated(cfg)) {
  Rng rng(seed, 0x3d3du);
  backbone_ = VideoBackbone(store_, cfg_, rng);
  temporal_ = TemporalEncoder(store_, cfg_, rng);
  text_ = TextEncoder(store_, cfg_, rng);
  prompt_ = PromptLearner(store_, cfg_, rng);
  regulator_ = QueryRegulator(store_, cfg_, rng);
  localizer_ = MaskLocalizer(store_, cfg_, rng);
}

Var MmfsModel::encode(Tape& tape, const VideoRecord& video) const {
  return encode_video(tape, video, backbone_, temporal_, cfg_.snippets);
}

std::vector<SupportFeatures> MmfsModel::encode_support(Tape& tape, const Episode& episode) const {
  if (episode.shots() < 1) throw DataError("episode has no support shots");
  std::vector<SupportFeatures> out;
  for (int c = 0; c < episode.way(); ++c) {
    const auto& shots = episode.support[static_cast<size_t>(c)];
    std::vector<Var> encoded;
    for (const auto* v : shots) encoded.push_back(encode(tape, *v));
    out.push_back(mask_support(encoded, shots, episode.class_ids[static_cast<size_t>(c)], false));
  }
  return out;
}

QueryOutputs MmfsModel::detect(Tape& tape, const Var& query, const std::vector<Var>& shots,
                               const Var& prototypes) const {
  QueryOutputs q;
  q.features = query;
  q.regulation = regulator_(tape, query, shots);
  q.probs = classify_snippets(q.regulation.regulated, prototypes, cfg_.temperature);
  q.masks = localizer_(tape, cfg_.localizer_input == LocalizerInput::kRegulated ? q.regulation.regulated
                                                                                 : query);
  return q;
}

EpisodeOutputs MmfsModel::forward(Tape& tape, const Episode& episode, Mode mode,
                                  const std::vector<const VideoRecord*>& queries) const {
  EpisodeOutputs out;
  out.mode = mode;
  if (mode != Mode::kZS) out.support = encode_support(tape, episode);
  out.prompts = prompt_(tape, mode, episode.class_names, out.support, text_);

  std::vector<Var> shots;
  for (const auto& s : out.support) shots.insert(shots.end(), s.features.begin(), s.features.end());
  for (const auto* v : queries) {
    QueryOutputs q = detect(tape, encode(tape, *v), shots, out.prompts.prototypes);
    q.video = v;
    out.queries.push_back(std::move(q));
  }
  return out;
}

}  // namespace mmfs
