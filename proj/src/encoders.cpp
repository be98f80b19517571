// SPDX-License-Identifier: Apache-2.0

#include "mmfs/encoders.hpp"

#include <spdlog/spdlog.h>

#include "mmfs/errors.hpp"

namespace mmfs {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::kFS:
      return "FS";
    case Mode::kMMFS:
      return "MMFS";
    case Mode::kZS:
      return "ZS";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "FS" || s == "fs") return Mode::kFS;
  if (s == "MMFS" || s == "mmfs") return Mode::kMMFS;
  if (s == "ZS" || s == "zs") return Mode::kZS;
  throw UsageError("unknown mode '" + s + "' (expected FS, MMFS or ZS)");
}

namespace {

// The backbone and text tower stand in for a pretrained vision-language pair
// whose embedding spaces are already aligned. Their initial weights are set
// so that both map the shared lexicon space close to itself.
constexpr double kPretrainedBranchGain = 0.1;

void set_identity(const Linear& l) {
  l.weight->value.setIdentity();
  l.bias->value.setZero();
}

}  // namespace

AdapterUnit AdapterUnit::create(ParameterStore& store, const std::string& name, Index dim,
                                Index width, Rng& rng) {
  AdapterUnit a;
  a.down = Linear::create(store, name + ".down", group::kAdapters, dim, width, rng);
  a.up = Linear::create(store, name + ".up", group::kAdapters, width, dim, rng, 0.0);
  return a;
}

Var AdapterUnit::branch(Tape& tape, const Var& x) const {
  return up(tape, ad::gelu(down(tape, x)));
}

Var AdapterUnit::operator()(Tape& tape, const Var& x) const { return ad::add(x, branch(tape, x)); }

VideoBackbone::VideoBackbone(ParameterStore& store, const ModelConfig& cfg, Rng& rng)
    : mode_(cfg.backbone_mode), placement_(cfg.adapter_placement) {
  input_ = Linear::create(store, "backbone.input", group::kBackbone, cfg.raw_dim, cfg.dim, rng);
  if (cfg.raw_dim == cfg.dim) set_identity(input_);
  for (int b = 0; b < cfg.backbone_blocks; ++b) {
    const std::string n = "backbone.block" + std::to_string(b);
    blocks_.push_back(TransformerBlock::create(store, n, group::kBackbone, cfg.dim, cfg.ff_hidden, rng));
    blocks_.back().attn.out.weight->value *= kPretrainedBranchGain;
    blocks_.back().ff.fc2.weight->value *= kPretrainedBranchGain;
    adapters_.push_back(
        AdapterUnit::create(store, "adapter" + std::to_string(b), cfg.dim, cfg.adapter_width, rng));
  }
}

Var VideoBackbone::operator()(Tape& tape, const Var& raw) const {
  if (raw.cols() != input_.in()) {
    throw ShapeError("backbone expects " + std::to_string(input_.in()) + "-dim features, got " +
                     std::to_string(raw.cols()));
  }
  Var x = input_(tape, raw);
  for (size_t b = 0; b < blocks_.size(); ++b) {
    const Var y = blocks_[b].self_attend(tape, x);
    if (mode_ == BackboneMode::kFrozen) {
      x = y;
    } else if (placement_ == AdapterPlacement::kSequential) {
      x = adapters_[b](tape, y);
    } else {
      x = ad::add(y, adapters_[b].branch(tape, x));
    }
  }
  return x;
}

TemporalEncoder::TemporalEncoder(ParameterStore& store, const ModelConfig& cfg, Rng& rng)
    : block_(TransformerBlock::create(store, "temporal", group::kTemporal, cfg.dim, cfg.ff_hidden, rng)) {}

Var TemporalEncoder::operator()(Tape& tape, const Var& features) const {
  return block_.self_attend(tape, features);
}

Var rescale_on_tape(const Var& x, Index target_length) {
  if (x.rows() == target_length) return x;
  const InterpolationPlan plan = interpolation_plan(x.rows(), target_length);
  const Var lo = ad::gather_rows(x, plan.lower);
  const Var hi = ad::gather_rows(x, plan.upper);
  const Var w = x.tape()->constant(plan.weight);
  return ad::add(lo, ad::mul_col(ad::sub(hi, lo), w));
}

Var encode_video(Tape& tape, const VideoRecord& video, const VideoBackbone& backbone,
                 const TemporalEncoder& temporal, Index snippets) {
  if (!video.features.allFinite()) {
    throw DataError("video '" + video.video_id + "' has non-finite features");
  }
  const Var raw = tape.constant(video.features.cast<double>());
  const Var f = backbone(tape, raw);
  return temporal(tape, rescale_on_tape(f, snippets));
}

SupportFeatures mask_support(const std::vector<Var>& encoded,
                             const std::vector<const VideoRecord*>& shots, int class_id,
                             bool allow_fallback) {
  SupportFeatures out;
  for (size_t k = 0; k < shots.size(); ++k) {
    const Var& e = encoded[k];
    const auto anns = rescale_annotations(shots[k]->annotations, shots[k]->length(), e.rows());
    Eigen::VectorXd mask = gt_to_mask(anns, class_id, e.rows());
    if (mask.sum() == 0.0) {
      const std::string msg = "support video '" + shots[k]->video_id +
                              "' has no ground truth for class " + std::to_string(class_id);
      if (!allow_fallback) throw EmptySupportMask(msg);
      spdlog::warn("{}; using the unmasked features", msg);
      mask.setOnes();
    }
    out.features.push_back(e);
    out.masked.push_back(ad::mul_col(e, e.tape()->constant(mask)));
    out.masks.push_back(std::move(mask));
  }
  return out;
}

SupportFeatures encode_support(Tape& tape, const std::vector<const VideoRecord*>& shots,
                               int class_id, const VideoBackbone& backbone,
                               const TemporalEncoder& temporal, Index snippets,
                               bool allow_fallback) {
  std::vector<Var> encoded;
  for (const auto* v : shots) encoded.push_back(encode_video(tape, *v, backbone, temporal, snippets));
  return mask_support(encoded, shots, class_id, allow_fallback);
}

TextEncoder::TextEncoder(ParameterStore& store, const ModelConfig& cfg, Rng& rng)
    : vocab_(&Vocabulary::builtin()), max_tokens_(cfg.max_tokens) {
  // Token table seeded from the shared lexicon: the stand-in for a pretrained
  // vision-language vocabulary.
  Mat table(vocab_->size(), cfg.dim);
  const double s = std::sqrt(static_cast<double>(cfg.dim));
  for (int i = 0; i < vocab_->size(); ++i) table.row(i) = s * lexicon_vector(vocab_->token(i), cfg.dim);
  table.row(vocab_->end_of_text()).setZero();
  table_ = &store.add("text.token_table", group::kText, std::move(table));
  // Uniform attention with identity values: every block adds the mean token
  // content to each position, so the end-of-text readout summarizes the prompt.
  for (int b = 0; b < cfg.text_blocks; ++b) {
    auto block = TransformerBlock::create(store, "text.block" + std::to_string(b), group::kText,
                                          cfg.dim, cfg.ff_hidden, rng);
    block.attn.query.weight->value.setZero();
    block.attn.key.weight->value.setZero();
    set_identity(block.attn.value);
    set_identity(block.attn.out);
    block.ff.fc2.weight->value *= kPretrainedBranchGain;
    blocks_.push_back(block);
  }
  final_norm_ = LayerNorm::create(store, "text.final_norm", group::kText, cfg.dim);
  projection_ = Linear::create(store, "text.projection", group::kText, cfg.dim, cfg.dim, rng);
  set_identity(projection_);
}

Var TextEncoder::embed_tokens(Tape& tape, const std::vector<int>& ids) const {
  std::vector<Index> rows(ids.begin(), ids.end());
  return ad::gather_rows(tape.param(*table_), rows);
}

Var TextEncoder::embed_class_name(Tape& tape, const std::string& name) const {
  if (name.empty()) throw DataError("empty class name");
  return embed_tokens(tape, vocab_->encode(name));
}

Var TextEncoder::encode(Tape& tape, const Var& prompt) const {
  const Index n = prompt.rows() + 1;
  if (n > max_tokens_) {
    throw PromptTooLong("prompt has " + std::to_string(n) + " tokens including end-of-text; limit is " +
                        std::to_string(max_tokens_));
  }
  Var x = ad::concat_rows({prompt, embed_tokens(tape, {vocab_->end_of_text()})});
  for (const auto& b : blocks_) x = b.self_attend(tape, x);
  const Var eot = ad::slice_rows(x, n - 1, 1);
  return projection_(tape, final_norm_(tape, eot));
}

}  // namespace mmfs
