// SPDX-License-Identifier: Apache-2.0

#include "mmfs/training.hpp"

#include <chrono>
#include <cmath>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "mmfs/errors.hpp"
#include "mmfs/losses.hpp"

namespace mmfs {

void validate(const TrainConfig& c) {
  auto need = [](bool ok, const char* field, const char* what) {
    if (!ok) throw ConfigError(std::string("training.") + field + ": " + what);
  };
  need(c.base_lr >= 0.0 && std::isfinite(c.base_lr), "base_lr", "must be a finite non-negative number");
  need(c.meta_lr >= 0.0 && std::isfinite(c.meta_lr), "meta_lr", "must be a finite non-negative number");
  need(c.base_steps >= 0, "base_steps", "must be non-negative");
  need(c.meta_episodes >= 0, "meta_episodes", "must be non-negative");
  need(c.way >= 1, "way", "must be at least 1");
  need(c.shots >= 1, "shots", "must be at least 1");
  need(c.clip_norm > 0.0, "clip_norm", "must be positive");
  need(c.fs_rate >= 0.0 && c.zs_rate >= 0.0 && c.fs_rate + c.zs_rate <= 1.0, "fs_rate",
       "fs_rate and zs_rate must be non-negative and sum to at most 1");
}

std::string to_json_line(const LossReport& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["stage"] = r.stage;
  j["mode"] = to_string(r.mode);
  j["L_c"] = r.classification;
  j["L_m"] = r.dice;
  j["L_comp"] = r.mask;
  j["L_tok"] = r.token;
  j["L_bg"] = r.background;
  j["total"] = r.total;
  j["lr"] = r.lr;
  j["wall_time"] = r.seconds;
  return j.dump();
}

void Adam::step(ParameterStore& store) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& p : store.params()) {
    if (!p->trainable || p->grad.size() == 0) continue;
    auto& s = state_[p.get()];
    if (s.m.size() == 0) {
      s.m = Mat::Zero(p->value.rows(), p->value.cols());
      s.v = Mat::Zero(p->value.rows(), p->value.cols());
    }
    s.m = beta1_ * s.m + (1.0 - beta1_) * p->grad;
    s.v = beta2_ * s.v + (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
    p->value.array() -= lr_ * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps_);
  }
}

double clip_gradients(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& p : store.params()) {
    if (p->trainable && p->grad.size() != 0) sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& p : store.params()) {
      if (p->trainable && p->grad.size() != 0) p->grad *= s;
    }
  }
  return norm;
}

namespace {

void add_encoder_groups(const ModelConfig& cfg, std::vector<std::string>& g) {
  if (cfg.backbone_mode == BackboneMode::kAdapters) g.push_back(group::kAdapters);
  if (cfg.backbone_mode == BackboneMode::kFullTune) {
    g.push_back(group::kBackbone);
    g.push_back(group::kAdapters);
  }
}

Var mean_of(const std::vector<Var>& xs) {
  return ad::scale(ad::add_n(xs), 1.0 / static_cast<double>(xs.size()));
}

/// BCE of every shot's representation mask against that shot's ground truth.
void representation_mask_terms(const QueryOutputs& q, const std::vector<SupportFeatures>& support,
                               std::vector<Var>& terms) {
  size_t i = 0;
  for (const auto& s : support) {
    for (const auto& gt : s.masks) {
      if (i >= q.regulation.masks.size()) return;
      terms.push_back(ad::bce(q.regulation.masks[i].soft, gt.transpose()));
      ++i;
    }
  }
}

std::vector<int> labels_on_timeline(const VideoRecord& v, const std::vector<int>& classes, Index length) {
  return snippet_labels(rescale_annotations(v.annotations, v.length(), length), classes, length);
}

void check_finite(const LossReport& r) {
  const double terms[] = {r.classification, r.dice, r.mask, r.token, r.background, r.total};
  for (double t : terms) {
    if (!std::isfinite(t)) {
      throw NumericalError(r.stage + " training diverged at step " + std::to_string(r.step) + " (" +
                           to_string(r.mode) + "): L_c=" + std::to_string(r.classification) +
                           " L_m=" + std::to_string(r.dice) + " L_comp=" + std::to_string(r.mask) +
                           " L_tok=" + std::to_string(r.token) + " L_bg=" + std::to_string(r.background));
    }
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void optimize(MmfsModel& model, Tape& tape, const EpisodeLoss& loss, Adam& opt, double clip) {
  if (!loss.total.requires_grad()) return;
  tape.backward(loss.total);
  clip_gradients(model.store(), clip);
  opt.step(model.store());
}

}  // namespace

std::vector<std::string> base_trainable_groups(const ModelConfig& cfg) {
  std::vector<std::string> g;
  add_encoder_groups(cfg, g);
  for (const char* n : {group::kTemporal, group::kTokenizer, group::kPrompt, group::kBackground,
                        group::kVideoEmbed, group::kDecoder, group::kRegulator, group::kHead}) {
    g.push_back(n);
  }
  return g;
}

std::vector<std::string> meta_trainable_groups(const ModelConfig& cfg, const MetaLearnFlags& f) {
  std::vector<std::string> g;
  if (f.encoder) add_encoder_groups(cfg, g);
  if (f.temporal) g.push_back(group::kTemporal);
  if (f.tokenizer) g.push_back(group::kTokenizer);
  if (f.decoder) g.push_back(group::kDecoder);
  return g;
}

EpisodeLoss base_episode_loss(Tape& tape, const MmfsModel& model, const Episode& episode, Mode mode,
                              Rng& rng) {
  const Index length = model.config().snippets;
  const int bg = episode.way();
  const EpisodeOutputs out = model.forward(tape, episode, mode, episode.query);

  std::vector<Var> lc, lm, lcomp, rep;
  for (const auto& q : out.queries) {
    const auto labels = labels_on_timeline(*q.video, episode.class_ids, length);
    const Mat targets = mask_targets(labels, bg);
    const auto columns = supervised_columns(labels, bg, rng);
    lc.push_back(ad::classification_loss(q.probs, labels));
    lm.push_back(ad::dice_loss(q.masks, targets, columns));
    lcomp.push_back(ad::mask_bce(q.masks, targets, columns));
    representation_mask_terms(q, out.support, rep);
  }

  EpisodeLoss r;
  r.report.stage = "base";
  r.report.mode = mode;
  std::vector<Var> total;
  const Var l_c = mean_of(lc);
  const Var l_m = mean_of(lm);
  Var l_comp = mean_of(lcomp);
  if (!rep.empty()) l_comp = ad::add(l_comp, mean_of(rep));
  total = {l_c, l_m, l_comp};
  r.report.classification = l_c.scalar();
  r.report.dice = l_m.scalar();
  r.report.mask = l_comp.scalar();
  if (out.prompts.text_only.valid() && out.prompts.video_embed.valid()) {
    const Var l_tok =
        ad::token_contrastive_loss(out.prompts.class_rows, out.prompts.text_only, out.prompts.video_embed);
    r.report.token = l_tok.scalar();
    total.push_back(l_tok);
  }
  const Var l_bg =
      ad::background_loss(out.prompts.background, out.prompts.class_rows, model.config().background_margin);
  r.report.background = l_bg.scalar();
  total.push_back(l_bg);
  r.total = ad::add_n(total);
  r.report.total = r.total.scalar();
  return r;
}

EpisodeLoss meta_episode_loss(Tape& tape, const MmfsModel& model, const Episode& episode, Rng& rng) {
  const Index length = model.config().snippets;
  const int bg = episode.way();
  const EpisodeOutputs out = model.forward(tape, episode, Mode::kMMFS, {});

  std::vector<Var> shots, comp, rep;
  for (size_t c = 0; c < out.support.size(); ++c) {
    for (size_t k = 0; k < out.support[c].features.size(); ++k) {
      const Var& e = out.support[c].features[k];
      shots.push_back(e);
      const auto labels = labels_on_timeline(*episode.support[c][k], episode.class_ids, length);
      comp.push_back(ad::mask_bce(model.localizer()(tape, e), mask_targets(labels, bg),
                                  supervised_columns(labels, bg, rng)));
    }
  }
  // Unlabelled query videos only drive the action queries.
  for (const auto* v : episode.query) {
    QueryOutputs q;
    q.regulation = model.regulator()(tape, model.encode(tape, *v), shots);
    representation_mask_terms(q, out.support, rep);
  }

  EpisodeLoss r;
  r.report.stage = "meta";
  r.report.mode = Mode::kMMFS;
  Var l_comp = mean_of(comp);
  if (!rep.empty()) l_comp = ad::add(l_comp, mean_of(rep));
  const Var l_tok =
      ad::token_contrastive_loss(out.prompts.class_rows, out.prompts.text_only, out.prompts.video_embed);
  const Var l_bg =
      ad::background_loss(out.prompts.background, out.prompts.class_rows, model.config().background_margin);
  r.report.mask = l_comp.scalar();
  r.report.token = l_tok.scalar();
  r.report.background = l_bg.scalar();
  r.total = ad::add_n({l_comp, l_tok, l_bg});
  r.report.total = r.total.scalar();
  return r;
}

void base_train(MmfsModel& model, const Dataset& data, const TrainConfig& cfg, uint64_t seed,
                const StepCallback& on_step) {
  validate(cfg);
  if (data.split.base.empty()) throw DataError("base split is empty");
  model.store().set_trainable_groups(base_trainable_groups(model.config()));
  if (cfg.base_steps == 0) return;
  const EpisodeStream stream(data, data.split.base, cfg.way, cfg.shots, cfg.base_steps,
                             seed ^ 0xba5eull);
  Adam opt(cfg.base_lr);
  const auto t0 = std::chrono::steady_clock::now();
  for (int step = 0; step < cfg.base_steps; ++step) {
    Rng rng(seed ^ 0xba5eull, static_cast<uint64_t>(step) + (1ull << 32));
    const double u = rng.uniform();
    const Mode mode = u < cfg.zs_rate ? Mode::kZS : u < cfg.zs_rate + cfg.fs_rate ? Mode::kFS : Mode::kMMFS;
    model.store().zero_grad();
    Tape tape;
    EpisodeLoss loss = base_episode_loss(tape, model, stream.at(step), mode, rng);
    loss.report.step = step;
    loss.report.lr = cfg.base_lr;
    check_finite(loss.report);
    optimize(model, tape, loss, opt, cfg.clip_norm);
    loss.report.seconds = seconds_since(t0);
    if (on_step) on_step(loss.report);
  }
  model.store().zero_grad();
}

void meta_train(MmfsModel& model, const Dataset& data, const TrainConfig& cfg, uint64_t seed,
                const StepCallback& on_step) {
  validate(cfg);
  if (data.split.base.empty()) throw DataError("base split is empty");
  model.store().set_trainable_groups(meta_trainable_groups(model.config(), cfg.meta_learn));
  if (cfg.meta_episodes == 0) return;
  const EpisodeStream stream(data, data.split.base, cfg.way, cfg.shots, cfg.meta_episodes,
                             seed ^ 0x3e7aull);
  Adam opt(cfg.meta_lr);
  const auto t0 = std::chrono::steady_clock::now();
  for (int step = 0; step < cfg.meta_episodes; ++step) {
    Rng rng(seed ^ 0x3e7aull, static_cast<uint64_t>(step) + (1ull << 32));
    model.store().zero_grad();
    Tape tape;
    EpisodeLoss loss = meta_episode_loss(tape, model, stream.at(step), rng);
    loss.report.step = step;
    loss.report.lr = cfg.meta_lr;
    check_finite(loss.report);
    optimize(model, tape, loss, opt, cfg.clip_norm);
    loss.report.seconds = seconds_since(t0);
    if (on_step) on_step(loss.report);
  }
  model.store().zero_grad();
}

}  // namespace mmfs
