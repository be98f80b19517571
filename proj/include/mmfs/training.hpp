// SPDX-License-Identifier: Apache-2.0
//
// Two-stage optimization. Base training fits every non-text module on
// labelled base-class episodes; meta training adapts selected blocks on
// episodes using support annotations only.

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mmfs/model.hpp"

namespace mmfs {

/// Which blocks meta training may update.
struct MetaLearnFlags {
  bool encoder = true;    // adapters (and the backbone in full-tune mode)
  bool temporal = true;
  bool tokenizer = true;
  bool decoder = true;    // representation-mask decoder

  bool operator==(const MetaLearnFlags&) const = default;
};

struct TrainConfig {
  double base_lr = 1e-4;
  double meta_lr = 1e-5;
  int base_steps = 1000;
  int meta_episodes = 300;
  int way = 3;
  int shots = 2;
  double clip_norm = 1.0;
  /// Share of base steps run in FS and ZS mode, so the placeholder tokens
  /// and the text-only path are trained too.
  double fs_rate = 0.2;
  double zs_rate = 0.1;
  MetaLearnFlags meta_learn;
};

struct LossReport {
  std::string stage;
  int step = 0;
  Mode mode = Mode::kMMFS;
  double classification = 0.0;  // L_c
  double dice = 0.0;            // L_m
  double mask = 0.0;            // L_comp
  double token = 0.0;           // L_tok
  double background = 0.0;      // L_bg
  double total = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

/// One JSON object per line.
std::string to_json_line(const LossReport& r);

/// Adam with bias correction; state keyed by parameter, updated in store order.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterStore& store);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  struct Moments {
    Mat m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<const Parameter*, Moments> state_;
};

/// Scales trainable gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_gradients(ParameterStore& store, double max_norm);

/// Groups updated by base training (everything except the text tower, and
/// the backbone/adapters according to the backbone mode).
std::vector<std::string> base_trainable_groups(const ModelConfig& cfg);
std::vector<std::string> meta_trainable_groups(const ModelConfig& cfg, const MetaLearnFlags& flags);

/// Loss terms of one supervised episode. Records them on `tape`; `total` is
/// the tape node to differentiate.
struct EpisodeLoss {
  LossReport report;
  Var total;
};
EpisodeLoss base_episode_loss(Tape& tape, const MmfsModel& model, const Episode& episode, Mode mode,
                              Rng& rng);
/// Meta objective L_tok + L_bg + L_comp on the support set. Query videos feed
/// the action queries but their annotations are never read.
EpisodeLoss meta_episode_loss(Tape& tape, const MmfsModel& model, const Episode& episode, Rng& rng);

using StepCallback = std::function<void(const LossReport&)>;

void base_train(MmfsModel& model, const Dataset& data, const TrainConfig& cfg, uint64_t seed,
                const StepCallback& on_step = {});
void meta_train(MmfsModel& model, const Dataset& data, const TrainConfig& cfg, uint64_t seed,
                const StepCallback& on_step = {});

/// Throws ConfigError naming the offending field.
void validate(const TrainConfig& cfg);

}  // namespace mmfs
