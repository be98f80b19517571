// SPDX-License-Identifier: Apache-2.0

#include "mmfs/runner.hpp"

#include <fstream>

#include <spdlog/spdlog.h>

#include "mmfs/errors.hpp"
#include "mmfs/feature_io.hpp"
#include "mmfs/model.hpp"
#include "mmfs/training.hpp"

namespace mmfs {

void cmd_init(const fs::path& out, bool force) {
  if (fs::exists(out) && !force) {
    throw UsageError(out.string() + " already exists; pass --force to overwrite");
  }
  write_text_file(out, config_template());
}

Dataset cmd_generate(const ExperimentConfig& cfg) {
  if (cfg.dataset.source != "synthetic") {
    throw UsageError("dataset.source is '" + cfg.dataset.source + "'; only a synthetic source can be generated");
  }
  Dataset ds = generate_synthetic_dataset(cfg.dataset.synthetic, cfg.seed);
  write_dataset(cfg.dataset.directory, ds);
  spdlog::info("wrote {} videos over {} classes to {}", ds.videos.size(), ds.num_classes(),
               cfg.dataset.directory);
  return ds;
}

Dataset load_experiment_data(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.dataset.directory;
  if (!fs::exists(dir / "split.json")) {
    std::string hint = cfg.dataset.source == "synthetic" ? "; run `mmfs generate` with this config first" : "";
    throw DataError("no dataset at " + dir.string() + hint);
  }
  Dataset ds = read_dataset(dir);
  if (ds.videos.empty()) throw DataError("dataset at " + dir.string() + " has no videos");
  for (const auto& v : ds.videos) {
    if (v.raw_dim() != cfg.model.raw_dim) {
      throw DataError("video '" + v.video_id + "' has " + std::to_string(v.raw_dim()) +
                      "-dimensional features but model.raw_dim is " + std::to_string(cfg.model.raw_dim));
    }
  }
  return ds;
}

void check_config_hash(const Checkpoint& ckpt, uint64_t expected, const std::string& what, bool allow) {
  if (ckpt.config_hash == expected) return;
  const std::string msg = what + " was trained under config " + hash_hex(ckpt.config_hash) +
                          " but the current config is " + hash_hex(expected);
  if (!allow) throw DataError(msg + "; pass --allow-config-mismatch to use it anyway");
  spdlog::warn("{}", msg);
}

namespace {

class JsonlLog {
 public:
  explicit JsonlLog(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw DataError("cannot write " + path.string());
  }
  void operator()(const LossReport& r) {
    out_ << to_json_line(r) << '\n';
    if (r.step % 100 == 0) {
      spdlog::info("{} step {} ({}): total {:.4f}", r.stage, r.step, to_string(r.mode), r.total);
    }
  }

 private:
  std::ofstream out_;
};

}  // namespace

TrainResult cmd_train(const ExperimentConfig& cfg, const TrainOptions& opts) {
  if (opts.stage != "base" && opts.stage != "meta" && opts.stage != "both") {
    throw UsageError("--stage must be base, meta or both, not '" + opts.stage + "'");
  }
  const uint64_t hash = config_hash(cfg);
  const fs::path base_path = opts.base_checkpoint.value_or(opts.out_dir / "base.ckpt");
  // Check the prerequisite before any expensive work.
  if (opts.stage == "meta" && !fs::exists(base_path)) {
    throw DataError("meta training starts from a base checkpoint, but " + base_path.string() +
                    " does not exist; run `mmfs train --stage base` first or pass --base-checkpoint");
  }
  const Dataset data = load_experiment_data(cfg);
  fs::create_directories(opts.out_dir);
  MmfsModel model(cfg.model, cfg.seed);
  TrainResult result;

  if (opts.stage == "base" || opts.stage == "both") {
    const fs::path log = opts.out_dir / "base_log.jsonl";
    JsonlLog sink(log);
    base_train(model, data, cfg.training, cfg.seed, std::ref(sink));
    const fs::path out = opts.out_dir / "base.ckpt";
    save_checkpoint(out, snapshot(model.store(), "base", hash));
    spdlog::info("saved {}", out.string());
    result.checkpoints.push_back(out);
    result.logs.push_back(log);
  } else {
    const Checkpoint base = load_checkpoint(base_path);
    if (base.stage != "base") {
      throw DataError(base_path.string() + " holds a '" + base.stage + "' checkpoint, not a base one");
    }
    check_config_hash(base, hash, base_path.string(), opts.allow_config_mismatch);
    restore(model.store(), base);
  }

  if (opts.stage == "meta" || opts.stage == "both") {
    const fs::path log = opts.out_dir / "meta_log.jsonl";
    JsonlLog sink(log);
    meta_train(model, data, cfg.training, cfg.seed, std::ref(sink));
    const fs::path out = opts.out_dir / "meta.ckpt";
    save_checkpoint(out, snapshot(model.store(), "meta", hash));
    spdlog::info("saved {}", out.string());
    result.checkpoints.push_back(out);
    result.logs.push_back(log);
  }
  return result;
}

EvalResult cmd_eval(const ExperimentConfig& cfg, const EvalOptions& opts) {
  const uint64_t hash = config_hash(cfg);
  if (!opts.untrained && opts.checkpoint.empty()) throw UsageError("eval needs --checkpoint or --untrained");
  ProtocolOptions p = protocol_options(cfg.eval);
  if (opts.mode) p.mode = *opts.mode;
  if (opts.split) p.split = *opts.split;
  if (opts.episodes) p.episodes = *opts.episodes;
  if (opts.workers) p.workers = *opts.workers;
  if (p.episodes < 1) throw UsageError("--episodes must be at least 1");
  if (p.workers < 1) throw UsageError("--workers must be at least 1");

  const Dataset data = load_experiment_data(cfg);
  MmfsModel model(cfg.model, cfg.seed);
  if (!opts.untrained) {
    const Checkpoint ckpt = load_checkpoint(opts.checkpoint);
    check_config_hash(ckpt, hash, opts.checkpoint.string(), opts.allow_config_mismatch);
    restore(model.store(), ckpt);
  }

  std::vector<EpisodePredictions> preds;
  const bool keep = opts.predictions || opts.pr_curve;
  EvalReport report = run_protocol(model, data, p, cfg.seed ^ 0xe7a1ull, keep ? &preds : nullptr);
  report.config_hash = hash;

  EvalResult result;
  const std::string suffix = opts.untrained ? "_untrained" : "";
  const fs::path dir = opts.untrained ? fs::path(".") : opts.checkpoint.parent_path();
  result.report_path = opts.report.value_or(dir / ("report_" + report.mode + suffix + ".json"));
  write_text_file(result.report_path, report_to_json(report).dump(2) + "\n");

  const Index length = cfg.model.snippets;
  if (opts.predictions) {
    PredictionFile file;
    for (size_t e = 0; e < preds.size(); ++e) {
      const int ep = static_cast<int>(e);
      file.episode_classes[ep] = preds[e].class_ids;
      for (const auto& [vid, dets] : preds[e].detections) {
        file.videos.push_back({ep, vid, to_native_units(dets, data.find(vid)->length(), length)});
      }
    }
    write_text_file(*opts.predictions, encode_predictions(file, data.class_names));
  }
  if (opts.pr_curve) {
    // One pooled curve per class: every (episode, video) pair is a separate
    // item, with ground truth limited to the episode's classes.
    VideoDetections pooled;
    VideoAnnotations gt;
    for (size_t e = 0; e < preds.size(); ++e) {
      for (const auto& [vid, dets] : preds[e].detections) {
        const std::string key = std::to_string(e) + "/" + vid;
        pooled[key] = dets;
        const VideoRecord* v = data.find(vid);
        for (const auto& a : rescale_annotations(v->annotations, v->length(), length)) {
          for (int c : preds[e].class_ids) {
            if (a.class_id == c) gt[key].push_back(a);
          }
        }
      }
    }
    const EvalReport curves = evaluate_map(pooled, gt, classes_of_split(data, p.split), p.tious, true);
    write_text_file(*opts.pr_curve, pr_curves_to_json(curves).dump(1) + "\n");
  }
  result.report = report;
  return result;
}

EvalReport cmd_score(const ExperimentConfig& cfg, const fs::path& predictions, const std::vector<double>& tious) {
  const Dataset data = load_experiment_data(cfg);
  EvalReport r = score_predictions(decode_predictions(read_text_file(predictions), data.class_names), data, tious);
  r.config_hash = config_hash(cfg);
  return r;
}

}  // namespace mmfs
