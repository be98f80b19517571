// SPDX-License-Identifier: Apache-2.0
//
// The experiment workflow behind the command-line tool: generate a dataset,
// train in two stages, evaluate, score external predictions.

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mmfs/checkpoint.hpp"
#include "mmfs/config.hpp"
#include "mmfs/report.hpp"

namespace mmfs {

namespace fs = std::filesystem;

/// Writes the full-default config; refuses to overwrite unless `force`.
void cmd_init(const fs::path& out, bool force);

/// Generates the synthetic dataset named by the config into its directory.
/// Same config and seed give byte-identical files.
Dataset cmd_generate(const ExperimentConfig& cfg);

/// Reads the dataset directory and checks it against the model config.
Dataset load_experiment_data(const ExperimentConfig& cfg);

struct TrainOptions {
  /// "base", "meta" or "both".
  std::string stage = "both";
  fs::path out_dir = "run";
  /// Start of the meta stage; defaults to <out_dir>/base.ckpt.
  std::optional<fs::path> base_checkpoint;
  bool allow_config_mismatch = false;
};

struct TrainResult {
  std::vector<fs::path> checkpoints;
  std::vector<fs::path> logs;
};

/// Writes <out_dir>/<stage>.ckpt and <out_dir>/<stage>_log.jsonl (one
/// record per step) for each stage run.
TrainResult cmd_train(const ExperimentConfig& cfg, const TrainOptions& opts);

struct EvalOptions {
  /// Empty only with `untrained`.
  fs::path checkpoint;
  bool untrained = false;
  bool allow_config_mismatch = false;
  /// Overrides of the config's eval section.
  std::optional<Mode> mode;
  std::optional<std::string> split;
  std::optional<int> episodes;
  std::optional<int> workers;
  /// Defaults to report_<mode>.json next to the checkpoint (or in the
  /// current directory for an untrained model).
  std::optional<fs::path> report;
  std::optional<fs::path> predictions;
  std::optional<fs::path> pr_curve;
};

struct EvalResult {
  EvalReport report;
  fs::path report_path;
};

EvalResult cmd_eval(const ExperimentConfig& cfg, const EvalOptions& opts);

/// Scores a predictions file against the dataset's annotations.
EvalReport cmd_score(const ExperimentConfig& cfg, const fs::path& predictions, const std::vector<double>& tious);

/// Throws DataError when `ckpt` was trained under another config, unless
/// `allow` is set, in which case it only warns.
void check_config_hash(const Checkpoint& ckpt, uint64_t expected, const std::string& what, bool allow);

}  // namespace mmfs
