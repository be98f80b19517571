// SPDX-License-Identifier: Apache-2.0
//
// mmfs: command-line front end for dataset generation, two-stage training,
// evaluation and scoring.

#include <cstdio>
#include <exception>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "mmfs/errors.hpp"
#include "mmfs/feature_io.hpp"
#include "mmfs/runner.hpp"

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;

mmfs::ExperimentConfig load(const std::string& path) { return mmfs::load_config(path); }

int run(int argc, char** argv) {
  CLI::App app{"Few-shot temporal action detection with multimodal prompts"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::string config_path;
  auto* init = app.add_subcommand("init", "Write a config file with every default");
  std::string init_out = "mmfs.json";
  bool force = false;
  init->add_option("output", init_out, "Where to write the config")->capture_default_str();
  init->add_flag("--force", force, "Overwrite an existing file");

  auto* gen = app.add_subcommand("generate", "Write the synthetic dataset named by a config");
  gen->add_option("config", config_path, "Config file")->required();

  auto* train = app.add_subcommand("train", "Train the base stage, the meta stage, or both");
  mmfs::TrainOptions topts;
  std::string base_ckpt, out_dir = "run";
  train->add_option("config", config_path, "Config file")->required();
  train->add_option("--stage", topts.stage, "base, meta or both")
      ->check(CLI::IsMember({"base", "meta", "both"}))
      ->capture_default_str();
  train->add_option("--out-dir", out_dir, "Directory for checkpoints and logs")->capture_default_str();
  train->add_option("--base-checkpoint", base_ckpt, "Starting point of the meta stage (default <out-dir>/base.ckpt)");
  train->add_flag("--allow-config-mismatch", topts.allow_config_mismatch,
                  "Accept a base checkpoint trained under another config");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on sampled episodes");
  mmfs::EvalOptions eopts;
  std::string ckpt, mode, split, report, preds, curve;
  int episodes = 0, workers = 0;
  eval->add_option("config", config_path, "Config file")->required();
  eval->add_option("--checkpoint", ckpt, "Checkpoint to evaluate");
  eval->add_flag("--untrained", eopts.untrained, "Evaluate the freshly initialized model");
  eval->add_option("--mode", mode, "MMFS, FS or ZS (default from config)")
      ->check(CLI::IsMember({"MMFS", "FS", "ZS"}));
  eval->add_option("--split", split, "base, validation or novel")
      ->check(CLI::IsMember({"base", "validation", "novel"}));
  eval->add_option("--episodes", episodes, "Number of test episodes")->check(CLI::PositiveNumber);
  eval->add_option("--workers", workers, "Evaluation threads")->check(CLI::PositiveNumber);
  eval->add_option("--report", report, "Report path (default report_<mode>.json beside the checkpoint)");
  eval->add_option("--predictions", preds, "Also write detections in native snippet units");
  eval->add_option("--pr-curve", curve, "Also write precision-recall curves");
  eval->add_flag("--allow-config-mismatch", eopts.allow_config_mismatch,
                 "Evaluate a checkpoint trained under another config");

  auto* score = app.add_subcommand("score", "Score an external predictions file");
  std::string score_in, score_out;
  score->add_option("config", config_path, "Config file naming the dataset")->required();
  score->add_option("predictions", score_in, "Predictions file")->required()->check(CLI::ExistingFile);
  score->add_option("--report", score_out, "Also write the report here");

  auto* rep = app.add_subcommand("report", "Print one or more report files as a table");
  std::vector<std::string> reports;
  rep->add_option("reports", reports, "Report files")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  spdlog::set_default_logger(spdlog::default_logger());

  if (*init) {
    mmfs::cmd_init(init_out, force);
    std::cout << "wrote " << init_out << "\n";
  } else if (*gen) {
    mmfs::cmd_generate(load(config_path));
  } else if (*train) {
    topts.out_dir = out_dir;
    if (!base_ckpt.empty()) topts.base_checkpoint = base_ckpt;
    const auto r = mmfs::cmd_train(load(config_path), topts);
    for (const auto& p : r.checkpoints) std::cout << "checkpoint " << p.string() << "\n";
    for (const auto& p : r.logs) std::cout << "log " << p.string() << "\n";
  } else if (*eval) {
    if (ckpt.empty() == !eopts.untrained) throw mmfs::UsageError("eval takes exactly one of --checkpoint and --untrained");
    eopts.checkpoint = ckpt;
    if (!mode.empty()) eopts.mode = mmfs::parse_mode(mode);
    if (!split.empty()) eopts.split = split;
    if (episodes > 0) eopts.episodes = episodes;
    if (workers > 0) eopts.workers = workers;
    if (!report.empty()) eopts.report = report;
    if (!preds.empty()) eopts.predictions = preds;
    if (!curve.empty()) eopts.pr_curve = curve;
    const auto r = mmfs::cmd_eval(load(config_path), eopts);
    std::cout << mmfs::format_report(r.report) << "report " << r.report_path.string() << "\n";
  } else if (*score) {
    const auto cfg = load(config_path);
    const auto r = mmfs::cmd_score(cfg, score_in, cfg.eval.tious);
    if (!score_out.empty()) mmfs::write_text_file(score_out, mmfs::report_to_json(r).dump(2) + "\n");
    std::cout << mmfs::format_report(r);
  } else if (*rep) {
    for (const auto& path : reports) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(mmfs::read_text_file(path));
      } catch (const nlohmann::json::parse_error& e) {
        throw mmfs::DataError(path + ": " + e.what());
      }
      std::cout << path << "\n" << mmfs::format_report(mmfs::report_from_json(j)) << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const mmfs::Error& e) {
    spdlog::error("{}", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kData;
  }
}
