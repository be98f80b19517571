// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: one JSON document with seed, dataset, model,
// training and eval sections. Unknown keys are errors.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmfs/data.hpp"
#include "mmfs/inference.hpp"
#include "mmfs/model_config.hpp"
#include "mmfs/training.hpp"

namespace mmfs {

struct DatasetConfig {
  /// "synthetic": generated from `synthetic`; "directory": read from `directory`.
  std::string source = "synthetic";
  /// Where `generate` writes and where a directory source is read from.
  std::string directory = "data";
  SynthConfig synthetic;
};

struct EvalConfig {
  Mode mode = Mode::kMMFS;
  std::string split = "novel";
  int way = 3;
  int shots = 2;
  int episodes = 250;
  std::vector<double> tious{0.3, 0.5, 0.7};
  DecodeOptions decode;
  int workers = 1;
};

struct ExperimentConfig {
  uint64_t seed = 7;
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig training;
  EvalConfig eval;
};

/// Parses and validates. Syntax errors report line and column; schema errors
/// name the offending field, e.g. "model.dim".
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

nlohmann::ordered_json to_json(const ExperimentConfig& cfg);

/// Every key with its default value.
std::string config_template();

/// FNV-1a over the canonical dump of the settings that shape a trained model
/// (seed, dataset generation, model, training). Eval settings are excluded.
uint64_t config_hash(const ExperimentConfig& cfg);
std::string hash_hex(uint64_t h);

/// Derives a protocol description from the eval section.
ProtocolOptions protocol_options(const EvalConfig& eval);

void validate(const ExperimentConfig& cfg);

std::string to_string(BackboneMode m);
std::string to_string(AdapterPlacement p);
std::string to_string(TokenizerKind k);
std::string to_string(PromptSharing s);
std::string to_string(ContextSource s);
std::string to_string(LocalizerInput s);

}  // namespace mmfs
