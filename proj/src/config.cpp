// SPDX-License-Identifier: Apache-2.0

#include "mmfs/config.hpp"

#include <cstdio>
#include <set>
#include <utility>

#include "mmfs/errors.hpp"
#include "mmfs/feature_io.hpp"
#include "mmfs/model.hpp"
#include "mmfs/random.hpp"

namespace mmfs {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

template <class E>
using Names = std::vector<std::pair<E, const char*>>;

const Names<BackboneMode> kBackboneModes{
    {BackboneMode::kFrozen, "frozen"}, {BackboneMode::kAdapters, "adapters"}, {BackboneMode::kFullTune, "full_tune"}};
const Names<AdapterPlacement> kPlacements{{AdapterPlacement::kSequential, "sequential"},
                                          {AdapterPlacement::kParallel, "parallel"}};
const Names<TokenizerKind> kTokenizers{{TokenizerKind::kSetAttention, "set_attention"},
                                       {TokenizerKind::kConv1d, "conv1d"}};
const Names<PromptSharing> kSharing{{PromptSharing::kClassSpecific, "class_specific"},
                                    {PromptSharing::kClassGeneric, "class_generic"}};
const Names<ContextSource> kContexts{{ContextSource::kVisual, "visual"}, {ContextSource::kLearned, "learned"}};
const Names<LocalizerInput> kLocalizerInputs{{LocalizerInput::kRegulated, "regulated"},
                                             {LocalizerInput::kUnregulated, "unregulated"}};

template <class E>
std::string name_of(const Names<E>& names, E v) {
  for (const auto& [e, n] : names) {
    if (e == v) return n;
  }
  return "?";
}

/// Typed reader over one JSON object that remembers which keys it consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected an object");
  }

  void read(const char* key, int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) fail(key, "expected an integer");
      const auto x = v->get<int64_t>();
      if (x < INT32_MIN || x > INT32_MAX) fail(key, "integer out of range");
      out = static_cast<int>(x);
    }
  }
  void read(const char* key, uint64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
      out = v->get<uint64_t>();
    }
  }
  void read(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
    }
  }
  void read(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }
  void read(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }
  void read(const char* key, std::vector<double>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) fail(key, "expected an array of numbers");
      out.clear();
      for (const auto& x : *v) {
        if (!x.is_number()) fail(key, "expected an array of numbers");
        out.push_back(x.get<double>());
      }
    }
  }
  void read(const char* key, std::vector<std::string>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) fail(key, "expected an array of strings");
      out.clear();
      for (const auto& x : *v) {
        if (!x.is_string()) fail(key, "expected an array of strings");
        out.push_back(x.get<std::string>());
      }
    }
  }
  template <class E>
  void read_enum(const char* key, const Names<E>& names, E& out) {
    std::string s;
    if (!j_.contains(key)) return;
    read(key, s);
    for (const auto& [e, n] : names) {
      if (s == n) {
        out = e;
        return;
      }
    }
    std::string options;
    for (const auto& [e, n] : names) options += std::string(options.empty() ? "" : ", ") + n;
    fail(key, "unknown value '" + s + "' (expected one of " + options + ")");
  }

  /// Sub-object, or nullptr when absent.
  const json* child(const char* key) {
    const json* v = take(key);
    if (v && !v->is_object()) fail(key, "expected an object");
    return v;
  }
  std::string path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key '" + path(k.c_str()) + "'");
    }
  }

 private:
  const json* take(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  [[noreturn]] void fail(const char* key, const std::string& what) const {
    throw ConfigError(path(key) + ": " + what);
  }
  std::string where() const { return path_.empty() ? "" : path_ + ": "; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_synthetic(const json& j, SynthConfig& s) {
  Section r(j, "dataset.synthetic");
  r.read("num_classes", s.num_classes);
  r.read("videos_per_class", s.videos_per_class);
  r.read("raw_dim", s.raw_dim);
  r.read("min_length", s.min_length);
  r.read("max_length", s.max_length);
  r.read("min_segments", s.min_segments);
  r.read("max_segments", s.max_segments);
  r.read("min_segment_fraction", s.min_segment_fraction);
  r.read("max_segment_fraction", s.max_segment_fraction);
  r.read("amplitude", s.amplitude);
  r.read("noise", s.noise);
  r.read("text_alignment", s.text_alignment);
  r.read("actionness", s.actionness);
  r.read("class_names", s.class_names);
  if (const json* split = r.child("split")) {
    Section sp(*split, "dataset.synthetic.split");
    sp.read("base", s.split.base);
    sp.read("validation", s.split.validation);
    sp.read("novel", s.split.novel);
    sp.finish();
  }
  r.finish();
}

void read_model(const json& j, ModelConfig& m) {
  Section r(j, "model");
  r.read("raw_dim", m.raw_dim);
  r.read("dim", m.dim);
  r.read("snippets", m.snippets);
  r.read("backbone_blocks", m.backbone_blocks);
  r.read("ff_hidden", m.ff_hidden);
  r.read("adapter_width", m.adapter_width);
  r.read_enum("backbone_mode", kBackboneModes, m.backbone_mode);
  r.read_enum("adapter_placement", kPlacements, m.adapter_placement);
  r.read("text_blocks", m.text_blocks);
  r.read("max_tokens", m.max_tokens);
  r.read_enum("tokenizer", kTokenizers, m.tokenizer);
  r.read("tokens_per_class", m.tokens_per_class);
  r.read_enum("prompt_sharing", kSharing, m.prompt_sharing);
  r.read_enum("context_source", kContexts, m.context_source);
  r.read("placeholder_tokens", m.placeholder_tokens);
  r.read("num_queries", m.num_queries);
  r.read("decoder_layers", m.decoder_layers);
  r.read("bin_threshold", m.bin_threshold);
  r.read("query_masking", m.query_masking);
  r.read("temperature", m.temperature);
  r.read("localizer_channels", m.localizer_channels);
  r.read_enum("localizer_input", kLocalizerInputs, m.localizer_input);
  r.read("background_margin", m.background_margin);
  r.finish();
}

void read_training(const json& j, TrainConfig& t) {
  Section r(j, "training");
  r.read("base_lr", t.base_lr);
  r.read("meta_lr", t.meta_lr);
  r.read("base_steps", t.base_steps);
  r.read("meta_episodes", t.meta_episodes);
  r.read("way", t.way);
  r.read("shots", t.shots);
  r.read("clip_norm", t.clip_norm);
  r.read("fs_rate", t.fs_rate);
  r.read("zs_rate", t.zs_rate);
  if (const json* f = r.child("meta_learn")) {
    Section m(*f, "training.meta_learn");
    m.read("encoder", t.meta_learn.encoder);
    m.read("temporal", t.meta_learn.temporal);
    m.read("tokenizer", t.meta_learn.tokenizer);
    m.read("decoder", t.meta_learn.decoder);
    m.finish();
  }
  r.finish();
}

void read_eval(const json& j, EvalConfig& e) {
  Section r(j, "eval");
  std::string mode = to_string(e.mode);
  r.read("mode", mode);
  try {
    e.mode = parse_mode(mode);
  } catch (const UsageError&) {
    throw ConfigError("eval.mode: unknown value '" + mode + "' (expected FS, MMFS or ZS)");
  }
  r.read("split", e.split);
  r.read("way", e.way);
  r.read("shots", e.shots);
  r.read("episodes", e.episodes);
  r.read("tious", e.tious);
  r.read("thresholds", e.decode.thresholds);
  r.read("top_k", e.decode.top_k);
  r.read("nms_sigma", e.decode.nms_sigma);
  r.read("score_floor", e.decode.score_floor);
  r.read("workers", e.workers);
  r.finish();
}

std::string line_and_column(const std::string& text, size_t byte) {
  size_t line = 1, col = 1;
  for (size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

ojson model_json(const ModelConfig& m) {
  ojson j;
  j["raw_dim"] = m.raw_dim;
  j["dim"] = m.dim;
  j["snippets"] = m.snippets;
  j["backbone_blocks"] = m.backbone_blocks;
  j["ff_hidden"] = m.ff_hidden;
  j["adapter_width"] = m.adapter_width;
  j["backbone_mode"] = to_string(m.backbone_mode);
  j["adapter_placement"] = to_string(m.adapter_placement);
  j["text_blocks"] = m.text_blocks;
  j["max_tokens"] = m.max_tokens;
  j["tokenizer"] = to_string(m.tokenizer);
  j["tokens_per_class"] = m.tokens_per_class;
  j["prompt_sharing"] = to_string(m.prompt_sharing);
  j["context_source"] = to_string(m.context_source);
  j["placeholder_tokens"] = m.placeholder_tokens;
  j["num_queries"] = m.num_queries;
  j["decoder_layers"] = m.decoder_layers;
  j["bin_threshold"] = m.bin_threshold;
  j["query_masking"] = m.query_masking;
  j["temperature"] = m.temperature;
  j["localizer_channels"] = m.localizer_channels;
  j["localizer_input"] = to_string(m.localizer_input);
  j["background_margin"] = m.background_margin;
  return j;
}

ojson dataset_json(const DatasetConfig& d, bool with_directory) {
  const SynthConfig& s = d.synthetic;
  ojson syn;
  syn["num_classes"] = s.num_classes;
  syn["videos_per_class"] = s.videos_per_class;
  syn["raw_dim"] = s.raw_dim;
  syn["min_length"] = s.min_length;
  syn["max_length"] = s.max_length;
  syn["min_segments"] = s.min_segments;
  syn["max_segments"] = s.max_segments;
  syn["min_segment_fraction"] = s.min_segment_fraction;
  syn["max_segment_fraction"] = s.max_segment_fraction;
  syn["amplitude"] = s.amplitude;
  syn["noise"] = s.noise;
  syn["text_alignment"] = s.text_alignment;
  syn["actionness"] = s.actionness;
  syn["split"] = {{"base", s.split.base}, {"validation", s.split.validation}, {"novel", s.split.novel}};
  syn["class_names"] = s.class_names;
  ojson j;
  j["source"] = d.source;
  if (with_directory) j["directory"] = d.directory;
  j["synthetic"] = syn;
  return j;
}

ojson training_json(const TrainConfig& t) {
  ojson j;
  j["base_lr"] = t.base_lr;
  j["meta_lr"] = t.meta_lr;
  j["base_steps"] = t.base_steps;
  j["meta_episodes"] = t.meta_episodes;
  j["way"] = t.way;
  j["shots"] = t.shots;
  j["clip_norm"] = t.clip_norm;
  j["fs_rate"] = t.fs_rate;
  j["zs_rate"] = t.zs_rate;
  j["meta_learn"] = {{"encoder", t.meta_learn.encoder},
                     {"temporal", t.meta_learn.temporal},
                     {"tokenizer", t.meta_learn.tokenizer},
                     {"decoder", t.meta_learn.decoder}};
  return j;
}

}  // namespace

std::string to_string(BackboneMode m) { return name_of(kBackboneModes, m); }
std::string to_string(AdapterPlacement p) { return name_of(kPlacements, p); }
std::string to_string(TokenizerKind k) { return name_of(kTokenizers, k); }
std::string to_string(PromptSharing s) { return name_of(kSharing, s); }
std::string to_string(ContextSource s) { return name_of(kContexts, s); }
std::string to_string(LocalizerInput s) { return name_of(kLocalizerInputs, s); }

void validate(const ExperimentConfig& c) {
  if (c.dataset.source != "synthetic" && c.dataset.source != "directory") {
    throw ConfigError("dataset.source: unknown value '" + c.dataset.source +
                      "' (expected synthetic or directory)");
  }
  if (c.dataset.directory.empty()) throw ConfigError("dataset.directory: must not be empty");
  validate(c.dataset.synthetic);
  validate(c.model);
  validate(c.training);
  if (c.dataset.source == "synthetic" && c.model.raw_dim != c.dataset.synthetic.raw_dim) {
    throw ConfigError("model.raw_dim: must equal dataset.synthetic.raw_dim (" +
                      std::to_string(c.dataset.synthetic.raw_dim) + ")");
  }
  const EvalConfig& e = c.eval;
  if (e.split != "base" && e.split != "validation" && e.split != "novel") {
    throw ConfigError("eval.split: unknown value '" + e.split + "' (expected base, validation or novel)");
  }
  if (e.way < 1) throw ConfigError("eval.way: must be at least 1");
  if (e.shots < 1) throw ConfigError("eval.shots: must be at least 1");
  if (e.episodes < 1) throw ConfigError("eval.episodes: must be at least 1");
  if (e.tious.empty()) throw ConfigError("eval.tious: must not be empty");
  for (double t : e.tious) {
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("eval.tious: values must lie in (0, 1]");
  }
  if (e.decode.thresholds.empty()) throw ConfigError("eval.thresholds: must not be empty");
  for (double t : e.decode.thresholds) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("eval.thresholds: values must lie in (0, 1)");
  }
  if (e.decode.top_k < 1) throw ConfigError("eval.top_k: must be at least 1");
  if (!(e.decode.nms_sigma > 0.0)) throw ConfigError("eval.nms_sigma: must be positive");
  if (!(e.decode.score_floor >= 0.0 && e.decode.score_floor < 1.0)) {
    throw ConfigError("eval.score_floor: must lie in [0, 1)");
  }
  if (e.workers < 1) throw ConfigError("eval.workers: must be at least 1");
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config is not valid JSON at " + line_and_column(text, e.byte) + ": " + e.what());
  }
  ExperimentConfig c;
  Section root(j, "");
  root.read("seed", c.seed);
  if (const json* d = root.child("dataset")) {
    Section ds(*d, "dataset");
    ds.read("source", c.dataset.source);
    ds.read("directory", c.dataset.directory);
    if (const json* s = ds.child("synthetic")) read_synthetic(*s, c.dataset.synthetic);
    ds.finish();
  }
  if (const json* m = root.child("model")) read_model(*m, c.model);
  if (const json* t = root.child("training")) read_training(*t, c.training);
  if (const json* e = root.child("eval")) read_eval(*e, c.eval);
  root.finish();
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  try {
    return parse_config(read_text_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

ojson to_json(const ExperimentConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["dataset"] = dataset_json(c.dataset, true);
  j["model"] = model_json(c.model);
  j["training"] = training_json(c.training);
  ojson e;
  e["mode"] = to_string(c.eval.mode);
  e["split"] = c.eval.split;
  e["way"] = c.eval.way;
  e["shots"] = c.eval.shots;
  e["episodes"] = c.eval.episodes;
  e["tious"] = c.eval.tious;
  e["thresholds"] = c.eval.decode.thresholds;
  e["top_k"] = c.eval.decode.top_k;
  e["nms_sigma"] = c.eval.decode.nms_sigma;
  e["score_floor"] = c.eval.decode.score_floor;
  e["workers"] = c.eval.workers;
  j["eval"] = e;
  return j;
}

std::string config_template() { return to_json(ExperimentConfig{}).dump(2) + "\n"; }

uint64_t config_hash(const ExperimentConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["dataset"] = dataset_json(c.dataset, false);
  j["model"] = model_json(c.model);
  j["training"] = training_json(c.training);
  return fnv1a64(j.dump());
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ProtocolOptions protocol_options(const EvalConfig& e) {
  ProtocolOptions p;
  p.mode = e.mode;
  p.split = e.split;
  p.way = e.way;
  p.shots = e.shots;
  p.episodes = e.episodes;
  p.tious = e.tious;
  p.decode = e.decode;
  p.workers = e.workers;
  return p;
}

}  // namespace mmfs
