// SPDX-License-Identifier: Apache-2.0

#include "mmfs/data.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "mmfs/errors.hpp"
#include "mmfs/random.hpp"
#include "mmfs/text.hpp"

namespace mmfs {

bool VideoRecord::contains_class(int class_id) const {
  return std::any_of(annotations.begin(), annotations.end(),
                     [class_id](const SegmentAnnotation& a) { return a.class_id == class_id; });
}

const VideoRecord* Dataset::find(const std::string& video_id) const {
  for (const auto& v : videos) {
    if (v.video_id == video_id) return &v;
  }
  return nullptr;
}

std::vector<std::string> default_class_names(int n) {
  static const std::vector<std::string> kNames = {
      "cricket shot",   "long jump",      "high jump",          "pole vault",
      "tennis swing",   "golf swing",     "cliff diving",       "rope climbing",
      "shot put",       "discus throw",   "javelin throw",      "hammer throw",
      "rock climbing",  "springboard diving", "baseball pitch", "volleyball spiking"};
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    if (i < static_cast<int>(kNames.size())) {
      out.push_back(kNames[static_cast<size_t>(i)]);
    } else {
      out.push_back("action " + std::to_string(i));
    }
  }
  return out;
}

void validate(const SynthConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("dataset." + field + ": " + why);
  };
  if (c.num_classes < 6) fail("num_classes", "need at least 6 classes");
  if (c.videos_per_class < 3) fail("videos_per_class", "need at least 3 videos per class");
  if (c.raw_dim < 1) fail("raw_dim", "must be positive");
  if (c.min_length < 2) fail("min_length", "must be at least 2");
  if (c.max_length < c.min_length) fail("max_length", "must be >= min_length");
  if (c.min_segments < 1) fail("min_segments", "must be at least 1");
  if (c.max_segments < c.min_segments) fail("max_segments", "must be >= min_segments");
  if (!(c.min_segment_fraction > 0.0) || c.min_segment_fraction > c.max_segment_fraction)
    fail("min_segment_fraction", "must be in (0, max_segment_fraction]");
  if (c.max_segment_fraction * c.max_segments > 0.9)
    fail("max_segment_fraction", "segments cannot fit: max_segments * max_segment_fraction > 0.9");
  if (!(c.amplitude >= 0.0)) fail("amplitude", "must be non-negative");
  if (!(c.noise >= 0.0)) fail("noise", "must be non-negative");
  if (!(c.text_alignment >= 0.0 && c.text_alignment <= 1.0)) fail("text_alignment", "must be in [0, 1]");
  if (!(c.actionness >= 0.0 && c.actionness <= 1.0)) fail("actionness", "must be in [0, 1]");
  const SplitRatios& r = c.split;
  if (r.base < 0.0 || r.validation < 0.0 || r.novel < 0.0) fail("split", "ratios must be non-negative");
  if (std::abs(r.base + r.validation + r.novel - 1.0) > 1e-9) fail("split", "ratios must sum to 1");
  if (!c.class_names.empty() && static_cast<int>(c.class_names.size()) != c.num_classes)
    fail("class_names", "must list exactly num_classes names");
  std::set<std::string> seen;
  for (const auto& n : c.class_names) {
    if (n.empty()) fail("class_names", "empty class name");
    if (!seen.insert(n).second) fail("class_names", "duplicate class name '" + n + "'");
  }
  // Throws when any split would be empty.
  split_classes(c.num_classes, c.split, 0);
}

void validate(const SegmentAnnotation& a, Index video_length, int num_classes) {
  if (!(a.start >= 0.0 && a.start < a.end && a.end <= static_cast<double>(video_length))) {
    std::ostringstream os;
    os << "segment [" << a.start << ", " << a.end << ") outside video of length " << video_length;
    throw DataError(os.str());
  }
  if (a.class_id < 0 || a.class_id >= num_classes) {
    throw DataError("segment class " + std::to_string(a.class_id) + " is not a declared class");
  }
}

void validate(const VideoRecord& v, int num_classes) {
  if (v.length() < 1) throw DataError("video '" + v.video_id + "' has no snippets");
  if (!v.features.allFinite()) throw DataError("video '" + v.video_id + "' has non-finite features");
  for (const auto& a : v.annotations) validate(a, v.length(), num_classes);
}

void validate(const ClassSplit& split, int num_classes) {
  std::vector<int> seen(static_cast<size_t>(num_classes), 0);
  for (const auto* part : {&split.base, &split.validation, &split.novel}) {
    for (int c : *part) {
      if (c < 0 || c >= num_classes) throw DataError("split names unknown class " + std::to_string(c));
      if (seen[static_cast<size_t>(c)]++ != 0) {
        throw DataError("class " + std::to_string(c) + " appears in more than one split");
      }
    }
  }
  for (int c = 0; c < num_classes; ++c) {
    if (seen[static_cast<size_t>(c)] == 0) {
      throw DataError("class " + std::to_string(c) + " is not assigned to any split");
    }
  }
}

ClassSplit split_classes(int num_classes, const SplitRatios& ratios, uint64_t seed) {
  const int n_val = static_cast<int>(std::lround(num_classes * ratios.validation));
  const int n_novel = static_cast<int>(std::lround(num_classes * ratios.novel));
  const int n_base = num_classes - n_val - n_novel;
  if (n_base <= 0) throw ConfigError("dataset.split: base split would be empty");
  if (n_val <= 0) throw ConfigError("dataset.split: validation split would be empty");
  if (n_novel <= 0) throw ConfigError("dataset.split: novel split would be empty");

  std::vector<int> order(static_cast<size_t>(num_classes));
  for (int i = 0; i < num_classes; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(seed, 0x5911ull);
  rng.shuffle(order);

  ClassSplit s;
  auto it = order.begin();
  s.base.assign(it, it + n_base);
  s.validation.assign(it + n_base, it + n_base + n_val);
  s.novel.assign(it + n_base + n_val, order.end());
  for (auto* part : {&s.base, &s.validation, &s.novel}) std::sort(part->begin(), part->end());
  return s;
}

Mat lexicon_vector(const std::string& token, Index dim) {
  Rng rng(fnv1a64(token) ^ kLexiconSeed);
  return rng.normal_matrix(1, dim, 1.0 / std::sqrt(static_cast<double>(dim)));
}

Mat actionness_direction(Index dim) {
  Mat v = lexicon_vector("<action>", dim);
  return v / v.norm();
}

Mat class_signature(const std::string& class_name, int class_id, Index dim, double text_alignment,
                    uint64_t seed) {
  Mat text = Mat::Zero(1, dim);
  const auto words = split_words(class_name);
  for (const auto& w : words) text += lexicon_vector(w, dim);
  if (text.norm() > 0.0) text /= text.norm();

  Rng rng(seed, 0xc1a55000ull + static_cast<uint64_t>(class_id));
  Mat priv = rng.normal_matrix(1, dim);
  priv /= priv.norm();

  const double a = words.empty() ? 0.0 : text_alignment;
  Mat sig = a * text + std::sqrt(std::max(0.0, 1.0 - a * a)) * priv;
  return sig / sig.norm();
}

namespace {

// Places `count` non-overlapping integer segments in [0, length).
std::vector<std::pair<int, int>> place_segments(int length, int count, double min_frac,
                                                double max_frac, Rng& rng) {
  std::vector<std::pair<int, int>> segs;
  for (int attempt = 0; attempt < 200 && static_cast<int>(segs.size()) < count; ++attempt) {
    const double frac = rng.uniform(min_frac, max_frac);
    const int len = std::max(1, static_cast<int>(std::lround(frac * length)));
    if (len >= length) continue;
    const int start = static_cast<int>(rng.uniform_int(0, length - len));
    const int end = start + len;
    bool clash = false;
    for (const auto& [s, e] : segs) {
      // Keep at least one background snippet between segments.
      if (start <= e && s <= end) clash = true;
    }
    if (!clash) segs.emplace_back(start, end);
  }
  std::sort(segs.begin(), segs.end());
  return segs;
}

}  // namespace

Dataset generate_synthetic_dataset(const SynthConfig& config, uint64_t seed) {
  validate(config);
  Dataset ds;
  ds.class_names = config.class_names.empty() ? default_class_names(config.num_classes)
                                              : config.class_names;
  ds.split = split_classes(config.num_classes, config.split, seed);

  const Index dim = config.raw_dim;
  std::vector<Mat> signatures;
  std::vector<double> periods;
  for (int c = 0; c < config.num_classes; ++c) {
    signatures.push_back(class_signature(ds.class_names[static_cast<size_t>(c)], c, dim,
                                         config.text_alignment, seed));
    periods.push_back(4.0 + (c % 5) * 2.0);
  }

  for (int c = 0; c < config.num_classes; ++c) {
    for (int i = 0; i < config.videos_per_class; ++i) {
      Rng rng(seed, (static_cast<uint64_t>(c) << 32) | static_cast<uint64_t>(i));
      const int length = static_cast<int>(rng.uniform_int(config.min_length, config.max_length));
      const int count = static_cast<int>(rng.uniform_int(config.min_segments, config.max_segments));
      auto segs = place_segments(length, count, config.min_segment_fraction,
                                 config.max_segment_fraction, rng);
      if (segs.empty()) segs.emplace_back(length / 4, length / 4 + std::max(1, length / 5));

      Mat x = rng.normal_matrix(length, dim, config.noise);
      const Mat sig = std::sqrt(config.actionness) * actionness_direction(dim) +
                      std::sqrt(1.0 - config.actionness) * signatures[static_cast<size_t>(c)];
      for (const auto& [s, e] : segs) {
        for (int t = s; t < e; ++t) {
          const double phase = 2.0 * M_PI * (t - s) / periods[static_cast<size_t>(c)];
          x.row(t) += config.amplitude * (1.0 + 0.3 * std::sin(phase)) * sig;
        }
      }

      VideoRecord v;
      char id[32];
      std::snprintf(id, sizeof(id), "v%02d_%03d", c, i);
      v.video_id = id;
      v.features = x.cast<float>();
      for (const auto& [s, e] : segs) v.annotations.push_back({double(s), double(e), c});
      ds.videos.push_back(std::move(v));
    }
  }
  return ds;
}

InterpolationPlan interpolation_plan(Index source_length, Index target_length) {
  if (source_length < 1) throw DataError("rescale: source has no snippets");
  if (target_length < 1) throw DataError("rescale: target length must be positive");
  InterpolationPlan plan;
  plan.lower.resize(static_cast<size_t>(target_length));
  plan.upper.resize(static_cast<size_t>(target_length));
  plan.weight.resize(target_length);
  const double step = target_length > 1 ? static_cast<double>(source_length - 1) /
                                              static_cast<double>(target_length - 1)
                                        : 0.0;
  for (Index i = 0; i < target_length; ++i) {
    const double pos = static_cast<double>(i) * step;
    Index lo = static_cast<Index>(std::floor(pos));
    lo = std::clamp<Index>(lo, 0, source_length - 1);
    const Index hi = std::min<Index>(lo + 1, source_length - 1);
    plan.lower[static_cast<size_t>(i)] = lo;
    plan.upper[static_cast<size_t>(i)] = hi;
    plan.weight(i) = hi == lo ? 0.0 : pos - static_cast<double>(lo);
  }
  return plan;
}

FeatureSequence rescale_features(const Mat& raw, Index target_length) {
  if (!raw.allFinite()) throw DataError("rescale: non-finite input features");
  const InterpolationPlan plan = interpolation_plan(raw.rows(), target_length);
  FeatureSequence out;
  out.data.resize(target_length, raw.cols());
  for (Index i = 0; i < target_length; ++i) {
    const auto a = raw.row(plan.lower[static_cast<size_t>(i)]);
    const auto b = raw.row(plan.upper[static_cast<size_t>(i)]);
    // a + w (b - a) is exact when a == b.
    out.data.row(i) = a + plan.weight(i) * (b - a);
  }
  return out;
}

FeatureSequence rescale_features(const MatF& raw, Index target_length) {
  return rescale_features(Mat(raw.cast<double>()), target_length);
}

std::vector<SegmentAnnotation> rescale_annotations(const std::vector<SegmentAnnotation>& annotations,
                                                   Index source_length, Index target_length) {
  std::vector<SegmentAnnotation> out;
  const double f = static_cast<double>(target_length) / static_cast<double>(source_length);
  const double tl = static_cast<double>(target_length);
  for (const auto& a : annotations) {
    double s = std::clamp(std::round(a.start * f), 0.0, tl - 1.0);
    double e = std::clamp(std::round(a.end * f), 0.0, tl);
    if (e <= s) e = s + 1.0;
    out.push_back({s, e, a.class_id});
  }
  return out;
}

Eigen::VectorXd gt_to_mask(const std::vector<SegmentAnnotation>& annotations, int class_id,
                           Index length) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(length);
  for (const auto& a : annotations) {
    if (a.class_id != class_id) continue;
    for (Index t = 0; t < length; ++t) {
      const double pos = static_cast<double>(t);
      if (pos >= a.start && pos < a.end) m(t) = 1.0;
    }
  }
  return m;
}

std::vector<int> snippet_labels(const std::vector<SegmentAnnotation>& annotations,
                                const std::vector<int>& episode_classes, Index length) {
  const int background = static_cast<int>(episode_classes.size());
  std::vector<int> labels(static_cast<size_t>(length), background);
  for (const auto& a : annotations) {
    const auto it = std::find(episode_classes.begin(), episode_classes.end(), a.class_id);
    if (it == episode_classes.end()) continue;
    const int local = static_cast<int>(it - episode_classes.begin());
    for (Index t = 0; t < length; ++t) {
      const double pos = static_cast<double>(t);
      if (pos >= a.start && pos < a.end) labels[static_cast<size_t>(t)] = local;
    }
  }
  return labels;
}

}  // namespace mmfs
