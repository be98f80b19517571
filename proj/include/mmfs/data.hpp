// SPDX-License-Identifier: Apache-2.0
//
// Videos, annotations, class splits, the synthetic benchmark generator and
// the fixed-length snippet timeline every model component works on.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmfs/autodiff.hpp"

namespace mmfs {

using MatF = Eigen::MatrixXf;

/// Half-open interval [start, end) in snippet units with its class.
struct SegmentAnnotation {
  double start = 0.0;
  double end = 0.0;
  int class_id = 0;

  double length() const { return end - start; }
  bool operator==(const SegmentAnnotation&) const = default;
};

struct VideoRecord {
  std::string video_id;
  MatF features;  // T × D_raw, one row per snippet
  std::vector<SegmentAnnotation> annotations;

  Index length() const { return features.rows(); }
  Index raw_dim() const { return features.cols(); }
  bool contains_class(int class_id) const;
};

struct ClassSplit {
  std::vector<int> base;
  std::vector<int> validation;
  std::vector<int> novel;
};

/// Video rescaled to the fixed L-snippet timeline.
struct FeatureSequence {
  Mat data;  // L × D

  Index length() const { return data.rows(); }
  Index dim() const { return data.cols(); }
};

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<VideoRecord> videos;
  ClassSplit split;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  const VideoRecord* find(const std::string& video_id) const;
};

struct SplitRatios {
  double base = 0.6;
  double validation = 0.1;
  double novel = 0.3;
};

struct SynthConfig {
  int num_classes = 10;
  int videos_per_class = 12;
  int raw_dim = 64;
  int min_length = 64;
  int max_length = 128;
  int min_segments = 1;
  int max_segments = 2;
  double min_segment_fraction = 0.10;
  double max_segment_fraction = 0.25;
  /// Scale of the class signature planted inside segments.
  double amplitude = 5.0;
  /// Standard deviation of the Gaussian noise floor.
  double noise = 1.0;
  /// Share of a class signature explained by its name's word vectors, in [0, 1].
  double text_alignment = 0.7;
  /// Share of the planted pattern common to every class, in [0, 1]: the
  /// class-agnostic "something is happening" cue of real action features.
  double actionness = 0.5;
  SplitRatios split;
  /// Empty means the built-in list of action names.
  std::vector<std::string> class_names;
};

/// Built-in action names; the first `n` are used when a config names none.
std::vector<std::string> default_class_names(int n);

/// Throws ConfigError naming the offending field.
void validate(const SynthConfig& config);
void validate(const SegmentAnnotation& a, Index video_length, int num_classes);
void validate(const VideoRecord& v, int num_classes);
void validate(const ClassSplit& split, int num_classes);

/// Class counts for a split: novel and validation are rounded, base takes the rest.
ClassSplit split_classes(int num_classes, const SplitRatios& ratios, uint64_t seed);

Dataset generate_synthetic_dataset(const SynthConfig& config, uint64_t seed);

/// Fixed seed of the word-vector table shared by the synthetic world and the
/// text encoder's pretrained token embeddings.
inline constexpr uint64_t kLexiconSeed = 0x1e71c0ull;

/// Deterministic unit-scale word vector (entries ~ N(0, 1/dim)).
Mat lexicon_vector(const std::string& token, Index dim);

/// Unit-norm direction shared by the foreground of every class.
Mat actionness_direction(Index dim);

/// Unit-norm signature direction of a class, mixing its name's word vectors
/// with a class-private direction.
Mat class_signature(const std::string& class_name, int class_id, Index dim, double text_alignment,
                    uint64_t seed);

/// Sample positions and weights of the L equidistant interpolation points.
struct InterpolationPlan {
  std::vector<Index> lower;
  std::vector<Index> upper;
  Eigen::VectorXd weight;  // fraction towards `upper`
};
InterpolationPlan interpolation_plan(Index source_length, Index target_length);

FeatureSequence rescale_features(const MatF& raw, Index target_length);
FeatureSequence rescale_features(const Mat& raw, Index target_length);

/// Maps annotations from a T-snippet video onto the L timeline, snapping
/// boundaries to integers and keeping every segment at least one snippet long.
std::vector<SegmentAnnotation> rescale_annotations(const std::vector<SegmentAnnotation>& annotations,
                                                   Index source_length, Index target_length);

/// Entry t is 1 iff snippet t lies inside a segment of `class_id`.
Eigen::VectorXd gt_to_mask(const std::vector<SegmentAnnotation>& annotations, int class_id,
                           Index length);

/// Per-snippet labels: position in `episode_classes` for foreground, or
/// `episode_classes.size()` (background) elsewhere. Later segments win ties.
std::vector<int> snippet_labels(const std::vector<SegmentAnnotation>& annotations,
                                const std::vector<int>& episode_classes, Index length);

}  // namespace mmfs
