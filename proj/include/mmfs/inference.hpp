// SPDX-License-Identifier: Apache-2.0
//
// From class probabilities and snippet masks to scored segments, and from
// segments to mAP at a grid of temporal IoU thresholds.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmfs/data.hpp"
#include "mmfs/model.hpp"

namespace mmfs {

/// Half-open segment [start, end) with its class and confidence.
struct Detection {
  double start = 0.0;
  double end = 0.0;
  int class_id = 0;
  double score = 0.0;

  bool operator==(const Detection&) const = default;
};

struct DecodeOptions {
  std::vector<double> thresholds{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int top_k = 20;
  double nms_sigma = 0.5;
  double score_floor = 0.001;
};

/// Temporal IoU of [a0, a1) and [b0, b1); 0 when the union is empty.
double segment_iou(double a0, double a1, double b0, double b1);
double segment_iou(const Detection& a, const Detection& b);

/// The top_k snippets by foreground probability each threshold their own mask
/// column; every maximal run becomes a segment scored by the snippet's class
/// probability times the mean mask value over the run. Rows 0..C-1 of P are
/// classes, row C is background.
std::vector<Detection> decode_detections(const Mat& probs, const Mat& masks,
                                         const std::vector<double>& thresholds, int top_k);

/// Gaussian SoftNMS per class: repeatedly keep the best remaining detection
/// and decay same-class scores by exp(−IoU²/σ); detections below the floor
/// are dropped. Output sorted by descending score.
std::vector<Detection> soft_nms(std::vector<Detection> dets, double sigma, double score_floor);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct EvalReport {
  std::string mode = "MMFS";
  std::vector<double> tious;
  std::vector<double> ap;  // mAP at each tIoU
  double average = 0.0;    // mean over the grid
  int episodes = 0;
  uint64_t config_hash = 0;
  /// Optional curves: tIoU index → class id → points.
  std::vector<std::map<int, std::vector<PrPoint>>> pr_curves;
};

/// Interpolated AP (all-point, precision made monotone from the right).
double average_precision(const std::vector<double>& recall, const std::vector<double>& precision);

using VideoDetections = std::map<std::string, std::vector<Detection>>;
using VideoAnnotations = std::map<std::string, std::vector<SegmentAnnotation>>;

/// Per-class AP by greedy highest-score-first matching, one match per ground
/// truth; mAP over classes that have ground truth (others are skipped with a
/// warning). Only classes in `classes` are evaluated.
EvalReport evaluate_map(const VideoDetections& preds, const VideoAnnotations& gt,
                        const std::vector<int>& classes, const std::vector<double>& tious,
                        bool keep_curves = false);

struct ProtocolOptions {
  Mode mode = Mode::kMMFS;
  std::string split = "novel";
  int way = 3;
  int shots = 2;
  int episodes = 250;
  std::vector<double> tious{0.3, 0.5, 0.7};
  DecodeOptions decode;
  int workers = 1;
};

/// Detections for every query video of one episode, on the L-snippet
/// timeline, with dataset class ids.
VideoDetections detect_episode(const MmfsModel& model, const Episode& episode, Mode mode,
                               const DecodeOptions& decode);

struct EpisodePredictions {
  std::vector<int> class_ids;
  VideoDetections detections;
};

/// Averages per-episode reports over `episodes` sampled episodes. ZS mode
/// uses every class of the split in a single query-only task per episode.
/// Deterministic in `seed` for any worker count. `predictions`, if given,
/// receives each episode's classes and detections in episode order.
EvalReport run_protocol(const MmfsModel& model, const Dataset& data, const ProtocolOptions& opts,
                        uint64_t seed, std::vector<EpisodePredictions>* predictions = nullptr);

/// "base", "validation" or "novel"; anything else throws UsageError.
const std::vector<int>& classes_of_split(const Dataset& data, const std::string& split);

}  // namespace mmfs
