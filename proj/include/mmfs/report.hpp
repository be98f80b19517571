// SPDX-License-Identifier: Apache-2.0
//
// Structured-text forms of evaluation reports and detection files.

#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmfs/inference.hpp"

namespace mmfs {

nlohmann::ordered_json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

/// PR points per tIoU and class, for plotting.
nlohmann::ordered_json pr_curves_to_json(const EvalReport& r);

/// Console table: one column per tIoU plus the average.
std::string format_report(const EvalReport& r);

/// Detections of one video. `episode` groups records evaluated together
/// (−1 when the file is a single pool).
struct PredictionRecord {
  int episode = -1;
  std::string video_id;
  std::vector<Detection> segments;
};

struct PredictionFile {
  std::vector<PredictionRecord> videos;
  /// Classes each episode is evaluated over; episodes absent here use the
  /// classes annotated in their videos.
  std::map<int, std::vector<int>> episode_classes;
};

/// {"videos": [{"video_id", "episode"?, "segments": [{start, end, class, score}]}],
///  "episodes"?: [{"episode", "classes": [...]}]}
/// Classes are written as names; reading accepts a name or an id.
std::string encode_predictions(const PredictionFile& file, const std::vector<std::string>& class_names);
PredictionFile decode_predictions(const std::string& text, const std::vector<std::string>& class_names);

/// Maps detections from the L-snippet timeline to a video's native snippets.
std::vector<Detection> to_native_units(const std::vector<Detection>& dets, Index video_length, Index length);

/// Scores detection records against the dataset's native annotations. Records
/// are grouped by episode and the per-group reports are averaged.
EvalReport score_predictions(const PredictionFile& file, const Dataset& data, const std::vector<double>& tious,
                             bool keep_curves = false);

}  // namespace mmfs
