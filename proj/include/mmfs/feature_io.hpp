// SPDX-License-Identifier: Apache-2.0
//
// Feature files: a magic line, one line of JSON header, then T × D_raw
// little-endian float32 values in row-major order.
//
//   MMFSFEAT 1
//   {"video_id":"v00_000","T":96,"D_raw":64,"time_unit":"snippet","annotations":[...]}
//   <binary payload>
//
// Headers with "time_unit":"frame" carry frame indices; they are divided by
// "frame_stride" (default 6) and snapped to integer snippets on load.

#pragma once

#include <filesystem>
#include <string>

#include "mmfs/data.hpp"

namespace mmfs {

inline constexpr int kDefaultFrameStride = 6;

std::string encode_feature_file(const VideoRecord& video);
VideoRecord decode_feature_file(const std::string& bytes);

void write_feature_file(const std::filesystem::path& path, const VideoRecord& video);
VideoRecord read_feature_file(const std::filesystem::path& path);

/// Writes `split.json` and `videos/<id>.feat` under `dir`.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
/// Reads a directory written by write_dataset (or laid out the same way by
/// an external feature extractor) and validates it.
Dataset read_dataset(const std::filesystem::path& dir);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace mmfs
