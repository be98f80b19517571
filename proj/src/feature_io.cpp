// SPDX-License-Identifier: Apache-2.0

#include "mmfs/feature_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mmfs/errors.hpp"

namespace mmfs {

using nlohmann::json;

namespace {

constexpr const char* kMagic = "MMFSFEAT 1";

uint32_t to_little_endian(uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

std::string encode_feature_file(const VideoRecord& video) {
  json header;
  header["video_id"] = video.video_id;
  header["T"] = video.length();
  header["D_raw"] = video.raw_dim();
  header["time_unit"] = "snippet";
  json anns = json::array();
  for (const auto& a : video.annotations) {
    anns.push_back({{"start", a.start}, {"end", a.end}, {"class", a.class_id}});
  }
  header["annotations"] = anns;

  std::string out = std::string(kMagic) + "\n" + header.dump() + "\n";
  const size_t offset = out.size();
  const size_t n = static_cast<size_t>(video.features.size());
  out.resize(offset + n * 4);
  size_t k = 0;
  for (Index i = 0; i < video.features.rows(); ++i) {
    for (Index j = 0; j < video.features.cols(); ++j) {
      const uint32_t bits = to_little_endian(std::bit_cast<uint32_t>(video.features(i, j)));
      std::memcpy(out.data() + offset + 4 * k++, &bits, 4);
    }
  }
  return out;
}

VideoRecord decode_feature_file(const std::string& bytes) {
  const size_t l1 = bytes.find('\n');
  if (l1 == std::string::npos || bytes.compare(0, l1, kMagic) != 0) {
    throw DataError("feature file: missing '" + std::string(kMagic) + "' magic line");
  }
  const size_t l2 = bytes.find('\n', l1 + 1);
  if (l2 == std::string::npos) throw DataError("feature file: truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(l1 + 1, l2 - l1 - 1));
  } catch (const json::exception& e) {
    throw DataError(std::string("feature file: bad header: ") + e.what());
  }

  VideoRecord v;
  Index rows = 0;
  Index cols = 0;
  std::string unit = "snippet";
  int stride = kDefaultFrameStride;
  try {
    v.video_id = header.at("video_id").get<std::string>();
    rows = header.at("T").get<Index>();
    cols = header.at("D_raw").get<Index>();
    if (header.contains("time_unit")) unit = header["time_unit"].get<std::string>();
    if (header.contains("frame_stride")) stride = header["frame_stride"].get<int>();
    for (const auto& a : header.at("annotations")) {
      v.annotations.push_back(
          {a.at("start").get<double>(), a.at("end").get<double>(), a.at("class").get<int>()});
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("feature file: header field error: ") + e.what());
  }
  if (rows < 1 || cols < 1) throw DataError("feature file '" + v.video_id + "': empty matrix");
  if (unit == "frame") {
    if (stride < 1) throw DataError("feature file: frame_stride must be positive");
    for (auto& a : v.annotations) {
      a.start = std::floor(a.start / stride);
      a.end = std::max(a.start + 1.0, std::ceil(a.end / stride));
      a.end = std::min(a.end, static_cast<double>(rows));
    }
  } else if (unit != "snippet") {
    throw DataError("feature file: unknown time_unit '" + unit + "'");
  }

  const size_t expected = static_cast<size_t>(rows * cols) * 4;
  if (bytes.size() - (l2 + 1) != expected) {
    throw DataError("feature file '" + v.video_id + "': payload has " +
                    std::to_string(bytes.size() - (l2 + 1)) + " bytes, expected " +
                    std::to_string(expected));
  }
  v.features.resize(rows, cols);
  const char* p = bytes.data() + l2 + 1;
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      uint32_t bits = 0;
      std::memcpy(&bits, p, 4);
      p += 4;
      v.features(i, j) = std::bit_cast<float>(to_little_endian(bits));
    }
  }
  if (!v.features.allFinite()) throw DataError("feature file '" + v.video_id + "': non-finite values");
  return v;
}

void write_feature_file(const std::filesystem::path& path, const VideoRecord& video) {
  write_text_file(path, encode_feature_file(video));
}

VideoRecord read_feature_file(const std::filesystem::path& path) {
  return decode_feature_file(read_text_file(path));
}

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  json j;
  j["format"] = "mmfs-dataset";
  j["version"] = 1;
  j["class_names"] = dataset.class_names;
  j["base"] = dataset.split.base;
  j["validation"] = dataset.split.validation;
  j["novel"] = dataset.split.novel;
  json ids = json::array();
  for (const auto& v : dataset.videos) ids.push_back(v.video_id);
  j["videos"] = ids;
  write_text_file(dir / "split.json", j.dump(2) + "\n");
  for (const auto& v : dataset.videos) write_feature_file(dir / "videos" / (v.video_id + ".feat"), v);
}

Dataset read_dataset(const std::filesystem::path& dir) {
  json j;
  try {
    j = json::parse(read_text_file(dir / "split.json"));
  } catch (const json::parse_error& e) {
    throw DataError((dir / "split.json").string() + ": " + e.what());
  }
  Dataset ds;
  try {
    ds.class_names = j.at("class_names").get<std::vector<std::string>>();
    ds.split.base = j.at("base").get<std::vector<int>>();
    ds.split.validation = j.at("validation").get<std::vector<int>>();
    ds.split.novel = j.at("novel").get<std::vector<int>>();
    for (const auto& id : j.at("videos")) {
      ds.videos.push_back(read_feature_file(dir / "videos" / (id.get<std::string>() + ".feat")));
    }
  } catch (const json::exception& e) {
    throw DataError((dir / "split.json").string() + ": " + e.what());
  }
  validate(ds.split, ds.num_classes());
  for (const auto& v : ds.videos) validate(v, ds.num_classes());
  return ds;
}

}  // namespace mmfs
