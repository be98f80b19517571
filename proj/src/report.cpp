// SPDX-License-Identifier: Apache-2.0

#include "mmfs/report.hpp"

#include <cstdio>
#include <map>
#include <set>

#include "mmfs/config.hpp"
#include "mmfs/errors.hpp"

namespace mmfs {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

ojson report_to_json(const EvalReport& r) {
  ojson j;
  j["mode"] = r.mode;
  j["episodes"] = r.episodes;
  j["config_hash"] = hash_hex(r.config_hash);
  j["tious"] = r.tious;
  j["map"] = r.ap;
  j["average_map"] = r.average;
  return j;
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  try {
    r.mode = j.at("mode").get<std::string>();
    r.episodes = j.at("episodes").get<int>();
    r.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    r.tious = j.at("tious").get<std::vector<double>>();
    r.ap = j.at("map").get<std::vector<double>>();
    r.average = j.at("average_map").get<double>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
  if (r.tious.size() != r.ap.size()) throw DataError("malformed report: tious and map differ in length");
  return r;
}

ojson pr_curves_to_json(const EvalReport& r) {
  ojson out = ojson::array();
  for (size_t i = 0; i < r.pr_curves.size() && i < r.tious.size(); ++i) {
    for (const auto& [cls, pts] : r.pr_curves[i]) {
      ojson c;
      c["tiou"] = r.tious[i];
      c["class"] = cls;
      ojson rec = ojson::array(), prec = ojson::array();
      for (const auto& p : pts) {
        rec.push_back(p.recall);
        prec.push_back(p.precision);
      }
      c["recall"] = rec;
      c["precision"] = prec;
      out.push_back(c);
    }
  }
  return out;
}

std::string format_report(const EvalReport& r) {
  std::string head = "mode    ", row;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-8s", r.mode.c_str());
  row = buf;
  for (size_t i = 0; i < r.tious.size(); ++i) {
    std::snprintf(buf, sizeof(buf), " mAP@%-5.2f", r.tious[i]);
    head += buf;
    std::snprintf(buf, sizeof(buf), " %-9.4f", r.ap[i]);
    row += buf;
  }
  std::snprintf(buf, sizeof(buf), " %-9.4f", r.average);
  head += " avg      ";
  row += buf;
  std::snprintf(buf, sizeof(buf), "\nepisodes: %d  config: %s\n", r.episodes, hash_hex(r.config_hash).c_str());
  return head + "\n" + row + buf;
}

namespace {

int class_id_of(const json& c, const std::map<std::string, int>& ids, size_t num_classes) {
  if (c.is_string()) {
    const auto it = ids.find(c.get<std::string>());
    if (it == ids.end()) throw DataError("unknown class '" + c.get<std::string>() + "' in predictions");
    return it->second;
  }
  const int id = c.get<int>();
  if (id < 0 || id >= static_cast<int>(num_classes)) {
    throw DataError("class id " + std::to_string(id) + " out of range in predictions");
  }
  return id;
}

const std::string& name_of(int id, const std::vector<std::string>& names) {
  if (id < 0 || id >= static_cast<int>(names.size())) {
    throw DataError("detection class " + std::to_string(id) + " has no name");
  }
  return names[static_cast<size_t>(id)];
}

}  // namespace

std::string encode_predictions(const PredictionFile& file, const std::vector<std::string>& class_names) {
  ojson videos = ojson::array();
  for (const auto& rec : file.videos) {
    ojson v;
    v["video_id"] = rec.video_id;
    if (rec.episode >= 0) v["episode"] = rec.episode;
    ojson segs = ojson::array();
    for (const auto& d : rec.segments) {
      segs.push_back(ojson{{"start", d.start},
                           {"end", d.end},
                           {"class", name_of(d.class_id, class_names)},
                           {"score", d.score}});
    }
    v["segments"] = segs;
    videos.push_back(v);
  }
  ojson out{{"videos", videos}};
  if (!file.episode_classes.empty()) {
    ojson eps = ojson::array();
    for (const auto& [ep, classes] : file.episode_classes) {
      ojson names = ojson::array();
      for (int c : classes) names.push_back(name_of(c, class_names));
      eps.push_back(ojson{{"episode", ep}, {"classes", names}});
    }
    out["episodes"] = eps;
  }
  return out.dump(1) + "\n";
}

PredictionFile decode_predictions(const std::string& text, const std::vector<std::string>& class_names) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("predictions are not valid JSON: ") + e.what());
  }
  std::map<std::string, int> ids;
  for (size_t i = 0; i < class_names.size(); ++i) ids[class_names[i]] = static_cast<int>(i);
  PredictionFile out;
  try {
    for (const auto& v : j.at("videos")) {
      PredictionRecord rec;
      rec.video_id = v.at("video_id").get<std::string>();
      rec.episode = v.value("episode", -1);
      for (const auto& s : v.at("segments")) {
        Detection d;
        d.start = s.at("start").get<double>();
        d.end = s.at("end").get<double>();
        d.score = s.at("score").get<double>();
        d.class_id = class_id_of(s.at("class"), ids, class_names.size());
        if (!(d.end > d.start)) throw DataError("segment with end <= start for video '" + rec.video_id + "'");
        rec.segments.push_back(d);
      }
      out.videos.push_back(std::move(rec));
    }
    if (j.contains("episodes")) {
      for (const auto& e : j.at("episodes")) {
        auto& classes = out.episode_classes[e.at("episode").get<int>()];
        for (const auto& c : e.at("classes")) classes.push_back(class_id_of(c, ids, class_names.size()));
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed predictions: ") + e.what());
  }
  return out;
}

std::vector<Detection> to_native_units(const std::vector<Detection>& dets, Index video_length, Index length) {
  const double s = static_cast<double>(video_length) / static_cast<double>(length);
  std::vector<Detection> out = dets;
  for (auto& d : out) {
    d.start *= s;
    d.end *= s;
  }
  return out;
}

EvalReport score_predictions(const PredictionFile& file, const Dataset& data, const std::vector<double>& tious,
                             bool keep_curves) {
  std::map<int, std::vector<const PredictionRecord*>> groups;
  for (const auto& r : file.videos) groups[r.episode].push_back(&r);
  if (groups.empty()) throw DataError("no prediction records to score");

  EvalReport mean;
  mean.mode = "external";
  mean.tious = tious;
  mean.ap.assign(tious.size(), 0.0);
  const bool single = groups.size() == 1;
  for (const auto& [episode, recs] : groups) {
    VideoDetections preds;
    VideoAnnotations gt;
    std::set<int> annotated;
    for (const auto* r : recs) {
      const VideoRecord* v = data.find(r->video_id);
      if (!v) throw DataError("predictions name unknown video '" + r->video_id + "'");
      auto& slot = preds[r->video_id];
      slot.insert(slot.end(), r->segments.begin(), r->segments.end());
      gt[r->video_id] = v->annotations;
      for (const auto& a : v->annotations) annotated.insert(a.class_id);
    }
    const auto listed = file.episode_classes.find(episode);
    const std::vector<int> classes =
        listed != file.episode_classes.end() ? listed->second : std::vector<int>(annotated.begin(), annotated.end());
    const EvalReport r = evaluate_map(preds, gt, classes, tious, keep_curves && single);
    for (size_t i = 0; i < tious.size(); ++i) mean.ap[i] += r.ap[i];
    mean.average += r.average;
    if (single) mean.pr_curves = r.pr_curves;
  }
  const double n = static_cast<double>(groups.size());
  for (auto& a : mean.ap) a /= n;
  mean.average /= n;
  mean.episodes = static_cast<int>(groups.size());
  return mean;
}

}  // namespace mmfs
