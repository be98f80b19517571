// SPDX-License-Identifier: Apache-2.0

#include "mmfs/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include <spdlog/spdlog.h>

#include "mmfs/errors.hpp"

namespace mmfs {

double segment_iou(double a0, double a1, double b0, double b1) {
  const double inter = std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
  const double uni = (a1 - a0) + (b1 - b0) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double segment_iou(const Detection& a, const Detection& b) {
  return segment_iou(a.start, a.end, b.start, b.end);
}

std::vector<Detection> decode_detections(const Mat& probs, const Mat& masks,
                                         const std::vector<double>& thresholds, int top_k) {
  const Index length = probs.cols();
  const Index classes = probs.rows() - 1;
  if (classes < 1) throw ShapeError("class probabilities need at least one foreground row");
  if (masks.rows() != length || masks.cols() != length) {
    throw ShapeError("mask map must be " + std::to_string(length) + "×" + std::to_string(length));
  }
  if (thresholds.empty()) throw ConfigError("eval.thresholds must not be empty");
  if (top_k < 1) throw ConfigError("eval.top_k must be at least 1");

  std::vector<Index> order(static_cast<size_t>(length));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> fg(static_cast<size_t>(length));
  std::vector<int> best(static_cast<size_t>(length));
  for (Index t = 0; t < length; ++t) {
    Index c = 0;
    fg[static_cast<size_t>(t)] = probs.col(t).head(classes).maxCoeff(&c);
    best[static_cast<size_t>(t)] = static_cast<int>(c);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return fg[static_cast<size_t>(a)] > fg[static_cast<size_t>(b)]; });
  order.resize(std::min<size_t>(order.size(), static_cast<size_t>(top_k)));

  std::vector<Detection> out;
  for (Index t : order) {
    const auto m = masks.col(t);
    for (double theta : thresholds) {
      Index s = 0;
      while (s < length) {
        if (m(s) < theta) {
          ++s;
          continue;
        }
        Index e = s;
        while (e < length && m(e) >= theta) ++e;
        const double mean = m.segment(s, e - s).mean();
        out.push_back({static_cast<double>(s), static_cast<double>(e), best[static_cast<size_t>(t)],
                       fg[static_cast<size_t>(t)] * mean});
        s = e;
      }
    }
  }
  return out;
}

std::vector<Detection> soft_nms(std::vector<Detection> dets, double sigma, double score_floor) {
  if (!(sigma > 0.0)) throw ConfigError("eval.nms_sigma must be positive");
  std::vector<Detection> kept;
  std::vector<bool> alive(dets.size(), true);
  for (size_t round = 0; round < dets.size(); ++round) {
    size_t pick = dets.size();
    for (size_t i = 0; i < dets.size(); ++i) {
      if (alive[i] && (pick == dets.size() || dets[i].score > dets[pick].score)) pick = i;
    }
    if (pick == dets.size()) break;
    alive[pick] = false;
    if (dets[pick].score < score_floor) continue;
    kept.push_back(dets[pick]);
    for (size_t i = 0; i < dets.size(); ++i) {
      if (!alive[i] || dets[i].class_id != dets[pick].class_id) continue;
      const double iou = segment_iou(dets[i], dets[pick]);
      dets[i].score *= std::exp(-iou * iou / sigma);
      if (dets[i].score < score_floor) alive[i] = false;
    }
  }
  return kept;
}

double average_precision(const std::vector<double>& recall, const std::vector<double>& precision) {
  if (recall.size() != precision.size()) throw ShapeError("recall and precision lengths differ");
  std::vector<double> r{0.0}, p{0.0};
  r.insert(r.end(), recall.begin(), recall.end());
  p.insert(p.end(), precision.begin(), precision.end());
  r.push_back(1.0);
  p.push_back(0.0);
  for (size_t i = p.size() - 1; i-- > 0;) p[i] = std::max(p[i], p[i + 1]);
  double ap = 0.0;
  for (size_t i = 1; i < r.size(); ++i) {
    if (r[i] != r[i - 1]) ap += (r[i] - r[i - 1]) * p[i];
  }
  return ap;
}

namespace {

struct Candidate {
  const std::string* video;
  Detection det;
};

double class_ap(const VideoDetections& preds, const VideoAnnotations& gt, int cls, double tiou,
                size_t* num_gt, std::vector<PrPoint>* curve) {
  std::map<std::string, std::vector<SegmentAnnotation>> truth;
  size_t n = 0;
  for (const auto& [vid, anns] : gt) {
    for (const auto& a : anns) {
      if (a.class_id == cls) {
        truth[vid].push_back(a);
        ++n;
      }
    }
  }
  *num_gt = n;
  if (n == 0) return 0.0;

  std::vector<Candidate> cands;
  for (const auto& [vid, dets] : preds) {
    for (const auto& d : dets) {
      if (d.class_id == cls) cands.push_back({&vid, d});
    }
  }
  // Total order so the result does not depend on input order.
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.det.score != b.det.score) return a.det.score > b.det.score;
    if (*a.video != *b.video) return *a.video < *b.video;
    if (a.det.start != b.det.start) return a.det.start < b.det.start;
    return a.det.end < b.det.end;
  });

  std::map<std::string, std::vector<bool>> used;
  for (const auto& [vid, anns] : truth) used[vid].assign(anns.size(), false);
  std::vector<double> recall, precision;
  size_t tp = 0;
  for (size_t i = 0; i < cands.size(); ++i) {
    const auto it = truth.find(*cands[i].video);
    if (it != truth.end()) {
      auto& flags = used[it->first];
      int match = -1;
      double best = -1.0;
      for (size_t g = 0; g < it->second.size(); ++g) {
        if (flags[g]) continue;
        const double iou = segment_iou(cands[i].det.start, cands[i].det.end, it->second[g].start,
                                       it->second[g].end);
        if (iou >= tiou && iou > best) {
          best = iou;
          match = static_cast<int>(g);
        }
      }
      if (match >= 0) {
        flags[static_cast<size_t>(match)] = true;
        ++tp;
      }
    }
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    if (curve) curve->push_back({recall.back(), precision.back()});
  }
  return average_precision(recall, precision);
}

}  // namespace

EvalReport evaluate_map(const VideoDetections& preds, const VideoAnnotations& gt,
                        const std::vector<int>& classes, const std::vector<double>& tious,
                        bool keep_curves) {
  if (tious.empty()) throw ConfigError("eval.tious must not be empty");
  EvalReport r;
  r.tious = tious;
  r.episodes = 1;
  if (keep_curves) r.pr_curves.resize(tious.size());
  for (size_t j = 0; j < tious.size(); ++j) {
    double sum = 0.0;
    int counted = 0;
    for (int c : classes) {
      size_t num_gt = 0;
      std::vector<PrPoint>* curve = keep_curves ? &r.pr_curves[j][c] : nullptr;
      const double ap = class_ap(preds, gt, c, tious[j], &num_gt, curve);
      if (num_gt == 0) {
        if (j == 0) spdlog::warn("class {} has no ground truth; skipped from the mean", c);
        if (keep_curves) r.pr_curves[j].erase(c);
        continue;
      }
      sum += ap;
      ++counted;
    }
    r.ap.push_back(counted > 0 ? sum / counted : 0.0);
  }
  r.average = std::accumulate(r.ap.begin(), r.ap.end(), 0.0) / static_cast<double>(r.ap.size());
  return r;
}

const std::vector<int>& classes_of_split(const Dataset& data, const std::string& split) {
  if (split == "base") return data.split.base;
  if (split == "validation" || split == "val") return data.split.validation;
  if (split == "novel") return data.split.novel;
  throw UsageError("unknown split '" + split + "' (expected base, validation or novel)");
}

VideoDetections detect_episode(const MmfsModel& model, const Episode& episode, Mode mode,
                               const DecodeOptions& decode) {
  Tape tape;
  const EpisodeOutputs out = model.forward(tape, episode, mode, episode.query);
  VideoDetections dets;
  for (const auto& q : out.queries) {
    auto raw = decode_detections(q.probs.value(), q.masks.value(), decode.thresholds, decode.top_k);
    auto kept = soft_nms(std::move(raw), decode.nms_sigma, decode.score_floor);
    for (auto& d : kept) d.class_id = episode.class_ids[static_cast<size_t>(d.class_id)];
    auto& slot = dets[q.video->video_id];
    slot.insert(slot.end(), kept.begin(), kept.end());
  }
  return dets;
}

EvalReport run_protocol(const MmfsModel& model, const Dataset& data, const ProtocolOptions& opts,
                        uint64_t seed, std::vector<EpisodePredictions>* predictions) {
  if (opts.episodes < 1) throw ConfigError("eval.episodes must be at least 1");
  if (opts.workers < 1) throw UsageError("--workers must be at least 1");
  const auto& pool = classes_of_split(data, opts.split);
  const bool zs = opts.mode == Mode::kZS;
  const int way = zs ? static_cast<int>(pool.size()) : opts.way;
  const int shots = zs ? 0 : opts.shots;
  const EpisodeStream stream(data, pool, way, shots, opts.episodes, seed);
  const Index length = model.config().snippets;

  std::vector<EvalReport> reports(static_cast<size_t>(opts.episodes));
  std::vector<EpisodePredictions> preds(predictions ? reports.size() : 0);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (int i = next++; i < opts.episodes; i = next++) {
      try {
        const Episode ep = stream.at(i);
        VideoDetections dets = detect_episode(model, ep, opts.mode, opts.decode);
        VideoAnnotations gt;
        for (const auto* v : ep.query) gt[v->video_id] = rescale_annotations(v->annotations, v->length(), length);
        reports[static_cast<size_t>(i)] = evaluate_map(dets, gt, ep.class_ids, opts.tious);
        if (predictions) preds[static_cast<size_t>(i)] = {ep.class_ids, std::move(dets)};
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = opts.episodes;
      }
    }
  };
  if (opts.workers == 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < opts.workers; ++w) threads.emplace_back(work);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  EvalReport mean;
  mean.mode = to_string(opts.mode);
  mean.tious = opts.tious;
  mean.ap.assign(opts.tious.size(), 0.0);
  for (const auto& r : reports) {
    for (size_t j = 0; j < r.ap.size(); ++j) mean.ap[j] += r.ap[j];
    mean.average += r.average;
  }
  for (auto& a : mean.ap) a /= static_cast<double>(reports.size());
  mean.average /= static_cast<double>(reports.size());
  mean.episodes = opts.episodes;
  if (predictions) *predictions = std::move(preds);
  return mean;
}

}  // namespace mmfs
