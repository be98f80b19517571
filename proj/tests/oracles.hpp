// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used to check the optimized code:
// list-based SoftNMS and a brute-force precision/recall computation.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mmfs/inference.hpp"

namespace mmfs::oracle {

inline double iou(double a0, double a1, double b0, double b1) {
  const double lo = std::max(a0, b0), hi = std::min(a1, b1);
  const double inter = hi > lo ? hi - lo : 0.0;
  const double uni = (a1 - a0) + (b1 - b0) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// Pop the best remaining proposal, decay the rest of its class, drop what
/// fell under the floor; repeat. Ties go to the earlier proposal.
inline std::vector<Detection> soft_nms(std::vector<Detection> pool, double sigma, double floor) {
  std::vector<Detection> kept;
  while (!pool.empty()) {
    auto best = pool.begin();
    for (auto it = pool.begin(); it != pool.end(); ++it) {
      if (it->score > best->score) best = it;
    }
    const Detection top = *best;
    pool.erase(best);
    if (top.score < floor) continue;
    kept.push_back(top);
    std::vector<Detection> rest;
    for (Detection d : pool) {
      if (d.class_id == top.class_id) {
        const double o = iou(d.start, d.end, top.start, top.end);
        d.score *= std::exp(-(o * o) / sigma);
        if (d.score < floor) continue;
      }
      rest.push_back(d);
    }
    pool = rest;
  }
  return kept;
}

struct Scored {
  std::string video;
  Detection det;
};

/// True-positive count of the first `k` ranked predictions, matched from
/// scratch: each takes the unmatched ground truth of highest IoU ≥ tiou.
inline int prefix_true_positives(const std::vector<Scored>& ranked, size_t k, const VideoAnnotations& gt, int cls,
                                 double tiou) {
  std::set<std::pair<std::string, size_t>> taken;
  int tp = 0;
  for (size_t i = 0; i < k; ++i) {
    const auto it = gt.find(ranked[i].video);
    if (it == gt.end()) continue;
    double best = -1.0;
    size_t pick = 0;
    bool found = false;
    for (size_t g = 0; g < it->second.size(); ++g) {
      const auto& a = it->second[g];
      if (a.class_id != cls || taken.count({ranked[i].video, g})) continue;
      const double o = iou(ranked[i].det.start, ranked[i].det.end, a.start, a.end);
      if (o >= tiou && o > best) {
        best = o;
        pick = g;
        found = true;
      }
    }
    if (found) {
      taken.insert({ranked[i].video, pick});
      ++tp;
    }
  }
  return tp;
}

/// AP = Σ_k (r_k − r_{k−1}) · max_{j ≥ k} p_j over the ranked predictions.
inline double class_ap(const VideoDetections& preds, const VideoAnnotations& gt, int cls, double tiou, int* n_gt) {
  int total = 0;
  for (const auto& [v, anns] : gt) {
    for (const auto& a : anns) total += a.class_id == cls;
  }
  *n_gt = total;
  if (total == 0) return 0.0;
  std::vector<Scored> ranked;
  for (const auto& [v, dets] : preds) {
    for (const auto& d : dets) {
      if (d.class_id == cls) ranked.push_back({v, d});
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Scored& a, const Scored& b) { return a.det.score > b.det.score; });
  const size_t n = ranked.size();
  std::vector<double> p(n), r(n);
  for (size_t k = 1; k <= n; ++k) {
    const int tp = prefix_true_positives(ranked, k, gt, cls, tiou);
    p[k - 1] = static_cast<double>(tp) / static_cast<double>(k);
    r[k - 1] = static_cast<double>(tp) / static_cast<double>(total);
  }
  double ap = 0.0, prev = 0.0;
  for (size_t k = 0; k < n; ++k) {
    if (r[k] > prev) {
      ap += (r[k] - prev) * *std::max_element(p.begin() + static_cast<long>(k), p.end());
      prev = r[k];
    }
  }
  return ap;
}

/// Mean over the listed classes that have ground truth.
inline double mean_ap(const VideoDetections& preds, const VideoAnnotations& gt, const std::vector<int>& classes,
                      double tiou) {
  double sum = 0.0;
  int counted = 0;
  for (int c : classes) {
    int n = 0;
    const double ap = class_ap(preds, gt, c, tiou, &n);
    if (n > 0) {
      sum += ap;
      ++counted;
    }
  }
  return counted ? sum / counted : 0.0;
}

/// Random small detection problem on a 20-snippet timeline with distinct scores.
template <class R>
void random_case(R& rng, int videos, int classes, VideoDetections* preds, VideoAnnotations* gt) {
  std::vector<double> scores;
  for (int v = 0; v < videos; ++v) {
    const std::string id = "v" + std::to_string(v);
    const int n_gt = static_cast<int>(rng.uniform_int(0, 3));
    for (int i = 0; i < n_gt; ++i) {
      const double s = static_cast<double>(rng.uniform_int(0, 15));
      (*gt)[id].push_back({s, s + static_cast<double>(rng.uniform_int(1, 5)), static_cast<int>(rng.uniform_int(0, classes - 1))});
    }
    const int n_pred = static_cast<int>(rng.uniform_int(0, 5));
    for (int i = 0; i < n_pred; ++i) {
      const double s = rng.uniform(0.0, 16.0);
      (*preds)[id].push_back({s, s + rng.uniform(0.5, 6.0), static_cast<int>(rng.uniform_int(0, classes - 1)),
                              rng.uniform()});
    }
  }
}

}  // namespace mmfs::oracle
