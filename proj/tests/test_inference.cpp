// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmfs/errors.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mmfs;
using namespace mmfs::testing;

TEST_CASE("segment IoU golden table") {
  struct Row {
    double a0, a1, b0, b1, expected;
  };
  const Row table[] = {
      {0, 10, 5, 15, 5.0 / 15.0}, {0, 10, 0, 10, 1.0}, {0, 10, 10, 20, 0.0}, {0, 10, 20, 30, 0.0},
      {0, 10, 2, 4, 0.2},         {2, 4, 0, 10, 0.2},  {0, 4, 1, 3, 0.5},    {0.5, 1.5, 1.0, 2.0, 1.0 / 3.0},
  };
  for (const Row& r : table) {
    CHECK(segment_iou(r.a0, r.a1, r.b0, r.b1) == doctest::Approx(r.expected).epsilon(1e-15));
    CHECK(segment_iou(r.a0, r.a1, r.b0, r.b1) == oracle::iou(r.a0, r.a1, r.b0, r.b1));
  }
}

TEST_CASE("detections are decoded from thresholded mask runs") {
  Mat probs = Mat::Zero(3, 6);  // 2 classes + background
  probs.row(2).setConstant(0.9);
  probs(0, 3) = 0.8;
  probs(2, 3) = 0.1;
  Mat masks = Mat::Constant(6, 6, 0.05);
  masks.col(3) << 0, 0, 1, 1, 1, 0;
  const auto dets = decode_detections(probs, masks, {0.5}, 1);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].start == 2.0);
  CHECK(dets[0].end == 5.0);
  CHECK(dets[0].class_id == 0);
  CHECK(dets[0].score == doctest::Approx(0.8));
  masks.col(3).setConstant(0.05);
  CHECK(decode_detections(probs, masks, {0.1, 0.5, 0.9}, 1).empty());
  CHECK_THROWS_AS(decode_detections(probs, Mat::Zero(5, 5), {0.5}, 1), ShapeError);
}

TEST_CASE("SoftNMS closed forms") {
  SUBCASE("disjoint segments keep their scores") {
    const auto kept = soft_nms({{0, 5, 0, 0.9}, {10, 15, 0, 0.7}}, 0.5, 0.001);
    REQUIRE(kept.size() == 2);
    CHECK(kept[1].score == 0.7);
  }
  SUBCASE("a duplicate decays by exp(−1/σ)") {
    const auto kept = soft_nms({{0, 5, 0, 0.9}, {0, 5, 0, 0.8}}, 0.5, 0.001);
    REQUIRE(kept.size() == 2);
    CHECK(kept[1].score == doctest::Approx(0.8 * std::exp(-2.0)).epsilon(1e-12));
    CHECK(kept[1].score == doctest::Approx(0.1083).epsilon(1e-3));
  }
  SUBCASE("other classes are untouched") {
    const auto kept = soft_nms({{0, 5, 0, 0.9}, {0, 5, 1, 0.8}}, 0.5, 0.001);
    CHECK(kept[1].score == 0.8);
  }
}

TEST_CASE("SoftNMS matches the reference and ignores input order") {
  Rng rng(21);
  for (int c = 0; c < 200; ++c) {
    const int n = static_cast<int>(rng.uniform_int(1, 6));
    std::vector<Detection> dets;
    for (int i = 0; i < n; ++i) {
      const double s = rng.uniform(0.0, 10.0);
      dets.push_back({s, s + rng.uniform(0.5, 5.0), static_cast<int>(rng.uniform_int(0, 1)), rng.uniform()});
    }
    const auto kept = soft_nms(dets, 0.5, 0.001);
    const auto ref = oracle::soft_nms(dets, 0.5, 0.001);
    REQUIRE(kept.size() == ref.size());
    for (size_t i = 0; i < kept.size(); ++i) CHECK(std::abs(kept[i].score - ref[i].score) <= 1e-9);
    std::vector<size_t> perm(dets.size());
    std::iota(perm.begin(), perm.end(), 0);
    while (std::next_permutation(perm.begin(), perm.end())) {
      std::vector<Detection> shuffled;
      for (size_t i : perm) shuffled.push_back(dets[i]);
      REQUIRE(soft_nms(shuffled, 0.5, 0.001) == kept);
    }
  }
}

TEST_CASE("average precision: hand-computed cases") {
  VideoAnnotations gt{{"a", {{0, 10, 0}}}};
  const VideoDetections one{{"a", {{0, 6, 0, 0.9}}}};  // IoU 0.6
  CHECK(evaluate_map(one, gt, {0}, {0.5}).ap[0] == 1.0);
  CHECK(evaluate_map(one, gt, {0}, {0.75}).ap[0] == 0.0);

  // 3 ground truths, 5 ranked predictions: TP FP TP FP TP.
  const VideoAnnotations gt3{{"a", {{0, 10, 0}, {20, 30, 0}}}, {"b", {{5, 15, 0}}}};
  const VideoDetections preds{{"a", {{0, 10, 0, 0.9}, {1, 10, 0, 0.8}, {50, 60, 0, 0.6}, {21, 30, 0, 0.5}}},
                              {"b", {{5, 14, 0, 0.7}}}};
  const double expected = 34.0 / 45.0;  // 1/3·1 + 1/3·2/3 + 1/3·3/5
  CHECK(evaluate_map(preds, gt3, {0}, {0.5}).ap[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(oracle::mean_ap(preds, gt3, {0}, 0.5) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("mAP matches brute-force precision/recall on random cases") {
  Rng rng(22);
  for (int c = 0; c < 100; ++c) {
    VideoDetections preds;
    VideoAnnotations gt;
    oracle::random_case(rng, 3, 2, &preds, &gt);
    const std::vector<double> tious{0.3, 0.5, 0.7};
    const EvalReport r = evaluate_map(preds, gt, {0, 1}, tious);
    for (size_t i = 0; i < tious.size(); ++i) {
      CHECK(std::abs(r.ap[i] - oracle::mean_ap(preds, gt, {0, 1}, tious[i])) <= 1e-9);
    }
  }
}

TEST_CASE("mAP does not depend on the order of predictions") {
  VideoAnnotations gt{{"a", {{0, 10, 0}}}};
  VideoDetections p1{{"a", {{0, 9, 0, 0.5}, {0, 10, 0, 0.5}}}};
  VideoDetections p2{{"a", {{0, 10, 0, 0.5}, {0, 9, 0, 0.5}}}};
  const auto r1 = evaluate_map(p1, gt, {0}, {0.95});
  const auto r2 = evaluate_map(p2, gt, {0}, {0.95});
  CHECK(r1.ap == r2.ap);
}

TEST_CASE("PR curves end at the final recall") {
  VideoAnnotations gt{{"a", {{0, 10, 0}, {20, 30, 0}}}};
  VideoDetections preds{{"a", {{0, 10, 0, 0.9}, {40, 50, 0, 0.5}}}};
  const EvalReport r = evaluate_map(preds, gt, {0, 1}, {0.5}, true);
  REQUIRE(r.pr_curves.size() == 1);
  REQUIRE(r.pr_curves[0].count(0) == 1);
  CHECK(r.pr_curves[0].count(1) == 0);  // no ground truth: skipped
  CHECK(r.pr_curves[0].at(0).back().recall == 0.5);
  CHECK(r.pr_curves[0].at(0).back().precision == 0.5);
}

namespace {

struct Fixture {
  Dataset data = generate_synthetic_dataset(tiny_data(), 3);
  MmfsModel model{tiny_model(), 4};
};

ProtocolOptions small_protocol(Mode mode, int episodes) {
  ProtocolOptions o;
  o.mode = mode;
  o.episodes = episodes;
  o.tious = {0.3, 0.5};
  return o;
}

}  // namespace

TEST_CASE("protocol results do not depend on the worker count") {
  Fixture f;
  auto opts = small_protocol(Mode::kMMFS, 6);
  const EvalReport one = run_protocol(f.model, f.data, opts, 11);
  opts.workers = 3;
  const EvalReport three = run_protocol(f.model, f.data, opts, 11);
  CHECK(one.ap == three.ap);
  CHECK(one.average == three.average);
  CHECK(run_protocol(f.model, f.data, opts, 11).ap == three.ap);
}

TEST_CASE("protocol averages per-episode mAP over the requested episodes") {
  Fixture f;
  const auto opts = small_protocol(Mode::kMMFS, 250);
  std::vector<EpisodePredictions> preds;
  const EvalReport r = run_protocol(f.model, f.data, opts, 12, &preds);
  CHECK(r.episodes == 250);
  REQUIRE(preds.size() == 250);
  const EpisodeStream stream(f.data, f.data.split.novel, opts.way, opts.shots, opts.episodes, 12);
  std::vector<double> sum(opts.tious.size(), 0.0);
  for (int i = 0; i < 250; ++i) {
    const Episode ep = stream.at(i);
    CHECK(preds[static_cast<size_t>(i)].class_ids == ep.class_ids);
    VideoAnnotations gt;
    for (const auto* v : ep.query) {
      gt[v->video_id] = rescale_annotations(v->annotations, v->length(), f.model.config().snippets);
    }
    for (size_t j = 0; j < opts.tious.size(); ++j) {
      sum[j] += oracle::mean_ap(preds[static_cast<size_t>(i)].detections, gt, ep.class_ids, opts.tious[j]);
    }
  }
  for (size_t j = 0; j < opts.tious.size(); ++j) CHECK(r.ap[j] == doctest::Approx(sum[j] / 250).epsilon(1e-9));
}

TEST_CASE("zero-shot episodes cover every class of the split") {
  Fixture f;
  std::vector<EpisodePredictions> preds;
  run_protocol(f.model, f.data, small_protocol(Mode::kZS, 3), 13, &preds);
  for (const auto& p : preds) {
    auto ids = p.class_ids;
    std::sort(ids.begin(), ids.end());
    auto novel = f.data.split.novel;
    std::sort(novel.begin(), novel.end());
    CHECK(ids == novel);
  }
}

TEST_CASE("protocol rejects bad options") {
  Fixture f;
  auto opts = small_protocol(Mode::kMMFS, 0);
  CHECK_THROWS_AS(run_protocol(f.model, f.data, opts, 1), ConfigError);
  opts.episodes = 1;
  opts.split = "train";
  CHECK_THROWS_AS(run_protocol(f.model, f.data, opts, 1), UsageError);
}
