// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <numeric>
#include <set>

#include "mmfs/episode.hpp"
#include "mmfs/errors.hpp"
#include "mmfs/feature_io.hpp"
#include "mmfs/text.hpp"
#include "support.hpp"

using namespace mmfs;
using namespace mmfs::testing;

TEST_CASE("class splits follow the ratios") {
  const ClassSplit s = split_classes(10, {0.8, 0.1, 0.1}, 3);
  CHECK(s.base.size() == 8);
  CHECK(s.validation.size() == 1);
  CHECK(s.novel.size() == 1);
  const ClassSplit d = split_classes(10, {}, 3);
  CHECK(d.base.size() == 6);
  CHECK(d.validation.size() == 1);
  CHECK(d.novel.size() == 3);
  std::set<int> all(d.base.begin(), d.base.end());
  all.insert(d.validation.begin(), d.validation.end());
  all.insert(d.novel.begin(), d.novel.end());
  CHECK(all.size() == 10);  // disjoint and complete
  CHECK_THROWS_AS(split_classes(10, {0.1, 0.0, 0.9}, 3), ConfigError);
}

TEST_CASE("synthetic generation is deterministic per seed") {
  const SynthConfig cfg = tiny_data();
  const Dataset a = generate_synthetic_dataset(cfg, 5);
  const Dataset b = generate_synthetic_dataset(cfg, 5);
  const Dataset c = generate_synthetic_dataset(cfg, 6);
  REQUIRE(a.videos.size() == b.videos.size());
  bool all_equal = true;
  for (size_t i = 0; i < a.videos.size(); ++i) {
    all_equal = all_equal && encode_feature_file(a.videos[i]) == encode_feature_file(b.videos[i]);
  }
  CHECK(all_equal);
  CHECK(encode_feature_file(a.videos[0]) != encode_feature_file(c.videos[0]));
}

TEST_CASE("annotations mark exactly the planted segments") {
  SynthConfig cfg = tiny_data();
  cfg.raw_dim = 32;
  cfg.noise = 0.0;  // foreground rows carry the pattern, background rows are zero
  const Dataset ds = generate_synthetic_dataset(cfg, 2);
  CHECK(ds.num_classes() == 10);
  CHECK(ds.videos.size() == 50);
  for (const auto& v : ds.videos) {
    validate(v, ds.num_classes());
    REQUIRE_FALSE(v.annotations.empty());
    const auto mask = gt_to_mask(v.annotations, v.annotations.front().class_id, v.length());
    for (Index t = 0; t < v.length(); ++t) {
      const bool planted = v.features.row(t).norm() > 0.0f;
      CHECK(planted == (mask(t) == 1.0));
    }
  }
}

TEST_CASE("synthetic config validation names the field") {
  SynthConfig cfg;
  cfg.actionness = 1.5;
  CHECK_THROWS_WITH_AS(validate(cfg), doctest::Contains("actionness"), ConfigError);
  cfg = SynthConfig{};
  cfg.split = {0.5, 0.5, 0.5};
  CHECK_THROWS_AS(validate(cfg), ConfigError);
}

TEST_CASE("temporal rescaling") {
  SUBCASE("T = L is the identity") {
    Rng rng(1);
    const Mat x = rng.normal_matrix(7, 3);
    CHECK(rescale_features(x, 7).data == x);
  }
  SUBCASE("two rows to three: the middle row is the midpoint") {
    Mat x(2, 2);
    x << 0, 0, 1, 1;
    const Mat y = rescale_features(x, 3).data;
    CHECK(y(1, 0) == doctest::Approx(0.5));
    CHECK(y(0, 0) == 0.0);
    CHECK(y(2, 1) == 1.0);
  }
  SUBCASE("600 snippets to 100") {
    CHECK(rescale_features(Mat(Mat::Ones(600, 4)), 100).length() == 100);
  }
  SUBCASE("annotations snap to the new grid and stay non-empty") {
    const auto r = rescale_annotations({{20, 40, 3}, {599, 600, 1}}, 600, 100);
    CHECK(r[0] == SegmentAnnotation{3, 7, 3});
    CHECK(r[1].end - r[1].start >= 1.0);
    CHECK(r[1].end <= 100.0);
  }
}

TEST_CASE("ground-truth masks and snippet labels") {
  const Eigen::VectorXd m = gt_to_mask({{2, 5, 0}}, 0, 8);
  Eigen::VectorXd expected(8);
  expected << 0, 0, 1, 1, 1, 0, 0, 0;
  CHECK(m == expected);
  CHECK(gt_to_mask({}, 0, 8).sum() == 0.0);
  // Overlapping segments of one class: union, checked snippet by snippet.
  const std::vector<SegmentAnnotation> two{{1, 4, 2}, {3, 7, 2}, {5, 6, 1}};
  const Eigen::VectorXd u = gt_to_mask(two, 2, 10);
  for (Index t = 0; t < 10; ++t) {
    const bool inside = (t >= 1 && t < 4) || (t >= 3 && t < 7);
    CHECK(u(t) == (inside ? 1.0 : 0.0));
  }
  const auto labels = snippet_labels(two, {2, 1}, 10);
  CHECK(labels[0] == 2);  // background = number of episode classes
  CHECK(labels[1] == 0);
  CHECK(labels[5] == 1);  // later segment wins
  CHECK(labels[6] == 0);
}

TEST_CASE("feature files round-trip and reject corruption") {
  VideoRecord v;
  v.video_id = "clip";
  v.features = MatF::Random(5, 3);
  v.annotations = {{1, 3, 0}};
  const std::string bytes = encode_feature_file(v);
  const VideoRecord back = decode_feature_file(bytes);
  CHECK(back.video_id == "clip");
  CHECK(back.features == v.features);
  CHECK(back.annotations == v.annotations);
  CHECK_THROWS_AS(decode_feature_file(bytes.substr(0, bytes.size() - 1)), DataError);
  CHECK_THROWS_AS(decode_feature_file("nonsense"), DataError);
}

TEST_CASE("feature files in frame units are converted to snippets") {
  const std::string header =
      "MMFSFEAT 1\n{\"video_id\":\"f\",\"T\":4,\"D_raw\":1,\"time_unit\":\"frame\",\"frame_stride\":6,"
      "\"annotations\":[{\"start\":6,\"end\":17,\"class\":0}]}\n";
  const VideoRecord v = decode_feature_file(header + std::string(16, '\0'));
  REQUIRE(v.annotations.size() == 1);
  CHECK(v.annotations[0].start == 1.0);
  CHECK(v.annotations[0].end == 3.0);
}

TEST_CASE("dataset directories round-trip byte for byte") {
  const auto dir = std::filesystem::temp_directory_path() / "mmfs_test_dataset";
  std::filesystem::remove_all(dir);
  const Dataset ds = generate_synthetic_dataset(tiny_data(), 9);
  write_dataset(dir, ds);
  const Dataset back = read_dataset(dir);
  CHECK(back.class_names == ds.class_names);
  CHECK(back.split.novel == ds.split.novel);
  REQUIRE(back.videos.size() == ds.videos.size());
  CHECK(back.videos[3].features == ds.videos[3].features);
  const std::string first = read_text_file(dir / "videos" / (ds.videos[0].video_id + ".feat"));
  write_dataset(dir, ds);
  CHECK(read_text_file(dir / "videos" / (ds.videos[0].video_id + ".feat")) == first);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(read_dataset(dir), DataError);
}

TEST_CASE("episodes: sizes, disjointness and replay") {
  const Dataset ds = generate_synthetic_dataset(tiny_data(), 4);
  SUBCASE("N = 5, K = 5 gives 25 support and 5 query videos") {
    SynthConfig big = tiny_data();
    big.videos_per_class = 7;
    const Dataset d7 = generate_synthetic_dataset(big, 4);
    std::vector<int> all(10);
    std::iota(all.begin(), all.end(), 0);
    Rng rng(1);
    const Episode ep = sample_episode(d7, all, 5, 5, rng);
    size_t support = 0;
    std::set<const VideoRecord*> seen;
    for (size_t c = 0; c < ep.support.size(); ++c) {
      support += ep.support[c].size();
      for (const auto* v : ep.support[c]) {
        CHECK(v->contains_class(ep.class_ids[c]));
        seen.insert(v);
      }
      CHECK(ep.query[c]->contains_class(ep.class_ids[c]));
      seen.insert(ep.query[c]);
    }
    CHECK(support == 25);
    CHECK(ep.query.size() == 5);
    CHECK(seen.size() == 30);
  }
  SUBCASE("N = 1, K = 1") {
    Rng rng(2);
    const Episode ep = sample_episode(ds, ds.split.base, 1, 1, rng);
    CHECK(ep.way() == 1);
    CHECK(ep.shots() == 1);
    CHECK(ep.query.size() == 1);
  }
  SUBCASE("fixed seed replays the same episode") {
    const EpisodeStream a(ds, ds.split.base, 3, 2, 250, 17), b(ds, ds.split.base, 3, 2, 250, 17);
    CHECK(std::distance(a.begin(), a.end()) == 250);
    for (int i : {0, 7, 249}) CHECK(episode_manifest(a.at(i), i) == episode_manifest(b.at(i), i));
    CHECK(episode_manifest(a.at(0)) != episode_manifest(a.at(1)));
    const EpisodeStream meta(ds, ds.split.base, 3, 2, 1000, 17);
    CHECK(meta.size() == 1000);
  }
  SUBCASE("impossible requests raise typed errors") {
    Rng rng(3);
    CHECK_THROWS_AS(sample_episode(ds, ds.split.validation, 2, 1, rng), InsufficientClassPool);
    try {
      sample_episode(ds, ds.split.base, 1, 10, rng);
      FAIL("expected InsufficientVideos");
    } catch (const InsufficientVideos& e) {
      CHECK(e.class_id() >= 0);
    }
  }
  SUBCASE("zero shots gives a query-only episode") {
    Rng rng(4);
    const Episode ep = sample_episode(ds, ds.split.novel, 3, 0, rng);
    CHECK(ep.shots() == 0);
    CHECK(ep.query.size() == 3);
  }
}

TEST_CASE("word-level tokenizer") {
  const Vocabulary& v = Vocabulary::builtin();
  CHECK(v.encode("cricket shot").size() == 2);
  CHECK(v.encode("Cricket  SHOT!") == v.encode("cricket shot"));
  CHECK(split_words("long-jump, 2x") == std::vector<std::string>{"long", "jump", "2x"});
  CHECK(v.encode("zzqx").size() == 4);  // out of vocabulary: one token per character
  CHECK_THROWS_AS(v.encode("  !! "), DataError);
  CHECK(v.end_of_text() >= 0);
}
