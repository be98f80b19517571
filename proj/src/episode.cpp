// SPDX-License-Identifier: Apache-2.0

#include "mmfs/episode.hpp"

#include <set>

#include <json.hpp>

#include "mmfs/errors.hpp"

namespace mmfs {

Episode sample_episode(const Dataset& dataset, const std::vector<int>& split, int way, int shots,
                       Rng& rng) {
  if (way < 1) throw UsageError("episode way must be at least 1");
  if (shots < 0) throw UsageError("episode shots must be non-negative");
  if (static_cast<int>(split.size()) < way) {
    throw InsufficientClassPool("split has " + std::to_string(split.size()) +
                                " classes, episode needs " + std::to_string(way));
  }
  std::vector<int> classes = split;
  rng.shuffle(classes);
  classes.resize(static_cast<size_t>(way));

  Episode ep;
  std::set<const VideoRecord*> used;
  for (int c : classes) {
    std::vector<const VideoRecord*> candidates;
    for (const auto& v : dataset.videos) {
      if (v.contains_class(c) && used.count(&v) == 0) candidates.push_back(&v);
    }
    if (static_cast<int>(candidates.size()) < shots + 1) {
      const std::string name = c < dataset.num_classes()
                                   ? dataset.class_names[static_cast<size_t>(c)]
                                   : std::to_string(c);
      throw InsufficientVideos("class " + std::to_string(c) + " ('" + name + "') has " +
                                   std::to_string(candidates.size()) + " unused videos, needs " +
                                   std::to_string(shots + 1),
                               c);
    }
    rng.shuffle(candidates);
    std::vector<const VideoRecord*> support(candidates.begin(), candidates.begin() + shots);
    const VideoRecord* query = candidates[static_cast<size_t>(shots)];
    for (const auto* v : support) used.insert(v);
    used.insert(query);

    ep.class_ids.push_back(c);
    ep.class_names.push_back(c < dataset.num_classes() ? dataset.class_names[static_cast<size_t>(c)]
                                                       : std::to_string(c));
    ep.support.push_back(std::move(support));
    ep.query.push_back(query);
  }
  return ep;
}

EpisodeStream::EpisodeStream(const Dataset& dataset, std::vector<int> split, int way, int shots,
                             int count, uint64_t seed)
    : dataset_(&dataset), split_(std::move(split)), way_(way), shots_(shots), count_(count),
      seed_(seed) {
  if (count < 1) throw UsageError("episode count must be at least 1");
}

Episode EpisodeStream::at(int index) const {
  Rng rng(seed_, static_cast<uint64_t>(index));
  return sample_episode(*dataset_, split_, way_, shots_, rng);
}

std::string episode_manifest(const Episode& episode, int index) {
  nlohmann::json j;
  if (index >= 0) j["episode"] = index;
  j["way"] = episode.way();
  j["shots"] = episode.shots();
  nlohmann::json classes = nlohmann::json::array();
  for (int c = 0; c < episode.way(); ++c) {
    nlohmann::json support = nlohmann::json::array();
    for (const auto* v : episode.support[static_cast<size_t>(c)]) support.push_back(v->video_id);
    classes.push_back({{"class_id", episode.class_ids[static_cast<size_t>(c)]},
                       {"class_name", episode.class_names[static_cast<size_t>(c)]},
                       {"support", support},
                       {"query", episode.query[static_cast<size_t>(c)]->video_id}});
  }
  j["classes"] = classes;
  return j.dump();
}

}  // namespace mmfs
