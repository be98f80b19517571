// SPDX-License-Identifier: Apache-2.0
//
// N-way K-shot episode construction. Episodes reference videos owned by a
// Dataset, which must outlive them.

#pragma once

#include <cstdint>
#include <iterator>
#include <string>
#include <vector>

#include "mmfs/data.hpp"
#include "mmfs/random.hpp"

namespace mmfs {

struct Episode {
  std::vector<int> class_ids;
  std::vector<std::string> class_names;
  /// support[c][k]: k-th shot of episode class c.
  std::vector<std::vector<const VideoRecord*>> support;
  /// query[c]: the held-out video of episode class c.
  std::vector<const VideoRecord*> query;

  int way() const { return static_cast<int>(class_ids.size()); }
  int shots() const { return support.empty() ? 0 : static_cast<int>(support.front().size()); }
};

/// Samples `way` classes from `split` without replacement, then `shots`
/// support videos and one query video per class, never reusing a video.
/// `shots == 0` yields a query-only episode.
Episode sample_episode(const Dataset& dataset, const std::vector<int>& split, int way, int shots,
                       Rng& rng);

/// Indexable stream of episodes; episode i depends only on (seed, i).
class EpisodeStream {
 public:
  EpisodeStream(const Dataset& dataset, std::vector<int> split, int way, int shots, int count,
                uint64_t seed);

  Episode at(int index) const;
  int size() const { return count_; }

  class iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = Episode;
    using difference_type = std::ptrdiff_t;
    using pointer = void;
    using reference = Episode;

    iterator(const EpisodeStream* s, int i) : stream_(s), index_(i) {}
    Episode operator*() const { return stream_->at(index_); }
    iterator& operator++() {
      ++index_;
      return *this;
    }
    bool operator==(const iterator& o) const { return index_ == o.index_; }

   private:
    const EpisodeStream* stream_;
    int index_;
  };

  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, count_}; }

 private:
  const Dataset* dataset_;
  std::vector<int> split_;
  int way_;
  int shots_;
  int count_;
  uint64_t seed_;
};

/// Structured-text description of an episode for auditing.
std::string episode_manifest(const Episode& episode, int index = -1);

}  // namespace mmfs
