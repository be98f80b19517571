// SPDX-License-Identifier: Apache-2.0

#include "mmfs/text.hpp"

#include <cctype>

#include "mmfs/errors.hpp"

namespace mmfs {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

const Vocabulary& Vocabulary::builtin() {
  static const Vocabulary vocab({
      "a",       "an",       "the",      "of",      "person",   "doing",    "playing",
      "video",   "action",   "cricket",  "shot",    "long",     "high",     "jump",
      "pole",    "vault",    "tennis",   "golf",    "swing",    "cliff",    "diving",
      "rope",    "climbing", "put",      "discus",  "throw",    "javelin",  "hammer",
      "rock",    "springboard", "baseball", "pitch", "volleyball", "spiking", "running",
      "walking", "swimming", "riding",   "horse",   "bike",     "skiing",   "surfing",
      "dancing", "boxing",   "kicking",  "ball",    "soccer",   "basketball", "dunk",
      "archery", "bowling",  "fencing",  "rowing",  "kayaking", "skating",  "juggling"});
  return vocab;
}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  for (auto& w : words) {
    if (ids_.count(w) != 0) continue;
    ids_.emplace(w, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(w));
  }
  for (char c = 'a'; c <= 'z'; ++c) {
    const std::string t = std::string("#") + c;
    ids_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(t);
  }
  for (char c = '0'; c <= '9'; ++c) {
    const std::string t = std::string("#") + c;
    ids_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(t);
  }
  eot_ = static_cast<int>(tokens_.size());
  tokens_.push_back("<eot>");
  ids_.emplace("<eot>", eot_);
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) {
    auto it = ids_.find(w);
    if (it != ids_.end()) {
      ids.push_back(it->second);
      continue;
    }
    for (char c : w) ids.push_back(ids_.at(std::string("#") + c));
  }
  if (ids.empty()) throw DataError("class name '" + std::string(text) + "' has no tokens");
  return ids;
}

}  // namespace mmfs
