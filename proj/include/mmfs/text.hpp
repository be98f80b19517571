// SPDX-License-Identifier: Apache-2.0
//
// Word-level tokenizer over a small fixed vocabulary. Out-of-vocabulary words
// fall back to one token per character.

#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mmfs {

/// Lowercased alphanumeric words of `text`.
std::vector<std::string> split_words(std::string_view text);

class Vocabulary {
 public:
  /// The built-in vocabulary: action words, character fallbacks, end-of-text.
  static const Vocabulary& builtin();

  explicit Vocabulary(std::vector<std::string> words);

  /// Token ids of `text`, without the end-of-text marker. Throws DataError on
  /// text with no tokenizable characters.
  std::vector<int> encode(std::string_view text) const;

  int end_of_text() const { return eot_; }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const { return tokens_.at(static_cast<size_t>(id)); }
  bool contains_word(const std::string& w) const { return ids_.count(w) != 0; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
  int eot_ = -1;
};

}  // namespace mmfs
