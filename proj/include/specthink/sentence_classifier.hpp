// Copyright 2026 The Speculative Thinking Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "specthink/tokenizer.hpp"

namespace specthink {

enum class SentenceLabel { Statement, Affirmation, Reflection };

inline std::string_view to_string(SentenceLabel label) {
  switch (label) {
    case SentenceLabel::Statement: return "statement";
    case SentenceLabel::Affirmation: return "affirmation";
    case SentenceLabel::Reflection: return "reflection";
  }
  return "statement";
}

struct KeywordConfig {
  std::vector<std::string> reflection;
  std::vector<std::string> affirmation;
  std::vector<std::string> verification;
  bool case_sensitive = false;

  static KeywordConfig defaults() {
    return {
        {"wait", "alternatively", "hold on", "another", "verify", "think again",
         "recap", "check"},
        {"yeah", "yes", "final answer", "confident"},
        {"verify", "think again", "recap", "check"},
        false,
    };
  }
};

struct SentenceClass {
  SentenceLabel label = SentenceLabel::Statement;
  std::size_t affirmation_hits = 0;
  std::size_t reflection_hits = 0;

  bool operator==(const SentenceClass&) const = default;
};

// Words are maximal runs of word characters; hyphens, apostrophes and all
// other punctuation separate words.
inline std::vector<std::string> split_words(std::string_view text,
                                            bool case_sensitive) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_word_char(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && is_word_char(text[i])) ++i;
    if (i > start) {
      auto word = text.substr(start, i - start);
      words.push_back(case_sensitive ? std::string(word) : ascii_lower(word));
    }
  }
  return words;
}

/// Occurrences of `phrase` as a contiguous word sequence in `words`.
/// Overlapping occurrences each count.
inline std::size_t count_phrase(const std::vector<std::string>& words,
                                std::string_view phrase, bool case_sensitive) {
  auto needle = split_words(phrase, case_sensitive);
  if (needle.empty() || needle.size() > words.size()) return 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i + needle.size() <= words.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < needle.size() && match; ++j) {
      match = words[i + j] == needle[j];
    }
    if (match) ++hits;
  }
  return hits;
}

inline std::size_t count_keyword_hits(const std::vector<std::string>& words,
                                      const std::vector<std::string>& phrases,
                                      bool case_sensitive) {
  std::size_t hits = 0;
  for (const auto& p : phrases) hits += count_phrase(words, p, case_sensitive);
  return hits;
}

/// Majority vote between affirmation and reflection hits; ties go to
/// Reflection, no hits at all is a Statement.
inline SentenceClass classify_sentence(std::string_view text,
                                       const KeywordConfig& config) {
  auto words = split_words(text, config.case_sensitive);
  SentenceClass result;
  result.affirmation_hits =
      count_keyword_hits(words, config.affirmation, config.case_sensitive);
  result.reflection_hits =
      count_keyword_hits(words, config.reflection, config.case_sensitive);
  if (result.reflection_hits > 0 &&
      result.reflection_hits >= result.affirmation_hits) {
    result.label = SentenceLabel::Reflection;
  } else if (result.affirmation_hits > result.reflection_hits) {
    result.label = SentenceLabel::Affirmation;
  }
  return result;
}

inline bool contains_verification_cue(std::string_view text,
                                      const KeywordConfig& config) {
  auto words = split_words(text, config.case_sensitive);
  for (const auto& p : config.verification) {
    if (count_phrase(words, p, config.case_sensitive) > 0) return true;
  }
  return false;
}

inline bool is_reflective(std::string_view text, const KeywordConfig& config) {
  return classify_sentence(text, config).label == SentenceLabel::Reflection;
}

}  // namespace specthink
