// Copyright 2026 The Speculative Thinking Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "specthink/tokenizer.hpp"

namespace specthink {

inline constexpr std::string_view kDefaultDelimiter = "\n\n";

struct DelimiterEvent {
  // Offset just past the delimiter.
  std::size_t position = 0;
  // Segment that ends at this delimiter (delimiter excluded).
  std::string preceding_text;

  bool operator==(const DelimiterEvent&) const = default;
};

/// All non-overlapping occurrences of `delimiter`, left to right.
inline std::vector<DelimiterEvent> scan_delimiters(std::string_view text,
                                                   std::string_view delimiter) {
  if (delimiter.empty()) {
    throw std::invalid_argument("scan_delimiters: delimiter must be non-empty");
  }
  std::vector<DelimiterEvent> events;
  std::size_t segment_start = 0;
  std::size_t pos = text.find(delimiter);
  while (pos != std::string_view::npos) {
    std::size_t end = pos + delimiter.size();
    events.push_back(
        {end, std::string(text.substr(segment_start, pos - segment_start))});
    segment_start = end;
    pos = text.find(delimiter, end);
  }
  return events;
}

/// Pieces between delimiters. Always returns events+1 segments, so joining
/// them with the delimiter reproduces `text`.
inline std::vector<std::string_view> split_segments(std::string_view text,
                                                    std::string_view delimiter) {
  if (delimiter.empty()) {
    throw std::invalid_argument("split_segments: delimiter must be non-empty");
  }
  std::vector<std::string_view> segments;
  std::size_t start = 0;
  std::size_t pos = text.find(delimiter);
  while (pos != std::string_view::npos) {
    segments.push_back(text.substr(start, pos - start));
    start = pos + delimiter.size();
    pos = text.find(delimiter, start);
  }
  segments.push_back(text.substr(start));
  return segments;
}

/// Length of the leading sentence of `text`. A sentence ends after "." when
/// followed by whitespace or end of text, after "?" or "!", or right before
/// the delimiter. Returns text.size() when no terminator is present.
/// `found` reports whether a terminator was seen.
inline std::size_t leading_sentence_length(std::string_view text,
                                           std::string_view delimiter,
                                           bool* found = nullptr) {
  std::size_t delim_pos =
      delimiter.empty() ? std::string_view::npos : text.find(delimiter);
  std::size_t limit = std::min(delim_pos, text.size());
  for (std::size_t i = 0; i < limit; ++i) {
    char c = text[i];
    bool end = c == '?' || c == '!' ||
               (c == '.' && (i + 1 == text.size() || is_space(text[i + 1])));
    if (end) {
      if (found) *found = true;
      return i + 1;
    }
  }
  if (found) *found = delim_pos != std::string_view::npos;
  return limit;
}

struct SentenceWindow {
  std::string text;
  std::size_t token_count = 0;
  // Cut at the token budget rather than at a sentence terminator.
  bool truncated = false;
};

/// Draft sentence at the head of `stream`, capped at `n1` tokens as counted
/// by `tokenizer`.
inline SentenceWindow take_sentence_window(
    std::string_view stream, std::size_t n1, const Tokenizer& tokenizer,
    std::string_view delimiter = kDefaultDelimiter) {
  if (n1 == 0) throw std::invalid_argument("take_sentence_window: n1 must be >= 1");
  SentenceWindow window;
  bool terminated = false;
  std::string_view candidate =
      stream.substr(0, leading_sentence_length(stream, delimiter, &terminated));
  std::size_t tokens = tokenizer.count(candidate);
  if (tokens > n1) {
    auto pieces = tokenizer.split(candidate);
    for (std::size_t i = 0; i < n1; ++i) window.text += pieces[i];
    window.token_count = n1;
    window.truncated = true;
    return window;
  }
  window.text = std::string(candidate);
  window.token_count = tokens;
  window.truncated = !terminated && tokens == n1;
  return window;
}

namespace detail {

inline constexpr std::string_view kBoxedOpen = "\\boxed{";

// Index one past the brace closing the group opened just before `start`,
// or npos when unbalanced.
inline std::size_t match_brace_group(std::string_view text, std::size_t start) {
  int depth = 1;
  for (std::size_t i = start; i < text.size(); ++i) {
    if (text[i] == '\\' && i + 1 < text.size() &&
        (text[i + 1] == '{' || text[i + 1] == '}')) {
      ++i;  // escaped brace
      continue;
    }
    if (text[i] == '{') ++depth;
    if (text[i] == '}' && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

}  // namespace detail

/// Contents of the last balanced \boxed{...} group. An unbalanced group
/// anywhere makes the output malformed and yields nullopt.
inline std::optional<std::string> extract_boxed_answer(std::string_view output) {
  std::optional<std::string> last;
  std::size_t pos = output.find(detail::kBoxedOpen);
  while (pos != std::string_view::npos) {
    std::size_t body = pos + detail::kBoxedOpen.size();
    std::size_t end = detail::match_brace_group(output, body);
    if (end == std::string_view::npos) return std::nullopt;
    last = std::string(output.substr(body, end - 1 - body));
    pos = output.find(detail::kBoxedOpen, end);
  }
  return last;
}

inline bool has_boxed_answer(std::string_view output) {
  return extract_boxed_answer(output).has_value();
}

/// Canonical form used for answer comparison: outer whitespace trimmed,
/// enclosing "$" pairs stripped, inner whitespace runs collapsed.
inline std::string normalize_answer(std::string_view raw) {
  std::string_view s = trim(raw);
  while (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
    s = trim(s.substr(1, s.size() - 2));
  }
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

}  // namespace specthink
