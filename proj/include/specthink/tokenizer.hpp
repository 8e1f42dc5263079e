// Copyright 2026 The Speculative Thinking Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace specthink {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

// Bytes >= 0x80 are treated as word characters so UTF-8 letters never split
// a word.
inline bool is_word_char(char c) {
  auto u = static_cast<unsigned char>(c);
  return (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') ||
         (u >= 'A' && u <= 'Z') || u == '_' || u >= 0x80;
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

/// Adapter between text and a backend's notion of "token".
///
/// split() is lossless for any text holding at least one token:
/// concatenating the pieces gives back the input. count() must agree with
/// split().size() on such text.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string> split(std::string_view text) const = 0;
  virtual std::size_t count(std::string_view text) const {
    return split(text).size();
  }
};

/// One token per run of non-whitespace. Leading whitespace is glued to the
/// following token and trailing whitespace to the last one, so
/// "a b\n\n" -> {"a", " b\n\n"}. Whitespace-only text has zero tokens.
class WhitespaceTokenizer final : public Tokenizer {
 public:
  std::vector<std::string> split(std::string_view text) const override {
    std::vector<std::string> pieces;
    std::size_t i = 0;
    std::size_t piece_start = 0;
    while (i < text.size()) {
      while (i < text.size() && is_space(text[i])) ++i;
      if (i == text.size()) break;
      while (i < text.size() && !is_space(text[i])) ++i;
      pieces.emplace_back(text.substr(piece_start, i - piece_start));
      piece_start = i;
    }
    if (!pieces.empty() && piece_start < text.size()) {
      pieces.back().append(text.substr(piece_start));
    }
    return pieces;
  }

  std::size_t count(std::string_view text) const override {
    std::size_t n = 0;
    bool in_token = false;
    for (char c : text) {
      bool space = is_space(c);
      if (!space && !in_token) ++n;
      in_token = !space;
    }
    return n;
  }
};

/// Fallback tokenizer for corpus analysis of plain text. Pieces are word
/// runs, whitespace runs and punctuation runs; a punctuation run directly
/// followed by whitespace containing a newline is merged with it, giving
/// tokens like ".\n\n" the way BPE vocabularies do. Always lossless.
class PieceTokenizer final : public Tokenizer {
 public:
  std::vector<std::string> split(std::string_view text) const override {
    enum class Kind { Word, Space, Punct };
    auto kind_of = [](char c) {
      if (is_space(c)) return Kind::Space;
      if (is_word_char(c)) return Kind::Word;
      return Kind::Punct;
    };
    std::vector<std::string> pieces;
    std::size_t i = 0;
    while (i < text.size()) {
      Kind k = kind_of(text[i]);
      std::size_t j = i + 1;
      while (j < text.size() && kind_of(text[j]) == k) ++j;
      if (k == Kind::Punct && j < text.size() && is_space(text[j])) {
        std::size_t w = j;
        while (w < text.size() && is_space(text[w])) ++w;
        if (text.substr(j, w - j).find('\n') != std::string_view::npos) j = w;
      }
      pieces.emplace_back(text.substr(i, j - i));
      i = j;
    }
    return pieces;
  }
};

}  // namespace specthink
