// Copyright 2026 The Speculative Thinking Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "specthink/tokenizer.hpp"

namespace specthink {

enum class FinishReason { Budget, StopMarker, Eos };

inline std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::Budget: return "budget";
    case FinishReason::StopMarker: return "stop_marker";
    case FinishReason::Eos: return "eos";
  }
  return "eos";
}

// Passed through to the server untouched.
struct SamplingParams {
  std::optional<double> temperature;
  std::optional<std::uint64_t> seed;
};

struct GenerationRequest {
  std::string context;
  std::size_t max_new_tokens = 1;
  std::vector<std::string> stop_markers;
  SamplingParams sampling;
};

/// One generate() result. When generation halts on a stop marker the
/// marker is part of `text`, so concatenated chunks never lose characters.
struct GenerationChunk {
  std::string text;
  std::size_t token_count = 0;
  FinishReason finish = FinishReason::Eos;
  std::optional<std::string> matched_marker;

  bool operator==(const GenerationChunk&) const = default;
};

class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& what, int attempts, int http_status)
      : std::runtime_error(what), attempts_(attempts), http_status_(http_status) {}

  int attempts() const { return attempts_; }
  // 0 when no HTTP response was received at all.
  int http_status() const { return http_status_; }

 private:
  int attempts_;
  int http_status_;
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual GenerationChunk generate(const GenerationRequest& request) = 0;

  virtual std::size_t count_tokens(std::string_view text) const {
    return tokenizer().count(text);
  }

  // Local adapter used for window truncation and for counting text the
  // backend did not generate itself.
  virtual const Tokenizer& tokenizer() const {
    static const WhitespaceTokenizer kWhitespace;
    return kWhitespace;
  }
};

}  // namespace specthink
