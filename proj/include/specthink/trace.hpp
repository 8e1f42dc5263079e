// Copyright 2026 The Speculative Thinking Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace specthink {

enum class Provenance { Speculative, Target, Injected };

enum class SpanReason {
  Normal,
  Bootstrap,
  Affirmation,
  Reflection,
  Verification,
  ExcessiveReflection,
  // Non-reasoning mode: the target writes every post-delimiter sentence.
  Unconditional,
};

enum class TraceStop { Eos, MaxTokens, BoxedAnswer, Aborted };

NLOHMANN_JSON_SERIALIZE_ENUM(Provenance, {
                                             {Provenance::Speculative, "speculative"},
                                             {Provenance::Target, "target"},
                                             {Provenance::Injected, "injected"},
                                         })

NLOHMANN_JSON_SERIALIZE_ENUM(SpanReason,
                             {
                                 {SpanReason::Normal, "normal"},
                                 {SpanReason::Bootstrap, "bootstrap"},
                                 {SpanReason::Affirmation, "affirmation"},
                                 {SpanReason::Reflection, "reflection"},
                                 {SpanReason::Verification, "verification"},
                                 {SpanReason::ExcessiveReflection,
                                  "excessive_reflection"},
                                 {SpanReason::Unconditional, "unconditional"},
                             })

NLOHMANN_JSON_SERIALIZE_ENUM(TraceStop, {
                                            {TraceStop::Eos, "eos"},
                                            {TraceStop::MaxTokens, "max_tokens"},
                                            {TraceStop::BoxedAnswer, "boxed_answer"},
                                            {TraceStop::Aborted, "aborted"},
                                        })

struct TraceSpan {
  std::string text;
  std::size_t token_count = 0;
  Provenance provenance = Provenance::Speculative;
  SpanReason reason = SpanReason::Normal;
  // Context tokens (prompt + kept output) when the span began.
  std::size_t start_context_length = 0;
  // A speculative draft replaced by the target. Kept for provenance and
  // cost accounting only; it is not part of the output.
  bool discarded = false;

  bool operator==(const TraceSpan&) const = default;
};

struct Trace {
  std::string question;
  std::string prompt;
  std::size_t prompt_tokens = 0;
  std::vector<TraceSpan> spans;
  TraceStop stop_reason = TraceStop::Eos;
  std::size_t negativity_events = 0;

  bool operator==(const Trace&) const = default;

  std::string output() const {
    std::string out;
    for (const auto& s : spans) {
      if (!s.discarded) out += s.text;
    }
    return out;
  }

  std::size_t output_tokens() const {
    std::size_t n = 0;
    for (const auto& s : spans) {
      if (!s.discarded) n += s.token_count;
    }
    return n;
  }

  // Target and injected tokens in the output.
  std::size_t target_tokens() const {
    std::size_t n = 0;
    for (const auto& s : spans) {
      if (!s.discarded && s.provenance != Provenance::Speculative) {
        n += s.token_count;
      }
    }
    return n;
  }

  double modify_ratio() const {
    auto total = output_tokens();
    return total == 0 ? 0.0
                      : static_cast<double>(target_tokens()) /
                            static_cast<double>(total);
  }
};

/// The exact text either backend is conditioned on next.
inline std::string resume_context(const Trace& trace) {
  return trace.prompt + trace.output();
}

inline void to_json(nlohmann::ordered_json& j, const TraceSpan& s) {
  j = nlohmann::ordered_json{{"text", s.text},
                             {"tokens", s.token_count},
                             {"provenance", s.provenance},
                             {"reason", s.reason},
                             {"ctx", s.start_context_length}};
  if (s.discarded) j["discarded"] = true;
}

inline void from_json(const nlohmann::ordered_json& j, TraceSpan& s) {
  s.text = j.at("text").get<std::string>();
  s.token_count = j.at("tokens").get<std::size_t>();
  s.provenance = j.at("provenance").get<Provenance>();
  s.reason = j.at("reason").get<SpanReason>();
  s.start_context_length = j.at("ctx").get<std::size_t>();
  s.discarded = j.value("discarded", false);
}

// Writes trace fields into an existing record object, preserving whatever
// the caller put there first (id, answers, metrics).
inline void append_trace_fields(nlohmann::ordered_json& j, const Trace& t) {
  j["question"] = t.question;
  j["prompt"] = t.prompt;
  j["prompt_tokens"] = t.prompt_tokens;
  auto spans = nlohmann::ordered_json::array();
  for (const auto& s : t.spans) spans.push_back(s);
  j["spans"] = std::move(spans);
  j["stop_reason"] = t.stop_reason;
  j["negativity_events"] = t.negativity_events;
}

inline Trace trace_from_json(const nlohmann::ordered_json& j) {
  Trace t;
  t.question = j.value("question", std::string{});
  t.prompt = j.value("prompt", std::string{});
  t.prompt_tokens = j.value("prompt_tokens", std::size_t{0});
  for (const auto& s : j.at("spans")) t.spans.push_back(s.get<TraceSpan>());
  t.stop_reason = j.at("stop_reason").get<TraceStop>();
  t.negativity_events = j.value("negativity_events", std::size_t{0});
  return t;
}

}  // namespace specthink
