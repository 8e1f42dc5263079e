// Copyright 2026 The Speculative Thinking Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include "specthink/backend.hpp"
#include "specthink/sentence_classifier.hpp"
#include "specthink/text_segmentation.hpp"
#include "specthink/trace.hpp"

namespace specthink {

enum class ControllerMode { Reasoning, NonReasoning };

struct ControllerConfig {
  std::string delimiter{kDefaultDelimiter};
  std::size_t n1 = 20;   // affirmation/reflection takeover
  std::size_t n2 = 125;  // verification takeover
  std::size_t n3 = 125;  // excessive-reflection takeover
  std::size_t negativity_threshold = 3;
  std::string auxiliary_sentence = "Let us check whether there are some wrong steps.";
  ControllerMode mode = ControllerMode::Reasoning;
  std::size_t bootstrap_tokens = 100;
  std::size_t max_output_tokens = 16384;
  bool replace_draft = true;
  bool counter_resets_after_takeover = true;
  bool stop_on_boxed_answer = true;
  // Whether a reflective sentence carrying a verification cue also counts
  // toward the negativity counter.
  bool verification_counts_as_negative = true;
  SamplingParams sampling;

  void validate() const {
    if (delimiter.empty()) throw std::invalid_argument("delimiter must be non-empty");
    if (n1 == 0 || n2 == 0 || n3 == 0) {
      throw std::invalid_argument("n1, n2 and n3 must be >= 1");
    }
    if (max_output_tokens == 0) {
      throw std::invalid_argument("max_output_tokens must be >= 1");
    }
    if (negativity_threshold == 0) {
      throw std::invalid_argument("negativity_threshold must be >= 1");
    }
    if (mode == ControllerMode::NonReasoning && bootstrap_tokens == 0) {
      throw std::invalid_argument("bootstrap_tokens must be >= 1 in non-reasoning mode");
    }
  }
};

enum class TakeoverAction {
  Continue,
  AffirmationTakeover,
  ReflectionTakeover,
  VerificationTakeover,
  ExcessiveReflectionTakeover,
};

struct TakeoverDecision {
  TakeoverAction action = TakeoverAction::Continue;
  std::size_t budget = 0;
  std::optional<std::string> inject;

  bool operator==(const TakeoverDecision&) const = default;
};

inline bool counts_as_negative(const SentenceClass& draft, bool verification_cue,
                               const ControllerConfig& config) {
  return draft.label == SentenceLabel::Reflection &&
         (config.verification_counts_as_negative || !verification_cue);
}

/// Precedence: excessive reflection, then verification, then the n1
/// affirmation/reflection takeover. `counter` is the negativity count
/// before this sentence.
inline TakeoverDecision decide_takeover(const SentenceClass& draft,
                                        bool verification_cue, std::size_t counter,
                                        const ControllerConfig& config) {
  if (counts_as_negative(draft, verification_cue, config) &&
      counter + 1 >= config.negativity_threshold) {
    return {TakeoverAction::ExcessiveReflectionTakeover, config.n3,
            config.auxiliary_sentence};
  }
  if (verification_cue) return {TakeoverAction::VerificationTakeover, config.n2, {}};
  switch (draft.label) {
    case SentenceLabel::Affirmation:
      return {TakeoverAction::AffirmationTakeover, config.n1, {}};
    case SentenceLabel::Reflection:
      return {TakeoverAction::ReflectionTakeover, config.n1, {}};
    case SentenceLabel::Statement:
      break;
  }
  return {TakeoverAction::Continue, 0, {}};
}

/// Fills the "{question}" placeholder.
inline std::string render_prompt(std::string_view prompt_template,
                                 std::string_view question) {
  constexpr std::string_view kPlaceholder = "{question}";
  auto pos = prompt_template.find(kPlaceholder);
  if (pos == std::string_view::npos ||
      prompt_template.find(kPlaceholder, pos + 1) != std::string_view::npos) {
    throw std::invalid_argument("prompt template must contain {question} exactly once");
  }
  std::string out(prompt_template.substr(0, pos));
  out += question;
  out += prompt_template.substr(pos + kPlaceholder.size());
  return out;
}

/// A run stopped by a backend or deadline failure; carries what was
/// generated so far.
class RunAborted : public std::runtime_error {
 public:
  RunAborted(const std::string& what, Trace partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const Trace& partial() const { return partial_; }

 private:
  Trace partial_;
};

/// Drives one speculative/target pair through a question. Single-threaded;
/// create one per concurrent run.
class Controller {
 public:
  Controller(Backend& speculative, Backend& target, ControllerConfig config,
             KeywordConfig keywords,
             std::optional<std::chrono::steady_clock::duration> timeout = std::nullopt)
      : speculative_(speculative),
        target_(target),
        config_(std::move(config)),
        keywords_(std::move(keywords)),
        timeout_(timeout) {
    config_.validate();
  }

  Trace run(std::string_view question, std::string_view prompt_template) {
    return config_.mode == ControllerMode::Reasoning
               ? run_reasoning(question, prompt_template)
               : run_non_reasoning(question, prompt_template);
  }

  Trace run_reasoning(std::string_view question, std::string_view prompt_template) {
    if (config_.mode != ControllerMode::Reasoning) {
      throw std::logic_error("run_reasoning needs mode = Reasoning");
    }
    State st = start(question, prompt_template);
    bool after_delimiter = false;
    for (;;) {
      if (remaining(st) == 0) return finish(st, TraceStop::MaxTokens);
      if (!after_delimiter) {
        auto chunk = call(st, speculative_, remaining(st));
        if (auto stop = keep(st, chunk, Provenance::Speculative, SpanReason::Normal)) {
          return finish(st, *stop);
        }
        after_delimiter = chunk.finish == FinishReason::StopMarker;
        continue;
      }

      auto draft = call(st, speculative_, std::min(config_.n1, remaining(st)));
      if (draft.text.empty()) return finish(st, TraceStop::Eos);
      auto window = take_sentence_window(draft.text, config_.n1,
                                         speculative_.tokenizer(), config_.delimiter);
      auto cls = classify_sentence(window.text, keywords_);
      bool cue = contains_verification_cue(window.text, keywords_);
      auto decision = decide_takeover(cls, cue, st.counter, config_);
      if (counts_as_negative(cls, cue, config_)) ++st.counter;

      GenerationChunk last;
      std::optional<TraceStop> stop;
      switch (decision.action) {
        case TakeoverAction::Continue:
          last = draft;
          stop = keep(st, draft, Provenance::Speculative, SpanReason::Normal);
          break;

        case TakeoverAction::AffirmationTakeover:
        case TakeoverAction::ReflectionTakeover: {
          auto reason = decision.action == TakeoverAction::AffirmationTakeover
                            ? SpanReason::Affirmation
                            : SpanReason::Reflection;
          if (config_.replace_draft) {
            discard(st, draft, reason);
          } else if ((stop = keep(st, draft, Provenance::Speculative, SpanReason::Normal))) {
            if (*stop != TraceStop::Eos) break;
            stop.reset();
          }
          if (remaining(st) == 0) {
            stop = TraceStop::MaxTokens;
            break;
          }
          last = call(st, target_, std::min(decision.budget, remaining(st)));
          if ((stop = keep(st, last, Provenance::Target, reason))) break;
          // The target's sentence now follows the delimiter; it gets the
          // same verification check a speculative sentence would.
          auto replaced = take_sentence_window(last.text, config_.n1,
                                               target_.tokenizer(), config_.delimiter);
          if (contains_verification_cue(replaced.text, keywords_)) {
            stop = verification_takeover(st, last);
          }
          break;
        }

        case TakeoverAction::VerificationTakeover:
          if ((stop = keep_draft_before_takeover(st, draft))) break;
          stop = verification_takeover(st, last);
          break;

        case TakeoverAction::ExcessiveReflectionTakeover:
          if ((stop = keep_draft_before_takeover(st, draft))) break;
          stop = excessive_reflection_takeover(st, last);
          break;
      }
      if (stop) return finish(st, *stop);
      after_delimiter = last.finish == FinishReason::StopMarker;
    }
  }

  Trace run_non_reasoning(std::string_view question,
                          std::string_view prompt_template) {
    if (config_.mode != ControllerMode::NonReasoning) {
      throw std::logic_error("run_non_reasoning needs mode = NonReasoning");
    }
    State st = start(question, prompt_template);
    auto boot = call(st, target_, std::min(config_.bootstrap_tokens, remaining(st)),
                     /*stop_at_delimiter=*/false);
    if (auto stop = keep(st, boot, Provenance::Target, SpanReason::Bootstrap)) {
      return finish(st, *stop);
    }
    bool after_delimiter = std::string_view(st.output).ends_with(config_.delimiter);
    for (;;) {
      if (remaining(st) == 0) return finish(st, TraceStop::MaxTokens);
      if (!after_delimiter) {
        auto chunk = call(st, speculative_, remaining(st));
        if (auto stop = keep(st, chunk, Provenance::Speculative, SpanReason::Normal)) {
          return finish(st, *stop);
        }
        after_delimiter = chunk.finish == FinishReason::StopMarker;
        continue;
      }

      auto sentence = call(st, target_, std::min(config_.n1, remaining(st)));
      if (auto stop = keep(st, sentence, Provenance::Target, SpanReason::Unconditional)) {
        return finish(st, *stop);
      }
      auto window = take_sentence_window(sentence.text, config_.n1,
                                         target_.tokenizer(), config_.delimiter);
      auto cls = classify_sentence(window.text, keywords_);
      bool cue = contains_verification_cue(window.text, keywords_);
      auto decision = decide_takeover(cls, cue, st.counter, config_);
      if (counts_as_negative(cls, cue, config_)) ++st.counter;

      GenerationChunk last = sentence;
      std::optional<TraceStop> stop;
      if (decision.action == TakeoverAction::ExcessiveReflectionTakeover) {
        stop = excessive_reflection_takeover(st, last);
      } else if (decision.action == TakeoverAction::VerificationTakeover) {
        stop = verification_takeover(st, last);
      }
      if (stop) return finish(st, *stop);
      after_delimiter = last.finish == FinishReason::StopMarker;
    }
  }

  const ControllerConfig& config() const { return config_; }

 private:
  struct State {
    Trace trace;
    std::string context;  // prompt + kept output
    std::string output;
    std::size_t context_tokens = 0;
    std::size_t output_tokens = 0;
    std::size_t counter = 0;
    std::chrono::steady_clock::time_point started;
  };

  State start(std::string_view question, std::string_view prompt_template) {
    State st;
    st.trace.question = std::string(question);
    st.trace.prompt = render_prompt(prompt_template, question);
    st.trace.prompt_tokens = speculative_.count_tokens(st.trace.prompt);
    st.context = st.trace.prompt;
    st.context_tokens = st.trace.prompt_tokens;
    st.started = std::chrono::steady_clock::now();
    return st;
  }

  std::size_t remaining(const State& st) const {
    return st.output_tokens >= config_.max_output_tokens
               ? 0
               : config_.max_output_tokens - st.output_tokens;
  }

  Trace finish(State& st, TraceStop stop) {
    st.trace.stop_reason = stop;
    return std::move(st.trace);
  }

  GenerationChunk call(State& st, Backend& backend, std::size_t budget,
                       bool stop_at_delimiter = true) {
    if (timeout_ && std::chrono::steady_clock::now() - st.started > *timeout_) {
      st.trace.stop_reason = TraceStop::Aborted;
      throw RunAborted("question timed out", st.trace);
    }
    GenerationRequest req;
    req.context = st.context;
    req.max_new_tokens = budget;
    if (stop_at_delimiter) req.stop_markers.push_back(config_.delimiter);
    req.sampling = config_.sampling;
    try {
      return backend.generate(req);
    } catch (const TransportError& e) {
      st.trace.stop_reason = TraceStop::Aborted;
      throw RunAborted(e.what(), st.trace);
    }
  }

  // Appends a generated chunk to the output. Returns a stop reason when
  // the run has to end after it.
  std::optional<TraceStop> keep(State& st, const GenerationChunk& chunk,
                                Provenance provenance, SpanReason reason) {
    if (chunk.text.empty()) return TraceStop::Eos;
    append(st, chunk.text, chunk.token_count, provenance, reason);
    if (config_.stop_on_boxed_answer && has_boxed_answer(st.output)) {
      return TraceStop::BoxedAnswer;
    }
    if (chunk.finish == FinishReason::Eos) return TraceStop::Eos;
    return std::nullopt;
  }

  void append(State& st, const std::string& text, std::size_t tokens,
              Provenance provenance, SpanReason reason) {
    st.trace.spans.push_back(
        {text, tokens, provenance, reason, st.context_tokens, false});
    st.context += text;
    st.output += text;
    st.context_tokens += tokens;
    st.output_tokens += tokens;
  }

  void discard(State& st, const GenerationChunk& draft, SpanReason reason) {
    st.trace.spans.push_back({draft.text, draft.token_count, Provenance::Speculative,
                              reason, st.context_tokens, true});
  }

  // A kept draft ahead of a verification or excessive-reflection takeover.
  // The speculative model reaching EOS does not cancel the takeover.
  std::optional<TraceStop> keep_draft_before_takeover(State& st,
                                                      const GenerationChunk& draft) {
    auto stop = keep(st, draft, Provenance::Speculative, SpanReason::Normal);
    if (stop == TraceStop::Eos) stop.reset();
    if (!stop && remaining(st) == 0) stop = TraceStop::MaxTokens;
    return stop;
  }

  std::optional<TraceStop> verification_takeover(State& st, GenerationChunk& last) {
    if (remaining(st) == 0) return TraceStop::MaxTokens;
    last = call(st, target_, std::min(config_.n2, remaining(st)));
    return keep(st, last, Provenance::Target, SpanReason::Verification);
  }

  std::optional<TraceStop> excessive_reflection_takeover(State& st,
                                                         GenerationChunk& last) {
    std::string inject = config_.auxiliary_sentence;
    if (!st.output.empty() && !is_space(st.output.back())) inject.insert(0, " ");
    auto inject_tokens = target_.count_tokens(inject);
    // The injected sentence is part of the output, so it must fit.
    if (inject_tokens > remaining(st)) return TraceStop::MaxTokens;
    ++st.trace.negativity_events;
    if (config_.counter_resets_after_takeover) st.counter = 0;
    append(st, inject, inject_tokens, Provenance::Injected, SpanReason::ExcessiveReflection);
    if (remaining(st) == 0) return TraceStop::MaxTokens;
    last = call(st, target_, std::min(config_.n3, remaining(st)));
    return keep(st, last, Provenance::Target, SpanReason::ExcessiveReflection);
  }

  Backend& speculative_;
  Backend& target_;
  ControllerConfig config_;
  KeywordConfig keywords_;
  std::optional<std::chrono::steady_clock::duration> timeout_;
};

}  // namespace specthink
