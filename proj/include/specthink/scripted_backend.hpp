// Copyright 2026 The Speculative Thinking Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "specthink/backend.hpp"

namespace specthink {

struct ScriptStep {
  // The request context must end with this text when the step starts.
  std::optional<std::string> expect_suffix;
  std::string emission;
  // Overrides whitespace counting when the step is returned in one piece.
  std::optional<std::size_t> declared_tokens;
  bool eos_after = false;
};

using Script = std::vector<ScriptStep>;

class ScriptAssertionError : public std::runtime_error {
 public:
  ScriptAssertionError(std::size_t step, const std::string& what)
      : std::runtime_error("script step " + std::to_string(step) + ": " + what),
        step_(step) {}

  std::size_t step_index() const { return step_; }

 private:
  std::size_t step_;
};

class ScriptFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// JSON Lines, one step per line:
///   {"expect_suffix": "...", "emission": "...", "tokens": 7, "eos_after": true}
/// Only "emission" is required. Blank lines are skipped.
inline Script parse_script(std::istream& in) {
  Script script;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      ScriptStep step;
      step.emission = j.at("emission").get<std::string>();
      if (j.contains("expect_suffix") && !j["expect_suffix"].is_null()) {
        step.expect_suffix = j["expect_suffix"].get<std::string>();
      }
      if (j.contains("tokens") && !j["tokens"].is_null()) {
        auto tokens = j["tokens"].get<long long>();
        if (tokens < 0) throw std::invalid_argument("tokens must be >= 0");
        step.declared_tokens = static_cast<std::size_t>(tokens);
      }
      step.eos_after = j.value("eos_after", false);
      script.push_back(std::move(step));
    } catch (const std::exception& e) {
      throw ScriptFormatError("script line " + std::to_string(line_no) + ": " +
                              e.what());
    }
  }
  return script;
}

inline Script load_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScriptFormatError("cannot open script " + path.string());
  return parse_script(in);
}

/// Deterministic backend replaying a Script.
///
/// Each generate() call draws from the current step only, resuming where
/// the previous call stopped. A chunk ends at the first stop marker
/// (included), at the token budget, or at the end of the step. The end of
/// a step reports Eos when the step has eos_after set and Budget otherwise,
/// which tells the caller it may ask again. An exhausted script returns an
/// empty Eos chunk.
class ScriptedBackend final : public Backend {
 public:
  explicit ScriptedBackend(Script script) : script_(std::move(script)) {}

  GenerationChunk generate(const GenerationRequest& request) override {
    std::lock_guard lock(mu_);
    if (step_ >= script_.size()) return {"", 0, FinishReason::Eos, std::nullopt};
    const ScriptStep& step = script_[step_];
    if (offset_ == 0 && step.expect_suffix &&
        !std::string_view(request.context).ends_with(*step.expect_suffix)) {
      throw ScriptAssertionError(step_, "context does not end with expected suffix \"" +
                                            *step.expect_suffix + "\"");
    }

    std::string_view rest = std::string_view(step.emission).substr(offset_);
    std::size_t cut = rest.size();
    std::optional<std::string> marker;
    for (const auto& m : request.stop_markers) {
      if (m.empty()) continue;
      auto pos = rest.find(m);
      if (pos != std::string_view::npos && pos + m.size() <= cut &&
          (!marker || pos + m.size() < cut)) {
        cut = pos + m.size();
        marker = m;
      }
    }

    FinishReason finish = marker ? FinishReason::StopMarker : FinishReason::Budget;
    std::string text(rest.substr(0, cut));
    std::size_t tokens = tokenizer_.count(text);
    if (tokens > request.max_new_tokens) {
      auto pieces = tokenizer_.split(text);
      text.clear();
      for (std::size_t i = 0; i < request.max_new_tokens; ++i) text += pieces[i];
      tokens = request.max_new_tokens;
      finish = FinishReason::Budget;
      marker.reset();
    }

    bool whole_step = offset_ == 0 && text.size() == step.emission.size();
    if (whole_step && step.declared_tokens &&
        *step.declared_tokens <= request.max_new_tokens) {
      tokens = *step.declared_tokens;
    }

    offset_ += text.size();
    if (offset_ >= step.emission.size()) {
      if (step.eos_after) finish = FinishReason::Eos;
      ++step_;
      offset_ = 0;
    }
    return {std::move(text), tokens, finish, std::move(marker)};
  }

  const Tokenizer& tokenizer() const override { return tokenizer_; }

  std::size_t steps_consumed() const {
    std::lock_guard lock(mu_);
    return step_;
  }

 private:
  Script script_;
  WhitespaceTokenizer tokenizer_;
  mutable std::mutex mu_;
  std::size_t step_ = 0;
  std::size_t offset_ = 0;
};

}  // namespace specthink
