// Copyright 2026 The Speculative Thinking Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "specthink/backend.hpp"

namespace specthink {

struct HttpBackendConfig {
  // e.g. "http://localhost:8000/v1"; "/completions" is appended unless the
  // path already ends with it. A bare host gets "/v1/completions".
  std::string url;
  std::string model;
  std::string api_key;
  int max_retries = 2;
  double timeout_seconds = 600.0;
  std::chrono::milliseconds retry_backoff{250};
};

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline ParsedUrl parse_completions_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("endpoint URL needs a scheme: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.origin = url.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  if (path.empty()) {
    path = "/v1/completions";
  } else if (!std::string_view(path).ends_with("/completions")) {
    path += "/completions";
  }
  out.path = path;
  return out;
}

/// Request body for an OpenAI-compatible /completions endpoint.
inline nlohmann::json build_completion_request(const GenerationRequest& request,
                                               const std::string& model) {
  nlohmann::json body = {
      {"model", model},
      {"prompt", request.context},
      {"max_tokens", request.max_new_tokens},
      {"stop", request.stop_markers},
  };
  if (request.sampling.temperature) body["temperature"] = *request.sampling.temperature;
  if (request.sampling.seed) body["seed"] = *request.sampling.seed;
  return body;
}

/// Maps a completions response onto a GenerationChunk.
///
/// Servers strip the matched stop string, so it is put back. The matched
/// string is read from choices[0].stop_reason (vLLM: a string for a stop
/// match, null for EOS). Without that field a "stop" finish is taken as a
/// marker hit when exactly one marker was requested, otherwise as EOS.
inline GenerationChunk parse_completion_response(const nlohmann::json& body,
                                                 const GenerationRequest& request,
                                                 const Tokenizer& fallback) {
  const auto& choice = body.at("choices").at(0);
  GenerationChunk chunk;
  chunk.text = choice.value("text", std::string{});
  std::string finish =
      choice.contains("finish_reason") && choice["finish_reason"].is_string()
          ? choice["finish_reason"].get<std::string>()
          : std::string{"stop"};

  std::optional<std::string> marker;
  if (finish == "stop") {
    if (choice.contains("stop_reason")) {
      if (choice["stop_reason"].is_string()) {
        marker = choice["stop_reason"].get<std::string>();
      }
    } else if (request.stop_markers.size() == 1 && !chunk.text.empty()) {
      marker = request.stop_markers.front();
    }
  }

  if (finish == "length") {
    chunk.finish = FinishReason::Budget;
  } else if (marker) {
    chunk.finish = FinishReason::StopMarker;
    if (!std::string_view(chunk.text).ends_with(*marker)) chunk.text += *marker;
    chunk.matched_marker = marker;
  } else {
    chunk.finish = FinishReason::Eos;
  }

  std::optional<std::size_t> usage;
  if (body.contains("usage") && body["usage"].is_object() &&
      body["usage"].contains("completion_tokens") &&
      body["usage"]["completion_tokens"].is_number_integer()) {
    usage = body["usage"]["completion_tokens"].get<std::size_t>();
  }
  chunk.token_count = usage ? *usage : fallback.count(chunk.text);
  if (chunk.token_count > request.max_new_tokens) {
    chunk.token_count = request.max_new_tokens;
  }
  return chunk;
}

/// Client for raw text-completion servers. Continuation endpoints (not
/// chat) are required because generation resumes from arbitrary prefixes.
/// Each call opens its own connection, so one instance can serve any number
/// of concurrent runs.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config)
      : config_(std::move(config)), url_(parse_completions_url(config_.url)) {}

  GenerationChunk generate(const GenerationRequest& request) override {
    auto body = build_completion_request(request, config_.model).dump();
    int attempts = 0;
    int last_status = 0;
    std::string last_error;
    for (;;) {
      ++attempts;
      httplib::Client client(url_.origin);
      auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
          std::chrono::duration<double>(config_.timeout_seconds));
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      httplib::Headers headers;
      if (!config_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + config_.api_key);
      }
      auto res = client.Post(url_.path, headers, body, "application/json");
      if (res && res->status == 200) {
        try {
          return parse_completion_response(nlohmann::json::parse(res->body),
                                           request, tokenizer());
        } catch (const std::exception& e) {
          last_status = res->status;
          last_error = std::string("malformed response: ") + e.what();
        }
      } else if (res) {
        last_status = res->status;
        last_error = "HTTP " + std::to_string(res->status);
        // Client errors other than throttling will not improve on retry.
        if (res->status >= 400 && res->status < 500 && res->status != 429) break;
      } else {
        last_status = 0;
        last_error = httplib::to_string(res.error());
      }
      if (attempts > config_.max_retries) break;
      std::this_thread::sleep_for(config_.retry_backoff * attempts);
    }
    throw TransportError(url_.origin + url_.path + ": " + last_error, attempts,
                         last_status);
  }

  const HttpBackendConfig& config() const { return config_; }

 private:
  HttpBackendConfig config_;
  ParsedUrl url_;
};

}  // namespace specthink
