// Copyright 2026 The Speculative Thinking Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "specthink/trace.hpp"

namespace specthink {

// Exact FLOP counts. 128 bits cover s <= 1e6, h <= 1e5 with room for a
// realistic layer multiplier.
using Flops = unsigned __int128;

inline std::string to_string(Flops v) {
  if (v == 0) return "0";
  std::string digits;
  while (v > 0) {
    digits.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  std::reverse(digits.begin(), digits.end());
  return digits;
}

inline Flops parse_flops(std::string_view s) {
  if (s.empty()) throw std::invalid_argument("empty FLOPs value");
  Flops v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') throw std::invalid_argument("bad FLOPs value");
    v = v * 10 + static_cast<unsigned>(c - '0');
  }
  return v;
}

inline constexpr double kDefaultGpuCapacity = 3.12e10;  // FLOPs/s

/// Transformer dimensions feeding the cost model. `layer_multiplier`
/// scales every formula; it defaults to 1 (per-layer-free formulas) and can
/// be set to `layers` for whole-model totals.
struct ModelShape {
  std::string name;
  std::uint64_t hidden = 0;      // h
  std::uint64_t ffn_hidden = 0;  // h'
  std::uint64_t n_heads = 0;     // n
  std::uint64_t head_dim = 0;    // d, h = n * d
  std::uint64_t layers = 0;      // informational, 0 when unknown
  std::uint64_t layer_multiplier = 1;

  void validate() const {
    if (hidden == 0 || ffn_hidden == 0 || n_heads == 0 || head_dim == 0 ||
        layer_multiplier == 0) {
      throw std::invalid_argument("model shape '" + name + "': all dimensions must be >= 1");
    }
    if (hidden != n_heads * head_dim) {
      throw std::invalid_argument("model shape '" + name + "': hidden != n_heads * head_dim");
    }
  }

  bool operator==(const ModelShape&) const = default;
};

namespace detail {

inline void require_positive(std::uint64_t s, const char* what) {
  if (s == 0) throw std::invalid_argument(std::string(what) + " must be >= 1");
}

// Terms of the decode formula that do not depend on context length.
inline Flops decode_constant(const ModelShape& m) {
  Flops h = m.hidden, hf = m.ffn_hidden;
  return 8 * h * h + 16 * h + 6 * h * hf + 2 * hf;
}

// Per-context-token slope of the decode formula.
inline Flops decode_slope(const ModelShape& m) {
  return 4 * Flops{m.hidden} + 4 * Flops{m.n_heads};
}

}  // namespace detail

/// Prompt processing over `s` tokens:
/// 8sh^2 + 16sh + 4s^2h + 4s^2n + 6shh' + 2sh'.
inline Flops flops_prefill(std::uint64_t s, const ModelShape& m) {
  detail::require_positive(s, "prefill length");
  Flops S = s, h = m.hidden, hf = m.ffn_hidden, n = m.n_heads;
  Flops f = 8 * S * h * h + 16 * S * h + 4 * S * S * h + 4 * S * S * n +
            6 * S * h * hf + 2 * S * hf;
  return f * m.layer_multiplier;
}

/// One generated token at context length `s`:
/// 8h^2 + 16h + 4sh + 4sn + 6hh' + 2h'.
inline Flops flops_decode(std::uint64_t s, const ModelShape& m) {
  detail::require_positive(s, "context length");
  return (detail::decode_constant(m) + Flops{s} * detail::decode_slope(m)) *
         m.layer_multiplier;
}

/// Sum of flops_decode(start + i) for i in [0, count), in closed form.
inline Flops flops_decode_sum(std::uint64_t start, std::uint64_t count,
                              const ModelShape& m) {
  detail::require_positive(start, "context length");
  Flops c = count;
  // sum of (start + i) = c*start + c(c-1)/2
  Flops positions = c * start + (c == 0 ? 0 : c * (c - 1) / 2);
  return (c * detail::decode_constant(m) + positions * detail::decode_slope(m)) *
         m.layer_multiplier;
}

/// Prefill of the prompt plus one decode step per generated token.
inline Flops flops_total(std::uint64_t prompt_len, std::uint64_t decode_len,
                         const ModelShape& m) {
  return flops_prefill(prompt_len, m) + flops_decode_sum(prompt_len, decode_len, m);
}

/// Ingesting another model's tokens at a handoff costs one decode step at
/// the current context length, however many tokens are ingested.
inline Flops flops_prefix_event(std::uint64_t context_len, const ModelShape& m) {
  return flops_decode(context_len, m);
}

struct StageFlops {
  Flops prefill = 0;
  Flops prefix = 0;
  Flops decode = 0;

  Flops total() const { return prefill + prefix + decode; }
  bool operator==(const StageFlops&) const = default;
};

struct FlopsBreakdown {
  Flops prefill = 0;
  Flops prefix = 0;
  Flops decode = 0;
  Flops total = 0;
  // "speculative" and "target"
  std::map<std::string, StageFlops> by_model;

  bool operator==(const FlopsBreakdown&) const = default;
};

class AccountingError : public std::runtime_error {
 public:
  AccountingError(std::size_t span, const std::string& what)
      : std::runtime_error("span " + std::to_string(span) + ": " + what), span_(span) {}
  std::size_t span_index() const { return span_; }

 private:
  std::size_t span_;
};

struct HybridOptions {
  // Target pays a full prefill over the context at its first takeover;
  // otherwise that first entry is a single prefix event like later ones.
  bool target_full_prefill = true;
};

/// Two-model cost ledger over a trace.
///
///  - the speculative model prefills the prompt;
///  - the target prefills the context it sees at its first takeover;
///  - every generated token (including discarded drafts) pays one decode
///    step on its own model at the running context length;
///  - every later change of model charges the receiving model one prefix
///    event; injected text is ingested by the target and is never decoded.
inline FlopsBreakdown hybrid_breakdown(const Trace& trace, const ModelShape& spec,
                                       const ModelShape& target,
                                       HybridOptions options = {}) {
  if (trace.prompt_tokens == 0) {
    throw AccountingError(0, "trace has no prompt tokens");
  }
  StageFlops s, t;
  s.prefill = flops_prefill(trace.prompt_tokens, spec);
  std::uint64_t ctx = trace.prompt_tokens;
  bool on_target = false;
  bool target_seen = false;

  for (std::size_t i = 0; i < trace.spans.size(); ++i) {
    const auto& span = trace.spans[i];
    if (span.start_context_length != ctx) {
      throw AccountingError(i, "starts at context " +
                                   std::to_string(span.start_context_length) +
                                   ", expected " + std::to_string(ctx));
    }
    bool injected = span.provenance == Provenance::Injected;
    bool wants_target = span.provenance != Provenance::Speculative;
    if (injected && span.discarded) {
      throw AccountingError(i, "injected span cannot be discarded");
    }

    if (wants_target && !target_seen) {
      if (options.target_full_prefill) {
        t.prefill += flops_prefill(injected ? ctx + span.token_count : ctx, target);
      } else {
        t.prefix += flops_prefix_event(ctx, target);
      }
      target_seen = true;
    } else if (wants_target != on_target || injected) {
      auto& receiver = wants_target ? t : s;
      receiver.prefix += flops_prefix_event(ctx, wants_target ? target : spec);
    }
    on_target = wants_target;

    if (!injected) {
      auto& gen = wants_target ? t : s;
      gen.decode += flops_decode_sum(ctx, span.token_count, wants_target ? target : spec);
    }
    if (!span.discarded) ctx += span.token_count;
  }

  FlopsBreakdown out;
  out.prefill = s.prefill + t.prefill;
  out.prefix = s.prefix + t.prefix;
  out.decode = s.decode + t.decode;
  out.total = out.prefill + out.prefix + out.decode;
  out.by_model["speculative"] = s;
  out.by_model["target"] = t;
  return out;
}

/// Single-model breakdown, equal to flops_total.
inline FlopsBreakdown single_breakdown(std::uint64_t prompt_len, std::uint64_t decode_len,
                                       const ModelShape& m) {
  FlopsBreakdown out;
  out.prefill = flops_prefill(prompt_len, m);
  out.decode = flops_decode_sum(prompt_len, decode_len, m);
  out.total = out.prefill + out.decode;
  out.by_model["speculative"] = {out.prefill, 0, out.decode};
  return out;
}

class UndefinedSpeedError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct SpeedEstimate {
  std::uint64_t tokens = 0;
  double gpu_capacity = kDefaultGpuCapacity;
  double speed = 0.0;  // tokens per second
};

/// tokens / (total FLOPs / capacity).
inline SpeedEstimate estimated_speed(const FlopsBreakdown& breakdown, std::uint64_t tokens,
                                     double gpu_capacity = kDefaultGpuCapacity) {
  if (breakdown.total == 0) throw UndefinedSpeedError("estimated speed: zero total FLOPs");
  if (!(gpu_capacity > 0)) throw std::invalid_argument("gpu capacity must be positive");
  auto seconds = static_cast<long double>(breakdown.total) / gpu_capacity;
  return {tokens, gpu_capacity,
          static_cast<double>(static_cast<long double>(tokens) / seconds)};
}

// Handoff schedules: a list of (provenance, tokens) spans turned into a
// context-consistent trace for costing without running any model.
struct ScheduleEntry {
  Provenance provenance = Provenance::Speculative;
  std::size_t tokens = 0;
};

inline Trace trace_from_schedule(std::size_t prompt_tokens,
                                 const std::vector<ScheduleEntry>& schedule) {
  Trace t;
  t.prompt_tokens = prompt_tokens;
  std::size_t ctx = prompt_tokens;
  for (const auto& e : schedule) {
    SpanReason reason = e.provenance == Provenance::Speculative ? SpanReason::Normal
                        : e.provenance == Provenance::Injected
                            ? SpanReason::ExcessiveReflection
                            : SpanReason::Reflection;
    t.spans.push_back({"", e.tokens, e.provenance, reason, ctx, false});
    ctx += e.tokens;
  }
  return t;
}

/// JSON Lines: {"provenance": "speculative"|"target"|"injected", "tokens": N}
inline std::vector<ScheduleEntry> load_schedule(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open schedule " + path.string());
  std::vector<ScheduleEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back({j.at("provenance").get<Provenance>(), j.at("tokens").get<std::size_t>()});
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// Public model-card dimensions of the Qwen-2.5 family.
inline std::vector<ModelShape> builtin_shape_presets() {
  return {
      {"qwen2.5-1.5b", 1536, 8960, 12, 128, 28, 1},
      {"qwen2.5-7b", 3584, 18944, 28, 128, 28, 1},
      {"qwen2.5-14b", 5120, 13824, 40, 128, 48, 1},
      {"qwen2.5-32b", 5120, 27648, 40, 128, 64, 1},
  };
}

/// JSON Lines: {name, h, h_ff, n_heads, head_dim, layers}
inline std::vector<ModelShape> load_shape_presets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open shape presets " + path.string());
  std::vector<ModelShape> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      ModelShape m{j.at("name").get<std::string>(),
                   j.at("h").get<std::uint64_t>(),
                   j.at("h_ff").get<std::uint64_t>(),
                   j.at("n_heads").get<std::uint64_t>(),
                   j.at("head_dim").get<std::uint64_t>(),
                   j.value("layers", std::uint64_t{0}),
                   j.value("layer_multiplier", std::uint64_t{1})};
      m.validate();
      out.push_back(std::move(m));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

class UnknownShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline ModelShape find_shape(const std::vector<ModelShape>& presets, const std::string& name) {
  for (const auto& m : presets) {
    if (m.name == name) return m;
  }
  std::string known;
  for (const auto& m : presets) known += (known.empty() ? "" : ", ") + m.name;
  throw UnknownShapeError("unknown shape '" + name + "'; available: " + known);
}

inline nlohmann::ordered_json flops_to_json(const FlopsBreakdown& b) {
  nlohmann::ordered_json j{{"prefill", to_string(b.prefill)},
                           {"prefix", to_string(b.prefix)},
                           {"decode", to_string(b.decode)},
                           {"total", to_string(b.total)}};
  for (const auto& [model, st] : b.by_model) {
    j["by_model"][model] = {{"prefill", to_string(st.prefill)},
                            {"prefix", to_string(st.prefix)},
                            {"decode", to_string(st.decode)},
                            {"total", to_string(st.total())}};
  }
  return j;
}

}  // namespace specthink
