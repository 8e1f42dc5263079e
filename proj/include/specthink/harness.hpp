// Copyright 2026 The Speculative Thinking Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "specthink/controller.hpp"
#include "specthink/flops.hpp"
#include "specthink/http_backend.hpp"
#include "specthink/metrics.hpp"
#include "specthink/scripted_backend.hpp"

namespace specthink {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

inline constexpr std::string_view kDefaultPromptTemplate =
    "{question}\nPlease reason step by step, and put your final answer within \\boxed{}.";

struct DatasetRecord {
  std::string id;
  std::string question;
  std::string answer;
};

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// JSON Lines {id, question, answer}. Errors name the offending line.
inline std::vector<DatasetRecord> load_dataset(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset " + path.string());
  std::vector<DatasetRecord> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    DatasetRecord r;
    try {
      auto j = nlohmann::json::parse(line);
      const auto& id = j.at("id");
      r.id = id.is_string() ? id.get<std::string>() : id.dump();
      r.question = j.at("question").get<std::string>();
      const auto& ans = j.at("answer");
      r.answer = ans.is_string() ? ans.get<std::string>() : ans.dump();
    } catch (const std::exception& e) {
      throw InputError(where + e.what());
    }
    if (r.question.empty()) throw InputError(where + "empty question");
    if (!ids.insert(r.id).second) throw InputError(where + "duplicate id " + r.id);
    out.push_back(std::move(r));
  }
  if (out.empty()) throw InputError("dataset " + path.string() + " is empty");
  return out;
}

struct HarnessConfig {
  ControllerConfig controller;
  KeywordConfig keywords = KeywordConfig::defaults();
  ModelShape spec_shape = builtin_shape_presets()[0];
  ModelShape target_shape = builtin_shape_presets()[3];
  std::string prompt_template{kDefaultPromptTemplate};
  std::size_t concurrency = 1;
  std::uint64_t seed = 0;
  std::optional<double> temperature;
  double question_timeout_seconds = 3600.0;
  double request_timeout_seconds = 600.0;
  int max_retries = 2;
  double gpu_capacity = kDefaultGpuCapacity;
  bool target_full_prefill = true;
  std::string spec_model;
  std::string target_model;
};

namespace detail {

inline ControllerMode parse_mode(const std::string& s) {
  if (s == "reasoning") return ControllerMode::Reasoning;
  if (s == "non_reasoning" || s == "non-reasoning") return ControllerMode::NonReasoning;
  throw InputError("unknown controller mode '" + s + "'");
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key) && !j[key].is_null()) dst = j[key].get<T>();
}

inline ModelShape parse_shape_ref(const nlohmann::json& j,
                                  const std::vector<ModelShape>& presets,
                                  bool use_layer_count) {
  ModelShape m;
  if (j.is_string()) {
    m = find_shape(presets, j.get<std::string>());
  } else {
    m.name = j.value("name", std::string{"inline"});
    m.hidden = j.at("h").get<std::uint64_t>();
    m.ffn_hidden = j.at("h_ff").get<std::uint64_t>();
    m.n_heads = j.at("n_heads").get<std::uint64_t>();
    m.head_dim = j.at("head_dim").get<std::uint64_t>();
    m.layers = j.value("layers", std::uint64_t{0});
    m.layer_multiplier = j.value("layer_multiplier", std::uint64_t{1});
  }
  if (use_layer_count && m.layers > 0) m.layer_multiplier = m.layers;
  m.validate();
  return m;
}

}  // namespace detail

/// Parses a harness config object. Relative paths resolve against `base_dir`.
inline HarnessConfig parse_harness_config(const nlohmann::json& j,
                                          const fs::path& base_dir = {}) {
  HarnessConfig cfg;
  try {
    if (j.contains("controller")) {
      const auto& c = j["controller"];
      auto& cc = cfg.controller;
      detail::read_opt(c, "delimiter", cc.delimiter);
      detail::read_opt(c, "n1", cc.n1);
      detail::read_opt(c, "n2", cc.n2);
      detail::read_opt(c, "n3", cc.n3);
      detail::read_opt(c, "negativity_threshold", cc.negativity_threshold);
      detail::read_opt(c, "auxiliary_sentence", cc.auxiliary_sentence);
      if (c.contains("mode")) cc.mode = detail::parse_mode(c["mode"].get<std::string>());
      detail::read_opt(c, "bootstrap_tokens", cc.bootstrap_tokens);
      detail::read_opt(c, "max_output_tokens", cc.max_output_tokens);
      detail::read_opt(c, "replace_draft", cc.replace_draft);
      detail::read_opt(c, "counter_resets_after_takeover", cc.counter_resets_after_takeover);
      detail::read_opt(c, "stop_on_boxed_answer", cc.stop_on_boxed_answer);
      detail::read_opt(c, "verification_counts_as_negative", cc.verification_counts_as_negative);
    }
    if (j.contains("keywords")) {
      const auto& k = j["keywords"];
      detail::read_opt(k, "reflection", cfg.keywords.reflection);
      detail::read_opt(k, "affirmation", cfg.keywords.affirmation);
      detail::read_opt(k, "verification", cfg.keywords.verification);
      detail::read_opt(k, "case_sensitive", cfg.keywords.case_sensitive);
    }

    auto presets = builtin_shape_presets();
    if (j.contains("shapes_file")) {
      fs::path p = j["shapes_file"].get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      for (auto& m : load_shape_presets(p)) {
        std::erase_if(presets, [&](const ModelShape& x) { return x.name == m.name; });
        presets.push_back(std::move(m));
      }
    }
    bool use_layers = j.value("use_layer_count", false);
    if (j.contains("spec_shape")) {
      cfg.spec_shape = detail::parse_shape_ref(j["spec_shape"], presets, use_layers);
    } else if (use_layers) {
      cfg.spec_shape.layer_multiplier = cfg.spec_shape.layers;
    }
    if (j.contains("target_shape")) {
      cfg.target_shape = detail::parse_shape_ref(j["target_shape"], presets, use_layers);
    } else if (use_layers) {
      cfg.target_shape.layer_multiplier = cfg.target_shape.layers;
    }

    detail::read_opt(j, "prompt_template", cfg.prompt_template);
    detail::read_opt(j, "concurrency", cfg.concurrency);
    detail::read_opt(j, "seed", cfg.seed);
    if (j.contains("temperature") && !j["temperature"].is_null()) {
      cfg.temperature = j["temperature"].get<double>();
    }
    detail::read_opt(j, "question_timeout_seconds", cfg.question_timeout_seconds);
    detail::read_opt(j, "request_timeout_seconds", cfg.request_timeout_seconds);
    detail::read_opt(j, "max_retries", cfg.max_retries);
    detail::read_opt(j, "gpu_capacity", cfg.gpu_capacity);
    detail::read_opt(j, "target_full_prefill", cfg.target_full_prefill);
    detail::read_opt(j, "spec_model", cfg.spec_model);
    detail::read_opt(j, "target_model", cfg.target_model);
  } catch (const InputError&) {
    throw;
  } catch (const std::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }

  try {
    cfg.controller.validate();
    render_prompt(cfg.prompt_template, "");
  } catch (const std::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  if (cfg.concurrency == 0) throw InputError("config: concurrency must be >= 1");
  cfg.controller.sampling.seed = cfg.seed;
  cfg.controller.sampling.temperature = cfg.temperature;
  return cfg;
}

inline HarnessConfig load_harness_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw InputError("config " + path.string() + ": " + e.what());
  }
  return parse_harness_config(j, path.parent_path());
}

/// Where a backend comes from: an endpoint URL, a script file shared by all
/// questions, or a directory of per-question scripts named <id>.jsonl.
struct BackendSource {
  std::string url;
  fs::path script;
  std::string model;
};

// Returns a backend for one dataset record.
struct BackendPool {
  std::function<std::shared_ptr<Backend>(const DatasetRecord&)> acquire;
  // False when all records share one stateful scripted instance.
  bool concurrent_safe = true;
};

inline BackendPool make_backend_pool(const BackendSource& src, const HarnessConfig& cfg,
                                     const std::string& api_key, const char* role) {
  if (!src.url.empty() && !src.script.empty()) {
    throw InputError(std::string(role) + ": give either a URL or a script, not both");
  }
  if (!src.url.empty()) {
    HttpBackendConfig hc;
    hc.url = src.url;
    hc.model = src.model;
    hc.api_key = api_key;
    hc.max_retries = cfg.max_retries;
    hc.timeout_seconds = cfg.request_timeout_seconds;
    std::shared_ptr<Backend> shared;
    try {
      shared = std::make_shared<HttpBackend>(hc);
    } catch (const std::exception& e) {
      throw InputError(std::string(role) + ": " + e.what());
    }
    return {[shared](const DatasetRecord&) { return shared; }, true};
  }
  if (src.script.empty()) {
    throw InputError(std::string(role) + ": no endpoint URL or script given");
  }
  if (fs::is_directory(src.script)) {
    auto dir = src.script;
    return {[dir](const DatasetRecord& r) -> std::shared_ptr<Backend> {
              return std::make_shared<ScriptedBackend>(load_script(dir / (r.id + ".jsonl")));
            },
            true};
  }
  std::shared_ptr<Backend> shared;
  try {
    shared = std::make_shared<ScriptedBackend>(load_script(src.script));
  } catch (const std::exception& e) {
    throw InputError(std::string(role) + ": " + e.what());
  }
  return {[shared](const DatasetRecord&) { return shared; }, false};
}

inline ojson run_row(const std::string& id, const RunResult& r, const KeywordConfig& kw,
                     const std::string& delimiter) {
  ojson row{{"id", id},
            {"correct", r.correct},
            {"extracted_answer", r.extracted_answer ? ojson(*r.extracted_answer) : ojson(nullptr)},
            {"gold_answer", r.gold_answer},
            {"output_tokens", r.output_tokens},
            {"modify_ratio", r.modify_ratio},
            {"reflective_sentences",
             count_reflective_sentences(r.trace.output(), kw, delimiter)},
            {"stop_reason", r.trace.stop_reason}};
  if (r.speed) row["estimated_speed"] = r.speed->speed;
  return row;
}

struct RunOptions {
  fs::path dataset;
  fs::path config;
  BackendSource speculative;
  BackendSource target;
  fs::path out;
  // Defaults to <out>.report.json.
  fs::path report;
  std::string api_key;
};

inline fs::path default_report_path(const fs::path& out) {
  return fs::path(out.string() + ".report.json");
}

/// Runs every dataset question through the controller. Writes one trace
/// record per question (dataset order) and a report file. Returns 0 on
/// success, 1 when any run aborted, 2 on bad input.
inline int cmd_run(const RunOptions& opts, std::ostream& log) {
  HarnessConfig cfg;
  std::vector<DatasetRecord> dataset;
  BackendPool spec_pool, target_pool;
  try {
    cfg = load_harness_config(opts.config);
    dataset = load_dataset(opts.dataset);
    auto spec_src = opts.speculative;
    auto target_src = opts.target;
    if (spec_src.model.empty()) spec_src.model = cfg.spec_model;
    if (target_src.model.empty()) target_src.model = cfg.target_model;
    spec_pool = make_backend_pool(spec_src, cfg, opts.api_key, "speculative backend");
    target_pool = make_backend_pool(target_src, cfg, opts.api_key, "target backend");
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return 2;
  }

  std::ofstream out(opts.out, std::ios::binary | std::ios::trunc);
  if (!out) {
    log << "error: cannot write " << opts.out << '\n';
    return 2;
  }

  const std::size_t n = dataset.size();
  std::vector<std::optional<ojson>> records(n);
  std::vector<std::optional<RunResult>> results(n);
  std::size_t next_to_write = 0;
  std::mutex write_mu;
  std::atomic<std::size_t> next_index{0};
  std::atomic<bool> any_aborted{false};

  auto timeout = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(cfg.question_timeout_seconds));

  // Records are flushed in dataset order as soon as the prefix is complete,
  // so partial output survives a crash.
  auto publish = [&](std::size_t i, ojson rec, std::optional<RunResult> res) {
    std::lock_guard lock(write_mu);
    records[i] = std::move(rec);
    results[i] = std::move(res);
    while (next_to_write < n && records[next_to_write]) {
      out << records[next_to_write]->dump() << '\n';
      ++next_to_write;
    }
    out.flush();
  };

  auto worker = [&] {
    for (;;) {
      std::size_t i = next_index.fetch_add(1);
      if (i >= n) return;
      const auto& rec = dataset[i];
      ojson j{{"id", rec.id}, {"answer", rec.answer}};
      Trace trace;
      std::optional<std::string> error;
      try {
        auto spec = spec_pool.acquire(rec);
        auto target = target_pool.acquire(rec);
        Controller controller(*spec, *target, cfg.controller, cfg.keywords,
                              cfg.question_timeout_seconds > 0
                                  ? std::optional(timeout)
                                  : std::nullopt);
        trace = controller.run(rec.question, cfg.prompt_template);
      } catch (const RunAborted& e) {
        trace = e.partial();
        error = e.what();
      } catch (const std::exception& e) {
        trace.question = rec.question;
        trace.stop_reason = TraceStop::Aborted;
        error = e.what();
      }

      auto result = score_run(trace, rec.answer);
      ojson metrics{{"correct", result.correct},
                    {"extracted_answer", result.extracted_answer
                                             ? ojson(*result.extracted_answer)
                                             : ojson(nullptr)},
                    {"output_tokens", result.output_tokens},
                    {"modify_ratio", result.modify_ratio}};
      if (!error && trace.prompt_tokens > 0) {
        try {
          auto bd = hybrid_breakdown(trace, cfg.spec_shape, cfg.target_shape,
                                     {cfg.target_full_prefill});
          result.flops = bd;
          result.speed = estimated_speed(bd, result.output_tokens, cfg.gpu_capacity);
          metrics["flops"] = flops_to_json(bd);
          metrics["estimated_speed"] = result.speed->speed;
        } catch (const std::exception& e) {
          metrics["flops_error"] = e.what();
        }
      }
      append_trace_fields(j, trace);
      j["metrics"] = std::move(metrics);
      if (error) {
        j["error"] = *error;
        any_aborted = true;
        log << "run " << rec.id << " aborted: " << *error << '\n';
      }
      publish(i, std::move(j), error ? std::nullopt : std::optional(std::move(result)));
    }
  };

  std::size_t threads = spec_pool.concurrent_safe && target_pool.concurrent_safe
                            ? std::min(cfg.concurrency, n)
                            : 1;
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  out.close();

  std::vector<RunResult> completed;
  ojson rows = ojson::array();
  for (std::size_t i = 0; i < n; ++i) {
    if (!results[i]) continue;
    rows.push_back(run_row(dataset[i].id, *results[i], cfg.keywords, cfg.controller.delimiter));
    completed.push_back(std::move(*results[i]));
  }
  ojson report{{"report", completed.empty()
                              ? ojson(nullptr)
                              : to_json(corpus_report(completed, cfg.keywords,
                                                      cfg.controller.delimiter))},
               {"runs", rows}};
  auto report_path = opts.report.empty() ? default_report_path(opts.out) : opts.report;
  std::ofstream rep(report_path, std::ios::binary | std::ios::trunc);
  rep << report.dump(2) << '\n';
  if (!rep) {
    log << "error: cannot write " << report_path << '\n';
    return 2;
  }
  log << "wrote " << n << " traces to " << opts.out.string() << ", report to "
      << report_path.string() << '\n';
  return any_aborted ? 1 : 0;
}

struct AnalyzeOptions {
  fs::path traces;
  fs::path out;
  // Keywords and delimiter come from here when set.
  fs::path config;
  std::vector<std::string> words{"wait", "alternatively", "hmm"};
  std::size_t top_k = 10;
};

/// Corpus statistics over a trace file: the corpus report, per-run segment
/// labels and preceding-token tables. Tables are also printed to `log`.
inline int cmd_analyze(const AnalyzeOptions& opts, std::ostream& log) {
  KeywordConfig keywords = KeywordConfig::defaults();
  std::string delimiter{kDefaultDelimiter};
  if (!opts.config.empty()) {
    try {
      auto cfg = load_harness_config(opts.config);
      keywords = cfg.keywords;
      delimiter = cfg.controller.delimiter;
    } catch (const std::exception& e) {
      log << "error: " << e.what() << '\n';
      return 2;
    }
  }

  std::ifstream in(opts.traces);
  if (!in) {
    log << "error: cannot open traces " << opts.traces << '\n';
    return 2;
  }
  std::vector<RunResult> results;
  std::vector<std::vector<std::string>> corpus;
  ojson rows = ojson::array();
  PieceTokenizer tokenizer;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::string id;
    RunResult r;
    try {
      auto j = ojson::parse(line);
      id = j.at("id").is_string() ? j["id"].get<std::string>() : j["id"].dump();
      r = score_run(trace_from_json(j), j.value("answer", std::string{}));
    } catch (const std::exception& e) {
      log << "error: " << opts.traces.string() << ":" << line_no << ": " << e.what() << '\n';
      return 2;
    }
    auto output = r.trace.output();
    auto row = run_row(id, r, keywords, delimiter);
    ojson segments = ojson::array();
    for (const auto& s : segment_categorization(output, keywords, delimiter)) {
      segments.push_back({{"label", to_string(s.label)}, {"text", s.text}});
    }
    row["segments"] = std::move(segments);
    rows.push_back(std::move(row));
    corpus.push_back(tokenizer.split(output));
    results.push_back(std::move(r));
  }
  if (results.empty()) {
    log << "error: no traces in " << opts.traces << '\n';
    return 2;
  }

  auto tables = preceding_token_distribution(corpus, opts.words, opts.top_k);
  ojson report{{"report", to_json(corpus_report(results, keywords, delimiter))},
               {"runs", std::move(rows)},
               {"preceding_tokens", to_json(tables)}};
  std::ofstream out(opts.out, std::ios::binary | std::ios::trunc);
  out << report.dump(2) << '\n';
  if (!out) {
    log << "error: cannot write " << opts.out << '\n';
    return 2;
  }
  log << format_preceding_tables(tables);
  return 0;
}

struct FlopsOptions {
  std::string shape;
  std::uint64_t prompt_len = 1;
  std::uint64_t decode_len = 0;
  std::string target_shape;
  fs::path schedule;
  fs::path shapes_file;
  bool use_layer_count = false;
  double gpu_capacity = kDefaultGpuCapacity;
  bool json = false;
};

/// "NAME" from the presets, or inline "h=..,h_ff=..,n_heads=..,head_dim=..[,layers=..]".
inline ModelShape resolve_shape(const std::string& spec, const std::vector<ModelShape>& presets,
                                bool use_layer_count) {
  ModelShape m;
  if (spec.find('=') == std::string::npos) {
    m = find_shape(presets, spec);
  } else {
    m.name = "inline";
    std::istringstream in(spec);
    std::string kv;
    while (std::getline(in, kv, ',')) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw InputError("bad inline shape field '" + kv + "'");
      auto key = kv.substr(0, eq);
      std::uint64_t v = 0;
      try {
        v = std::stoull(kv.substr(eq + 1));
      } catch (const std::exception&) {
        throw InputError("bad inline shape value '" + kv + "'");
      }
      if (key == "h") m.hidden = v;
      else if (key == "h_ff") m.ffn_hidden = v;
      else if (key == "n_heads") m.n_heads = v;
      else if (key == "head_dim") m.head_dim = v;
      else if (key == "layers") m.layers = v;
      else if (key == "layer_multiplier") m.layer_multiplier = v;
      else throw InputError("unknown inline shape field '" + key + "'");
    }
  }
  if (use_layer_count && m.layers > 0) m.layer_multiplier = m.layers;
  m.validate();
  return m;
}

inline int cmd_flops(const FlopsOptions& opts, std::ostream& out, std::ostream& log) {
  try {
    auto presets = builtin_shape_presets();
    if (!opts.shapes_file.empty()) {
      for (auto& m : load_shape_presets(opts.shapes_file)) {
        std::erase_if(presets, [&](const ModelShape& x) { return x.name == m.name; });
        presets.push_back(std::move(m));
      }
    }
    auto spec = resolve_shape(opts.shape, presets, opts.use_layer_count);
    if (opts.prompt_len == 0) throw InputError("prompt length must be >= 1");

    FlopsBreakdown bd;
    std::uint64_t tokens = opts.decode_len;
    ojson j{{"shape", spec.name}};
    if (opts.target_shape.empty()) {
      if (!opts.schedule.empty()) throw InputError("--schedule needs --target-shape");
      bd = single_breakdown(opts.prompt_len, opts.decode_len, spec);
      j["prompt_len"] = opts.prompt_len;
      j["decode_len"] = opts.decode_len;
    } else {
      if (opts.schedule.empty()) throw InputError("--target-shape needs --schedule");
      auto target = resolve_shape(opts.target_shape, presets, opts.use_layer_count);
      auto trace = trace_from_schedule(opts.prompt_len, load_schedule(opts.schedule));
      bd = hybrid_breakdown(trace, spec, target);
      tokens = trace.output_tokens();
      j["target_shape"] = target.name;
      j["prompt_len"] = opts.prompt_len;
      j["output_tokens"] = tokens;
      j["modify_ratio"] = trace.modify_ratio();
    }
    auto speed = estimated_speed(bd, tokens, opts.gpu_capacity);
    j["flops"] = flops_to_json(bd);
    j["tokens"] = tokens;
    j["gpu_capacity"] = speed.gpu_capacity;
    j["estimated_speed"] = speed.speed;

    if (opts.json) {
      out << j.dump(2) << '\n';
      return 0;
    }
    auto line = [&](const std::string& k, const std::string& v) {
      out << std::left << std::setw(18) << k << " " << v << '\n';
    };
    line("shape", spec.name);
    if (j.contains("target_shape")) line("target_shape", j["target_shape"].get<std::string>());
    line("prompt_len", std::to_string(opts.prompt_len));
    line("tokens", std::to_string(tokens));
    line("prefill", to_string(bd.prefill));
    line("prefix", to_string(bd.prefix));
    line("decode", to_string(bd.decode));
    line("total", to_string(bd.total));
    for (const auto& [model, st] : bd.by_model) {
      line(model + ".total", to_string(st.total()));
    }
    std::ostringstream sp;
    sp << std::fixed << std::setprecision(3) << speed.speed << " tokens/s";
    line("estimated_speed", sp.str());
    return 0;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace specthink
