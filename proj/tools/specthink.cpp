// Copyright 2026 The Speculative Thinking Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "specthink/harness.hpp"

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  if (!fallback.empty()) return fallback;
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string{};
}

}  // namespace

int main(int argc, char** argv) {
  using namespace specthink;
  CLI::App app{"Speculative thinking: a small reasoning model drafts, a large one takes over "
               "at reflection points"};
  app.require_subcommand(1);

  RunOptions run;
  std::string spec_script, target_script;
  auto* run_cmd = app.add_subcommand("run", "Run a dataset through the controller");
  run_cmd->add_option("--dataset", run.dataset, "Dataset JSON Lines {id, question, answer}")
      ->required();
  run_cmd->add_option("--config", run.config, "Harness config JSON")->required();
  run_cmd->add_option("--spec-url", run.speculative.url,
                      "Speculative completions endpoint (env SPEC_THINK_SPEC_URL)");
  run_cmd->add_option("--spec-script", spec_script,
                      "Speculative script file, or directory of <id>.jsonl scripts");
  run_cmd->add_option("--spec-model", run.speculative.model, "Model name sent to the endpoint");
  run_cmd->add_option("--target-url", run.target.url,
                      "Target completions endpoint (env SPEC_THINK_TARGET_URL)");
  run_cmd->add_option("--target-script", target_script,
                      "Target script file, or directory of <id>.jsonl scripts");
  run_cmd->add_option("--target-model", run.target.model, "Model name sent to the endpoint");
  run_cmd->add_option("--api-key", run.api_key, "Bearer token (env SPEC_THINK_API_KEY)");
  run_cmd->add_option("--out", run.out, "Trace JSON Lines output")->required();
  run_cmd->add_option("--report", run.report, "Report JSON (default <out>.report.json)");

  AnalyzeOptions analyze;
  std::string words;
  auto* analyze_cmd = app.add_subcommand("analyze", "Corpus statistics over a trace file");
  analyze_cmd->add_option("--traces", analyze.traces, "Trace JSON Lines")->required();
  analyze_cmd->add_option("--out", analyze.out, "Report JSON")->required();
  analyze_cmd->add_option("--words", words, "Comma-separated target words (default wait,alternatively,hmm)");
  analyze_cmd->add_option("--config", analyze.config, "Harness config for keywords/delimiter");
  analyze_cmd->add_option("--top-k", analyze.top_k, "Rows per preceding-token table")
      ->check(CLI::PositiveNumber);

  FlopsOptions flops;
  auto* flops_cmd = app.add_subcommand("flops", "Theoretical FLOPs and estimated speed");
  flops_cmd->add_option("--shape", flops.shape,
                        "Preset name or h=..,h_ff=..,n_heads=..,head_dim=..")
      ->required();
  flops_cmd->add_option("--prompt-len", flops.prompt_len, "Prompt tokens")->required();
  flops_cmd->add_option("--decode-len", flops.decode_len, "Decoded tokens (single-model mode)");
  flops_cmd->add_option("--target-shape", flops.target_shape, "Target preset or inline shape");
  flops_cmd->add_option("--schedule", flops.schedule,
                        "Handoff schedule JSON Lines {provenance, tokens}");
  flops_cmd->add_option("--shapes", flops.shapes_file, "Extra shape presets JSON Lines");
  flops_cmd->add_flag("--use-layers", flops.use_layer_count,
                      "Multiply by each shape's layer count");
  flops_cmd->add_option("--gpu-capacity", flops.gpu_capacity, "FLOPs per second")
      ->check(CLI::PositiveNumber);
  flops_cmd->add_flag("--json", flops.json, "Print JSON");

  CLI11_PARSE(app, argc, argv);

  if (run_cmd->parsed()) {
    run.speculative.script = spec_script;
    run.target.script = target_script;
    if (spec_script.empty()) run.speculative.url = env_or("SPEC_THINK_SPEC_URL", run.speculative.url);
    if (target_script.empty()) run.target.url = env_or("SPEC_THINK_TARGET_URL", run.target.url);
    run.api_key = env_or("SPEC_THINK_API_KEY", run.api_key);
    return cmd_run(run, std::cerr);
  }
  if (analyze_cmd->parsed()) {
    if (!words.empty()) {
      analyze.words.clear();
      std::stringstream ss(words);
      std::string w;
      while (std::getline(ss, w, ',')) {
        if (!w.empty()) analyze.words.push_back(ascii_lower(w));
      }
    }
    return cmd_analyze(analyze, std::cout);
  }
  return cmd_flops(flops, std::cout, std::cerr);
}
