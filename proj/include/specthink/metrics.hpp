// Copyright 2026 The Speculative Thinking Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "specthink/flops.hpp"
#include "specthink/sentence_classifier.hpp"
#include "specthink/text_segmentation.hpp"
#include "specthink/trace.hpp"

namespace specthink {

struct RunResult {
  Trace trace;
  std::optional<std::string> extracted_answer;
  std::string gold_answer;
  bool correct = false;
  std::size_t output_tokens = 0;
  double modify_ratio = 0.0;
  // Filled by callers that know the model shapes.
  std::optional<FlopsBreakdown> flops;
  std::optional<SpeedEstimate> speed;
};

/// pass@1 scoring: boxed answer vs gold after normalization.
inline RunResult score_run(const Trace& trace, std::string_view gold_answer) {
  RunResult r;
  r.trace = trace;
  r.gold_answer = std::string(gold_answer);
  auto output = trace.output();
  if (auto boxed = extract_boxed_answer(output)) {
    r.extracted_answer = normalize_answer(*boxed);
    r.correct = *r.extracted_answer == normalize_answer(gold_answer);
  }
  r.output_tokens = trace.output_tokens();
  r.modify_ratio = trace.modify_ratio();
  return r;
}

struct LabeledSegment {
  std::string text;
  SentenceLabel label = SentenceLabel::Statement;

  bool operator==(const LabeledSegment&) const = default;
};

/// Splits on the delimiter and labels each segment by its leading sentence.
inline std::vector<LabeledSegment> segment_categorization(
    std::string_view output, const KeywordConfig& keywords,
    std::string_view delimiter = kDefaultDelimiter) {
  std::vector<LabeledSegment> out;
  if (output.empty()) return out;
  for (auto segment : split_segments(output, delimiter)) {
    auto sentence = segment.substr(0, leading_sentence_length(segment, delimiter));
    out.push_back({std::string(segment), classify_sentence(sentence, keywords).label});
  }
  return out;
}

/// Reflective sentences among those that directly follow a delimiter.
inline std::size_t count_reflective_sentences(std::string_view output,
                                              const KeywordConfig& keywords,
                                              std::string_view delimiter = kDefaultDelimiter) {
  auto segments = segment_categorization(output, keywords, delimiter);
  std::size_t n = 0;
  for (std::size_t i = 1; i < segments.size(); ++i) {
    if (segments[i].label == SentenceLabel::Reflection) ++n;
  }
  return n;
}

class EmptyCorpusError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CorpusReport {
  std::size_t runs = 0;
  std::size_t correct_runs = 0;
  double accuracy = 0.0;
  double avg_length = 0.0;
  // Absent when the class has no runs.
  std::optional<double> avg_length_correct;
  std::optional<double> avg_length_incorrect;
  std::optional<double> avg_reflective_correct;
  std::optional<double> avg_reflective_incorrect;
  double avg_modify_ratio = 0.0;

  bool operator==(const CorpusReport&) const = default;
};

inline CorpusReport corpus_report(const std::vector<RunResult>& results,
                                  const KeywordConfig& keywords,
                                  std::string_view delimiter = kDefaultDelimiter) {
  if (results.empty()) throw EmptyCorpusError("corpus report over an empty result set");
  // Integer sums are order-free; ratios are summed in sorted order so the
  // report does not depend on input order.
  std::size_t len_all = 0, len_ok = 0, len_bad = 0, refl_ok = 0, refl_bad = 0;
  std::size_t n_ok = 0;
  std::vector<double> ratios;
  for (const auto& r : results) {
    auto reflective = count_reflective_sentences(r.trace.output(), keywords, delimiter);
    len_all += r.output_tokens;
    if (r.correct) {
      ++n_ok;
      len_ok += r.output_tokens;
      refl_ok += reflective;
    } else {
      len_bad += r.output_tokens;
      refl_bad += reflective;
    }
    ratios.push_back(r.modify_ratio);
  }
  std::sort(ratios.begin(), ratios.end());
  double ratio_sum = 0.0;
  for (double x : ratios) ratio_sum += x;

  auto n = static_cast<double>(results.size());
  std::size_t n_bad = results.size() - n_ok;
  CorpusReport rep;
  rep.runs = results.size();
  rep.correct_runs = n_ok;
  rep.accuracy = static_cast<double>(n_ok) / n;
  rep.avg_length = static_cast<double>(len_all) / n;
  if (n_ok > 0) {
    rep.avg_length_correct = static_cast<double>(len_ok) / static_cast<double>(n_ok);
    rep.avg_reflective_correct = static_cast<double>(refl_ok) / static_cast<double>(n_ok);
  }
  if (n_bad > 0) {
    rep.avg_length_incorrect = static_cast<double>(len_bad) / static_cast<double>(n_bad);
    rep.avg_reflective_incorrect = static_cast<double>(refl_bad) / static_cast<double>(n_bad);
  }
  rep.avg_modify_ratio = ratio_sum / n;
  return rep;
}

struct PrecedingTokenRow {
  std::string token;
  std::size_t count = 0;
  double proportion = 0.0;

  bool operator==(const PrecedingTokenRow&) const = default;
};

struct PrecedingTokenTable {
  std::string word;
  // Occurrences that have a preceding token (a word at position 0 has none
  // and is not counted).
  std::size_t occurrences = 0;
  // Descending by count, ties by token text; at most k rows.
  std::vector<PrecedingTokenRow> rows;

  bool operator==(const PrecedingTokenTable&) const = default;
};

namespace detail {

inline std::string normalized_token(std::string_view token) {
  return ascii_lower(trim(token));
}

// Does the phrase (split on spaces) start at tokens[i]? Whitespace-only
// tokens between phrase words are skipped.
inline bool phrase_starts_at(const std::vector<std::string>& tokens, std::size_t i,
                             const std::vector<std::string>& phrase) {
  std::size_t t = i;
  for (std::size_t w = 0; w < phrase.size(); ++w) {
    if (w > 0) {
      ++t;
      while (t < tokens.size() && trim(tokens[t]).empty()) ++t;
    }
    if (t >= tokens.size() || normalized_token(tokens[t]) != phrase[w]) return false;
  }
  return true;
}

inline std::vector<std::string> split_on_spaces(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(ascii_lower(w));
  return out;
}

}  // namespace detail

/// For each target word, the distribution of the literal token right before
/// it across a tokenized corpus.
inline std::vector<PrecedingTokenTable> preceding_token_distribution(
    const std::vector<std::vector<std::string>>& corpus,
    const std::vector<std::string>& target_words, std::size_t k) {
  std::vector<PrecedingTokenTable> tables;
  for (const auto& word : target_words) {
    auto phrase = detail::split_on_spaces(word);
    PrecedingTokenTable table;
    table.word = word;
    std::map<std::string, std::size_t> counts;
    if (!phrase.empty()) {
      for (const auto& tokens : corpus) {
        for (std::size_t i = 1; i < tokens.size(); ++i) {
          if (detail::phrase_starts_at(tokens, i, phrase)) {
            ++counts[tokens[i - 1]];
            ++table.occurrences;
          }
        }
      }
    }
    for (const auto& [tok, c] : counts) {
      table.rows.push_back({tok, c,
                            static_cast<double>(c) / static_cast<double>(table.occurrences)});
    }
    std::stable_sort(table.rows.begin(), table.rows.end(),
                     [](const auto& a, const auto& b) { return a.count > b.count; });
    if (table.rows.size() > k) table.rows.resize(k);
    tables.push_back(std::move(table));
  }
  return tables;
}

// Token text with control characters escaped, for display.
inline std::string escape_token(std::string_view token) {
  std::string out;
  for (char c : token) {
    switch (c) {
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      case '"': out += "\\\""; break;
      default: out.push_back(c);
    }
  }
  return out;
}

/// Plain-text layout: one block per word, five cells per row,
/// each cell `"token" (0.xxx)`.
inline std::string format_preceding_tables(const std::vector<PrecedingTokenTable>& tables) {
  constexpr std::size_t kPerRow = 5;
  std::size_t word_width = 4;
  std::size_t cell_width = 0;
  std::vector<std::vector<std::string>> cells(tables.size());
  for (std::size_t t = 0; t < tables.size(); ++t) {
    word_width = std::max(word_width, tables[t].word.size());
    for (const auto& row : tables[t].rows) {
      std::ostringstream cell;
      cell << '"' << escape_token(row.token) << "\" (" << std::fixed
           << std::setprecision(3) << row.proportion << ')';
      cell_width = std::max(cell_width, cell.str().size());
      cells[t].push_back(cell.str());
    }
  }
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(word_width)) << "Word"
      << "  Preceding tokens (proportion)\n";
  for (std::size_t t = 0; t < tables.size(); ++t) {
    if (cells[t].empty()) {
      out << std::setw(static_cast<int>(word_width)) << tables[t].word << "  (no occurrences)\n";
      continue;
    }
    for (std::size_t i = 0; i < cells[t].size(); i += kPerRow) {
      out << std::setw(static_cast<int>(word_width)) << (i == 0 ? tables[t].word : "");
      for (std::size_t j = i; j < std::min(i + kPerRow, cells[t].size()); ++j) {
        out << "  " << std::setw(static_cast<int>(cell_width)) << cells[t][j];
      }
      out << '\n';
    }
  }
  return out.str();
}

inline nlohmann::ordered_json to_json(const CorpusReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  return {{"runs", r.runs},
          {"correct_runs", r.correct_runs},
          {"accuracy", r.accuracy},
          {"avg_length", r.avg_length},
          {"avg_length_correct", opt(r.avg_length_correct)},
          {"avg_length_incorrect", opt(r.avg_length_incorrect)},
          {"avg_reflective_correct", opt(r.avg_reflective_correct)},
          {"avg_reflective_incorrect", opt(r.avg_reflective_incorrect)},
          {"avg_modify_ratio", r.avg_modify_ratio}};
}

inline nlohmann::ordered_json to_json(const std::vector<PrecedingTokenTable>& tables) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& t : tables) {
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : t.rows) {
      rows.push_back({{"token", r.token}, {"count", r.count}, {"proportion", r.proportion}});
    }
    arr.push_back({{"word", t.word}, {"occurrences", t.occurrences}, {"rows", rows}});
  }
  return arr;
}

}  // namespace specthink
