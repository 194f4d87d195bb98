// Copyright 2026 The uid-decode Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Aggregate statistics over generated steps and the comparison table.
 *
 * Means and standard deviations pool every step of every record in a cell
 * (strategy x corpus). Standard deviations use the population (1/N) form.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uid_decode/common.hpp"
#include "uid_decode/decoder.hpp"

namespace uid_decode {

struct MetricsSummary {
  std::string strategy;
  std::string corpus;
  double avg_entropy = 0.0;
  double entropy_std = 0.0;
  double avg_surprisal = 0.0;
  double surprisal_std = 0.0;
  double gap = 0.0;
  std::size_t n_sequences = 0;
  std::size_t n_tokens = 0;
  double fallback_rate = 0.0;
};

inline double entropy_surprisal_gap(double avg_entropy, double avg_surprisal) {
  return std::abs(avg_entropy - avg_surprisal);
}

namespace detail {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

// Two-pass mean and population standard deviation.
inline MeanStd mean_std(std::span<const double> xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  return {mean, std::sqrt(sq / static_cast<double>(xs.size()))};
}

}  // namespace detail

inline MetricsSummary summarize(std::span<const GenerationRecord> records, std::string strategy,
                                std::string corpus) {
  std::vector<double> entropies;
  std::vector<double> surprisals;
  std::size_t fallbacks = 0;
  for (const auto& r : records) {
    for (const auto& s : r.steps) {
      entropies.push_back(s.step_entropy);
      surprisals.push_back(s.chosen_surprisal);
      fallbacks += s.fallback_used ? 1 : 0;
    }
  }
  if (entropies.empty()) throw ConfigError("summarize needs at least one generated step");
  const auto h = detail::mean_std(entropies);
  const auto s = detail::mean_std(surprisals);
  MetricsSummary m;
  m.strategy = std::move(strategy);
  m.corpus = std::move(corpus);
  m.avg_entropy = h.mean;
  m.entropy_std = h.std;
  m.avg_surprisal = s.mean;
  m.surprisal_std = s.std;
  m.gap = entropy_surprisal_gap(h.mean, s.mean);
  m.n_sequences = records.size();
  m.n_tokens = entropies.size();
  m.fallback_rate = static_cast<double>(fallbacks) / static_cast<double>(entropies.size());
  return m;
}

/// Fixed-point with `digits` decimals; ties on the binary value round to even.
inline std::string format_fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Shortest-safe full precision for CSV cells.
inline std::string format_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

// Position of a strategy label in the table's row order; unknown labels sort
// last and keep their input order. Labels may carry a "@..." suffix
// (alpha-grid runs), which sorts with their base strategy.
inline int strategy_rank(std::string_view label) {
  const std::string_view base = label.substr(0, label.find('@'));
  constexpr std::string_view order[] = {"baseline_sample", "baseline_greedy", "entropy_only", "uid_only",
                                        "entropy_uid"};
  for (int i = 0; i < 5; ++i) {
    if (base == order[i]) return i;
  }
  return 5;
}

inline std::vector<const MetricsSummary*> table_order(std::span<const MetricsSummary> rows) {
  std::vector<std::string> corpora;
  for (const auto& r : rows) {
    if (std::find(corpora.begin(), corpora.end(), r.corpus) == corpora.end()) corpora.push_back(r.corpus);
  }
  std::vector<const MetricsSummary*> out;
  for (const auto& c : corpora) {
    std::vector<const MetricsSummary*> group;
    for (const auto& r : rows) {
      if (r.corpus == c) group.push_back(&r);
    }
    std::stable_sort(group.begin(), group.end(), [](const auto* a, const auto* b) {
      return strategy_rank(a->strategy) < strategy_rank(b->strategy);
    });
    out.insert(out.end(), group.begin(), group.end());
  }
  return out;
}

}  // namespace detail

/**
 * Markdown comparison table: rows grouped by corpus (first-appearance order)
 * then by strategy (baseline, entropy_only, uid_only, entropy_uid). Metric
 * columns are printed to four decimals and each corpus's minimum per column
 * is bold.
 */
inline std::string render_markdown(std::span<const MetricsSummary> rows) {
  if (rows.empty()) throw ConfigError("render_table needs at least one summary");
  const auto ordered = detail::table_order(rows);

  using Getter = double (*)(const MetricsSummary&);
  const Getter cols[] = {
      [](const MetricsSummary& m) { return m.avg_entropy; },
      [](const MetricsSummary& m) { return m.entropy_std; },
      [](const MetricsSummary& m) { return m.avg_surprisal; },
      [](const MetricsSummary& m) { return m.surprisal_std; },
  };
  std::map<std::string, std::array<double, 4>> minima;
  for (const auto* r : ordered) {
    auto [it, fresh] = minima.try_emplace(r->corpus);
    for (std::size_t c = 0; c < 4; ++c) {
      const double v = cols[c](*r);
      if (fresh || v < it->second[c]) it->second[c] = v;
    }
  }

  std::vector<std::array<std::string, 6>> cells;
  cells.push_back({"Dataset", "Model", "Avg Entropy", "Entropy STD", "Avg Surprisal", "Surprisal STD"});
  std::string prev_corpus;
  for (const auto* r : ordered) {
    std::array<std::string, 6> row;
    row[0] = r->corpus == prev_corpus ? "" : r->corpus;
    prev_corpus = r->corpus;
    row[1] = r->strategy;
    for (std::size_t c = 0; c < 4; ++c) {
      const double v = cols[c](*r);
      row[c + 2] = format_fixed(v);
      if (v == minima[r->corpus][c]) row[c + 2] = "**" + row[c + 2] + "**";
    }
    cells.push_back(std::move(row));
  }

  std::array<std::size_t, 6> width{};
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < 6; ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  auto emit_row = [&](const std::array<std::string, 6>& row) {
    out += '|';
    for (std::size_t c = 0; c < 6; ++c) {
      const std::string pad(width[c] - row[c].size(), ' ');
      out += ' ';
      // Text columns left-aligned, numbers right-aligned.
      out += c < 2 ? row[c] + pad : pad + row[c];
      out += " |";
    }
    out += '\n';
  };
  emit_row(cells[0]);
  out += '|';
  for (std::size_t c = 0; c < 6; ++c) {
    out += c < 2 ? ' ' + std::string(width[c], '-') + " |" : ' ' + std::string(width[c] - 1, '-') + ": |";
  }
  out += '\n';
  for (std::size_t i = 1; i < cells.size(); ++i) emit_row(cells[i]);
  return out;
}

inline constexpr std::string_view kSummaryCsvHeader =
    "corpus,strategy,avg_entropy,entropy_std,avg_surprisal,surprisal_std,gap,n_sequences,n_tokens,fallback_rate";

/// Unrounded CSV in the same row order as the Markdown table.
inline std::string render_csv(std::span<const MetricsSummary> rows) {
  if (rows.empty()) throw ConfigError("render_table needs at least one summary");
  std::string out(kSummaryCsvHeader);
  out += '\n';
  for (const auto* r : detail::table_order(rows)) {
    out += r->corpus + ',' + r->strategy + ',' + format_full(r->avg_entropy) + ',' +
           format_full(r->entropy_std) + ',' + format_full(r->avg_surprisal) + ',' +
           format_full(r->surprisal_std) + ',' + format_full(r->gap) + ',' + std::to_string(r->n_sequences) +
           ',' + std::to_string(r->n_tokens) + ',' + format_full(r->fallback_rate) + '\n';
  }
  return out;
}

struct RenderedTable {
  std::string markdown;
  std::string csv;
};

inline RenderedTable render_table(std::span<const MetricsSummary> rows) {
  return {render_markdown(rows), render_csv(rows)};
}

/// (corpus, strategy, gap) rows for plotting |avg entropy - avg surprisal|.
inline std::string emit_gap_plotdata(std::span<const MetricsSummary> rows) {
  if (rows.empty()) throw ConfigError("emit_gap_plotdata needs at least one summary");
  std::string out = "corpus,strategy,gap\n";
  for (const auto* r : detail::table_order(rows)) {
    out += r->corpus + ',' + r->strategy + ',' + format_full(r->gap) + '\n';
  }
  return out;
}

}  // namespace uid_decode
