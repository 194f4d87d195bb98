// Copyright 2026 The uid-decode Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "uid_decode/metrics.hpp"

namespace uid_decode {
namespace {

GenerationRecord record_of(const std::vector<double>& h, const std::vector<double>& s) {
  GenerationRecord r;
  for (std::size_t i = 0; i < h.size(); ++i) r.steps.push_back({0, h[i], h[i], s[i], false, 1});
  return r;
}

MetricsSummary row(std::string corpus, std::string strategy, double h, double hs, double s, double ss) {
  MetricsSummary m;
  m.corpus = std::move(corpus);
  m.strategy = std::move(strategy);
  m.avg_entropy = h;
  m.entropy_std = hs;
  m.avg_surprisal = s;
  m.surprisal_std = ss;
  m.gap = entropy_surprisal_gap(h, s);
  return m;
}

TEST(Summarize, PopulationStatistics) {
  const std::vector<GenerationRecord> recs{record_of({1.0, 2.0, 3.0}, {4.0, 4.0, 4.0})};
  const auto m = summarize(recs, "s", "c");
  EXPECT_DOUBLE_EQ(m.avg_entropy, 2.0);
  EXPECT_NEAR(m.entropy_std, std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(m.entropy_std, 0.8165, 5e-5);
  EXPECT_EQ(m.avg_surprisal, 4.0);
  EXPECT_EQ(m.surprisal_std, 0.0);
  EXPECT_EQ(m.gap, 2.0);
  EXPECT_EQ(m.n_tokens, 3u);
  EXPECT_EQ(m.n_sequences, 1u);
}

TEST(Summarize, EmptyInputIsAnError) {
  EXPECT_THROW(summarize(std::vector<GenerationRecord>{}, "s", "c"), ConfigError);
  EXPECT_THROW(summarize(std::vector<GenerationRecord>{GenerationRecord{}}, "s", "c"), ConfigError);
  EXPECT_THROW(render_markdown(std::vector<MetricsSummary>{}), ConfigError);
}

TEST(Gap, AbsoluteDifferenceAtFourDecimals) {
  EXPECT_EQ(format_fixed(entropy_surprisal_gap(6.6271, 5.2315)), "1.3956");
  EXPECT_EQ(format_fixed(entropy_surprisal_gap(6.3033, 7.8657)), "1.5624");
  EXPECT_EQ(format_fixed(entropy_surprisal_gap(5.8511, 5.7135)), "0.1376");
}

TEST(Format, FourDecimals) {
  EXPECT_EQ(format_fixed(5.85114999), "5.8511");
  EXPECT_EQ(format_fixed(0.0), "0.0000");
  EXPECT_EQ(format_fixed(2.0 / 3.0), "0.6667");
}

TEST(RenderTable, RowOrderAndBoldMinima) {
  const std::vector<MetricsSummary> rows{
      row("wiki", "entropy_uid", 3.0, 1.0, 3.5, 1.0), row("news", "uid_only", 2.0, 0.5, 1.0, 0.2),
      row("wiki", "baseline_sample", 4.0, 0.8, 4.0, 1.5), row("news", "baseline_sample", 5.0, 0.9, 5.0, 1.7),
      row("wiki", "uid_only", 3.5, 0.9, 2.5, 0.5), row("news", "entropy_only", 1.0, 0.4, 3.0, 1.1),
      row("wiki", "entropy_only", 2.0, 1.2, 3.0, 1.3), row("news", "entropy_uid", 1.5, 0.45, 1.5, 0.3)};
  const auto t = render_table(rows);

  std::vector<std::string> lines;
  for (std::size_t pos = 0, next; pos < t.markdown.size(); pos = next + 1) {
    next = t.markdown.find('\n', pos);
    lines.push_back(t.markdown.substr(pos, next - pos));
  }
  ASSERT_EQ(lines.size(), 10u);
  EXPECT_NE(lines[0].find("Dataset"), std::string::npos);
  EXPECT_NE(lines[0].find("Surprisal STD"), std::string::npos);
  const char* order[] = {"baseline_sample", "entropy_only", "uid_only", "entropy_uid"};
  for (int i = 0; i < 8; ++i) {
    EXPECT_NE(lines[2 + i].find(std::string("| ") + order[i % 4] + " "), std::string::npos) << lines[2 + i];
  }
  EXPECT_NE(lines[2].find("| wiki"), std::string::npos);
  EXPECT_NE(lines[6].find("| news"), std::string::npos);
  // wiki minima: entropy_only average entropy, uid_only surprisal STD, baseline entropy STD.
  EXPECT_NE(lines[3].find("**2.0000**"), std::string::npos);
  EXPECT_NE(lines[4].find("**0.5000**"), std::string::npos);
  EXPECT_NE(lines[2].find("**0.8000**"), std::string::npos);
  EXPECT_EQ(lines[2].find("**4.0000**"), std::string::npos);

  EXPECT_EQ(t.csv.substr(0, t.csv.find('\n')), kSummaryCsvHeader);
  EXPECT_NE(t.csv.find("\nwiki,baseline_sample,4,"), std::string::npos);
}

TEST(GapPlotdata, OneRowPerSummary) {
  const std::vector<MetricsSummary> rows{row("c", "uid_only", 1.0, 0.0, 3.0, 0.0)};
  EXPECT_EQ(emit_gap_plotdata(rows), "corpus,strategy,gap\nc,uid_only,2\n");
}

// Property: metrics match a naive recomputation on random record sets.
TEST(MetricsProperty, MatchesBruteForceAndIsPoolingInvariant) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 9.0);
  for (int set = 0; set < 100; ++set) {
    std::vector<GenerationRecord> recs(1 + rng() % 6);
    std::vector<double> all_h;
    std::vector<double> all_s;
    for (auto& r : recs) {
      for (std::size_t i = 0, n = 1 + rng() % 12; i < n; ++i) {
        const double h = u(rng);
        const double s = u(rng);
        r.steps.push_back({0, h, h, s, false, 1});
        all_h.push_back(h);
        all_s.push_back(s);
      }
    }
    long double mh = 0;
    for (double x : all_h) mh += x;
    mh /= all_h.size();
    long double vh = 0;
    for (double x : all_h) vh += (x - mh) * (x - mh);
    const auto m = summarize(recs, "s", "c");
    EXPECT_NEAR(m.avg_entropy, static_cast<double>(mh), 1e-12);
    EXPECT_NEAR(m.entropy_std, std::sqrt(static_cast<double>(vh / all_h.size())), 1e-12);

    // The same steps repartitioned into one sequence give the same statistics.
    const auto pooled = summarize(std::vector<GenerationRecord>{record_of(all_h, all_s)}, "s", "c");
    EXPECT_EQ(pooled.avg_entropy, m.avg_entropy);
    EXPECT_EQ(pooled.entropy_std, m.entropy_std);
    EXPECT_EQ(pooled.avg_surprisal, m.avg_surprisal);
    EXPECT_EQ(pooled.surprisal_std, m.surprisal_std);
    EXPECT_EQ(m.gap, std::abs(m.avg_entropy - m.avg_surprisal));
  }
}

}  // namespace
}  // namespace uid_decode
