// Copyright 2026 The uid-decode Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "uid_decode/decoder.hpp"

namespace uid_decode {
namespace {

using testing::FixedSource;
using testing::TableSource;

constexpr double kInf = std::numeric_limits<double>::infinity();

DecoderConfig config(Strategy s, double alpha, EntropyMode mode = EntropyMode::step) {
  DecoderConfig c;
  c.strategy = s;
  c.alpha = alpha;
  c.entropy_mode = mode;
  return c;
}

TEST(SelectEntropyUid, SurprisalOnlyPicksMostProbable) {
  FixedSource src({0.5, 0.3, 0.2}, 99);
  auto cfg = config(Strategy::entropy_uid, 0.0);
  cfg.h_max = kInf;
  cfg.delta_max = kInf;
  EXPECT_EQ(select_entropy_uid(src, {}, cfg).first, 0u);
}

TEST(SelectEntropyUid, SurprisalThresholdKeepsOnlyTopCandidate) {
  // S = (0.693, 1.204, 1.609) nats; only token 0 survives delta_max = 1.0.
  FixedSource src({0.5, 0.3, 0.2}, 99);
  auto cfg = config(Strategy::entropy_uid, 0.5);
  cfg.h_max = kInf;
  cfg.delta_max = 1.0;
  const auto [token, step] = select_entropy_uid(src, {}, cfg);
  EXPECT_EQ(token, 0u);
  EXPECT_FALSE(step.fallback_used);
  EXPECT_EQ(step.candidates_surviving, 1u);
}

TEST(SelectEntropyUid, EmptyFilterFallsBackToUnfilteredArgmin) {
  FixedSource src({0.5, 0.3, 0.2}, 99);
  auto cfg = config(Strategy::entropy_uid, 0.5);
  cfg.h_max = kInf;
  cfg.delta_max = 0.1;
  const auto [token, step] = select_entropy_uid(src, {}, cfg);
  EXPECT_EQ(token, 0u);
  EXPECT_TRUE(step.fallback_used);
  EXPECT_EQ(step.candidates_surviving, 0u);
}

TEST(SelectBaseline, GreedyTakesArgmax) {
  FixedSource src({0.2, 0.5, 0.3}, 99);
  std::mt19937_64 rng(1);
  EXPECT_EQ(select_baseline(src, {}, config(Strategy::baseline_greedy, 0.5), rng).first, 1u);
}

TEST(SelectCandidate, TiesGoToMoreProbableThenLowestId) {
  FixedSource src({0.4, 0.4, 0.2}, 99);
  std::mt19937_64 rng(1);
  EXPECT_EQ(select_baseline(src, {}, config(Strategy::baseline_greedy, 0.5), rng).first, 0u);
  auto cfg = config(Strategy::uid_only, 0.0);
  EXPECT_EQ(select_entropy_uid(src, {}, cfg).first, 0u);

  const std::vector<Candidate> pool{{7, 0.1, 1.0, 2.0}, {3, 0.3, 2.0, 1.0}, {5, 0.3, 1.5, 1.5}};
  // Every candidate scores 1.5 at alpha = 0.5; 3 and 5 share the top probability.
  EXPECT_EQ(select_candidate(pool, 0.5, {}).index, 1u);
}

TEST(CandidateEntropy, PointwiseBaseTwo) {
  FixedSource src({0.5, 0.5}, 99);
  EXPECT_DOUBLE_EQ(candidate_entropy(src, {}, 0, EntropyMode::pointwise, LogBase::base2), 0.5);
}

TEST(CandidateEntropy, LookaheadUsesExtendedContext) {
  TableSource src(3, 2, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  src.set({}, {0.6, 0.4, 0.0});
  src.set({0}, {1.0, 0.0, 0.0});
  src.set({1}, {0.5, 0.5, 0.0});
  EXPECT_EQ(candidate_entropy(src, {}, 0, EntropyMode::lookahead, LogBase::base2), 0.0);
  EXPECT_EQ(candidate_entropy(src, {}, 1, EntropyMode::lookahead, LogBase::base2), 1.0);
  EXPECT_DOUBLE_EQ(candidate_entropy(src, {}, 1, EntropyMode::step, LogBase::base2),
                   -(0.6 * std::log2(0.6) + 0.4 * std::log2(0.4)));
}

TEST(Generate, MaxLenZeroEmitsNothing) {
  FixedSource src({0.5, 0.5}, 1);
  auto cfg = config(Strategy::baseline_greedy, 0.5);
  cfg.max_len = 0;
  const auto rec = generate(src, std::vector<TokenId>{}, cfg);
  EXPECT_TRUE(rec.steps.empty());
  EXPECT_EQ(rec.terminated_by, Termination::max_len);
}

TEST(Generate, PromptLongerThanMaxLenEmitsNothing) {
  FixedSource src({0.5, 0.5}, 1);
  auto cfg = config(Strategy::entropy_uid, 0.5);
  cfg.max_len = 3;
  const auto rec = generate(src, std::vector<TokenId>{0, 0, 0, 0}, cfg);
  EXPECT_TRUE(rec.steps.empty());
}

TEST(Generate, StopsOnEosAndRecordsIt) {
  // a=0, b=1, eos=2: "a" -> "b" -> eos.
  TableSource src(3, 2, {0.1, 0.1, 0.8});
  src.set({0}, {0.05, 0.9, 0.05});
  src.set({0, 1}, {0.05, 0.05, 0.9});
  auto cfg = config(Strategy::baseline_greedy, 0.5);
  cfg.max_len = 10;
  const auto rec = generate(src, std::vector<TokenId>{0}, cfg);
  EXPECT_EQ(rec.generated(), (std::vector<TokenId>{1, 2}));
  EXPECT_EQ(rec.terminated_by, Termination::eos);
}

TEST(Generate, MaxLenBoundsPromptPlusOutput) {
  FixedSource src({0.6, 0.4}, 1);
  auto cfg = config(Strategy::baseline_greedy, 0.5);
  cfg.max_len = 6;
  const auto rec = generate(src, std::vector<TokenId>{0, 0}, cfg);
  EXPECT_EQ(rec.steps.size(), 4u);
  EXPECT_EQ(rec.terminated_by, Termination::max_len);
}

TEST(Generate, SameSeedSameOutput) {
  std::mt19937_64 rng(5);
  FixedSource src(testing::random_probs(rng, 30), 29);
  for (Strategy s : kAllStrategies) {
    auto cfg = config(s, 0.4, EntropyMode::pointwise);
    cfg.max_len = 25;
    cfg.seed = 1234;
    EXPECT_EQ(generate(src, std::vector<TokenId>{1}, cfg), generate(src, std::vector<TokenId>{1}, cfg));
  }
}

TEST(Generate, RejectsBadConfigAndPrompt) {
  FixedSource src({0.5, 0.5}, 1);
  auto cfg = config(Strategy::entropy_uid, 1.5);
  EXPECT_THROW(generate(src, std::vector<TokenId>{}, cfg), ConfigError);
  cfg.alpha = 0.5;
  EXPECT_THROW(generate(src, std::vector<TokenId>{7}, cfg), ConfigError);
}

TEST(Generate, SourceSizeMismatchIsSourceError) {
  struct Lying {
    NextTokenDistribution next_distribution(std::span<const TokenId> c) const {
      return NextTokenDistribution({0.5, 0.5}, c.size());
    }
    std::size_t vocab_size() const { return 3; }
    TokenId eos_id() const { return 2; }
  } src;
  EXPECT_THROW(generate(src, std::vector<TokenId>{}, config(Strategy::baseline_greedy, 0.5)), SourceError);
}

// Property: with alpha = 0 and no thresholds the scored rule is greedy.
TEST(DecoderProperty, UidOnlyReducesToGreedy) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + rng() % 60;
    FixedSource src(testing::random_probs(rng, n), 0);
    std::mt19937_64 unused(0);
    const TokenId greedy = select_baseline(src, {}, config(Strategy::baseline_greedy, 0.0), unused).first;
    auto cfg = config(Strategy::entropy_uid, 0.0);
    cfg.h_max = kInf;
    cfg.delta_max = kInf;
    cfg.candidate_pool = n;
    EXPECT_EQ(select_entropy_uid(src, {}, cfg).first, greedy);
    EXPECT_EQ(select_entropy_uid(src, {}, config(Strategy::uid_only, 0.7)).first, greedy);
  }
}

// Property: alpha = 0 ignores the entropy mode entirely.
TEST(DecoderProperty, AlphaZeroIndependentOfMode) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    TableSource src(8, 7, testing::random_probs(rng, 8));
    for (TokenId t = 0; t < 8; ++t) src.set({t}, testing::random_probs(rng, 8));
    const std::vector<TokenId> ctx{static_cast<TokenId>(rng() % 8)};
    std::optional<TokenId> first;
    for (EntropyMode m : {EntropyMode::step, EntropyMode::lookahead, EntropyMode::pointwise}) {
      auto cfg = config(Strategy::uid_only, 0.0, m);
      const TokenId t = select_entropy_uid(src, ctx, cfg).first;
      if (!first) first = t;
      EXPECT_EQ(t, *first);
    }
  }
}

// Property: an unflagged choice always satisfies both thresholds.
TEST(DecoderProperty, ThresholdSoundness) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::size_t n = 2 + rng() % 20;
    TableSource src(n, 0, testing::random_probs(rng, n));
    for (TokenId t = 0; t < n; ++t) src.set({t}, testing::random_probs(rng, n));
    auto cfg = config(Strategy::entropy_uid, u(rng), EntropyMode::lookahead);
    cfg.h_max = 0.05 + u(rng) * std::log(static_cast<double>(n));
    cfg.delta_max = 0.05 + u(rng) * 4.0;
    cfg.candidate_pool = 1 + rng() % n;
    const auto [token, step] = select_entropy_uid(src, {}, cfg);
    if (!step.fallback_used) {
      EXPECT_LE(step.candidate_entropy, *cfg.h_max);
      EXPECT_LE(step.chosen_surprisal, *cfg.delta_max);
      EXPECT_GE(step.candidates_surviving, 1u);
    } else {
      EXPECT_EQ(step.candidates_surviving, 0u);
    }
  }
}

// Property: the chosen token is always one of the top-k most probable.
TEST(DecoderProperty, ChoiceStaysInsideCandidatePool) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 5 + rng() % 40;
    FixedSource src(testing::random_probs(rng, n), 0);
    auto cfg = config(Strategy::entropy_only, 1.0, EntropyMode::pointwise);
    cfg.candidate_pool = 1 + rng() % 5;
    const auto d = src.next_distribution({});
    const auto pool = top_candidates(d, cfg.candidate_pool);
    const TokenId t = select_entropy_uid(src, {}, cfg).first;
    EXPECT_NE(std::find(pool.begin(), pool.end(), t), pool.end());
  }
}

// Property: for two candidates the preference flips exactly at
// alpha* = (S2 - S1) / ((S2 - S1) - (H2 - H1)).
TEST(DecoderProperty, TwoCandidateCrossover) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.1, 8.0);
  int checked = 0;
  while (checked < 500) {
    const Candidate a{0, 0.6, u(rng), u(rng)};
    const Candidate b{1, 0.4, u(rng), u(rng)};
    const double ds = b.surprisal - a.surprisal;
    const double dh = b.entropy - a.entropy;
    if (ds * dh >= 0.0) continue;  // one candidate dominates, no crossover
    const double star = ds / (ds - dh);
    const std::vector<Candidate> pool{a, b};
    const std::size_t below = select_candidate(pool, std::max(0.0, star - 1e-9), {}).index;
    const std::size_t above = select_candidate(pool, std::min(1.0, star + 1e-9), {}).index;
    EXPECT_NE(below, above) << "alpha* = " << star;
    ++checked;
  }
}

// Property: every step's context is the previous context plus the token.
TEST(DecoderProperty, ContextGrowsByChosenToken) {
  std::mt19937_64 rng(37);
  struct Recording {
    std::mt19937_64* rng;
    std::vector<std::vector<TokenId>>* seen;
    NextTokenDistribution next_distribution(std::span<const TokenId> c) {
      seen->emplace_back(c.begin(), c.end());
      return NextTokenDistribution(testing::random_probs(*rng, 12), c.size());
    }
    std::size_t vocab_size() const { return 12; }
    TokenId eos_id() const { return 11; }
  };
  for (Strategy s : {Strategy::baseline_sample, Strategy::entropy_uid}) {
    std::vector<std::vector<TokenId>> seen;
    Recording src{&rng, &seen};
    auto cfg = config(s, 0.5, EntropyMode::step);
    cfg.max_len = 15;
    const auto rec = generate(src, std::vector<TokenId>{3, 4}, cfg);
    ASSERT_EQ(seen.size(), rec.steps.size());
    std::vector<TokenId> expected{3, 4};
    for (std::size_t i = 0; i < seen.size(); ++i) {
      EXPECT_EQ(seen[i], expected);
      expected.push_back(rec.steps[i].token);
    }
  }
}

TEST(Thresholds, DefaultsScaleWithVocabularyAndBase) {
  DecoderConfig cfg;
  const auto nat = resolve_thresholds(cfg, 100);
  EXPECT_DOUBLE_EQ(nat.h_max, 0.9 * std::log(100.0));
  EXPECT_DOUBLE_EQ(nat.delta_max, 10.0);
  cfg.log_base = LogBase::base2;
  const auto bit = resolve_thresholds(cfg, 100);
  EXPECT_DOUBLE_EQ(bit.h_max, 0.9 * std::log2(100.0));
  EXPECT_NEAR(bit.delta_max, 10.0 / std::log(2.0), 1e-12);
}

TEST(Strategies, NamesRoundTrip) {
  for (Strategy s : kAllStrategies) EXPECT_EQ(parse_strategy(to_string(s)), s);
  for (EntropyMode m : {EntropyMode::step, EntropyMode::lookahead, EntropyMode::pointwise}) {
    EXPECT_EQ(parse_entropy_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_strategy("beam"), ConfigError);
}

}  // namespace
}  // namespace uid_decode
