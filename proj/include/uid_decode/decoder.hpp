// Copyright 2026 The uid-decode Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Token selection strategies and the generation loop.
 *
 * Scored strategies (entropy_uid, entropy_only, uid_only) look at the top-k
 * candidates of P(. | C). Each candidate s gets an entropy H(s | C) and a
 * surprisal S(s | C) = -log P(s | C). entropy_uid drops candidates with
 * H > h_max or S > delta_max and picks the survivor with the smallest
 * alpha * H + (1 - alpha) * S. If nothing survives, the same argmin runs over
 * the unfiltered pool and the step is flagged as a fallback. entropy_only
 * fixes alpha = 1 and uid_only fixes alpha = 0; neither applies thresholds.
 *
 * H(s | C) depends on EntropyMode:
 *   step       entropy of P(. | C), the same for every candidate
 *   lookahead  entropy of P(. | C + s), one extra source call per candidate
 *   pointwise  -P(s | C) log P(s | C)
 *
 * Baselines: ancestral sampling at temperature 1, or greedy argmax.
 */

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "uid_decode/common.hpp"
#include "uid_decode/info_measures.hpp"

namespace uid_decode {

template <class S>
concept ProbabilitySource = requires(S& s, std::span<const TokenId> ctx) {
  { s.next_distribution(ctx) } -> std::same_as<NextTokenDistribution>;
  { s.vocab_size() } -> std::convertible_to<std::size_t>;
  { s.eos_id() } -> std::convertible_to<TokenId>;
};

enum class EntropyMode { step, lookahead, pointwise };

enum class Strategy { baseline_sample, baseline_greedy, entropy_only, uid_only, entropy_uid };

inline constexpr Strategy kAllStrategies[] = {Strategy::baseline_sample, Strategy::baseline_greedy,
                                              Strategy::entropy_only, Strategy::uid_only,
                                              Strategy::entropy_uid};

inline std::string_view to_string(EntropyMode m) {
  switch (m) {
    case EntropyMode::step: return "step";
    case EntropyMode::lookahead: return "lookahead";
    case EntropyMode::pointwise: return "pointwise";
  }
  return "?";
}

inline EntropyMode parse_entropy_mode(std::string_view s) {
  if (s == "step") return EntropyMode::step;
  if (s == "lookahead") return EntropyMode::lookahead;
  if (s == "pointwise") return EntropyMode::pointwise;
  throw ConfigError("unknown entropy mode '" + std::string(s) + "'");
}

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::baseline_sample: return "baseline_sample";
    case Strategy::baseline_greedy: return "baseline_greedy";
    case Strategy::entropy_only: return "entropy_only";
    case Strategy::uid_only: return "uid_only";
    case Strategy::entropy_uid: return "entropy_uid";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view s) {
  for (Strategy st : kAllStrategies) {
    if (to_string(st) == s) return st;
  }
  throw ConfigError("unknown strategy '" + std::string(s) + "'");
}

inline bool is_baseline(Strategy s) {
  return s == Strategy::baseline_sample || s == Strategy::baseline_greedy;
}

struct DecoderConfig {
  Strategy strategy = Strategy::entropy_uid;
  double alpha = 0.5;
  /// Unset means 0.9 * log|V| in the configured base.
  std::optional<double> h_max;
  /// Unset means 10 nats, converted to the configured base.
  std::optional<double> delta_max;
  EntropyMode entropy_mode = EntropyMode::lookahead;
  std::size_t candidate_pool = 50;
  /// Bound on prompt plus generated tokens.
  std::size_t max_len = 40;
  LogBase log_base = LogBase::natural;
  std::uint64_t seed = 42;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (candidate_pool < 1) throw ConfigError("candidate_pool must be >= 1");
    if (h_max && !(*h_max > 0.0)) throw ConfigError("h_max must be > 0");
    if (delta_max && !(*delta_max > 0.0)) throw ConfigError("delta_max must be > 0");
  }
};

inline constexpr double kDefaultDeltaMaxNats = 10.0;
inline constexpr double kDefaultHMaxFraction = 0.9;

struct Thresholds {
  double h_max = std::numeric_limits<double>::infinity();
  double delta_max = std::numeric_limits<double>::infinity();
};

inline Thresholds resolve_thresholds(const DecoderConfig& cfg, std::size_t vocab_size) {
  Thresholds t;
  t.h_max = cfg.h_max.value_or(kDefaultHMaxFraction * log_in(static_cast<double>(vocab_size), cfg.log_base));
  t.delta_max = cfg.delta_max.value_or(from_nats(kDefaultDeltaMaxNats, cfg.log_base));
  return t;
}

/// entropy_only scores with alpha = 1, uid_only with alpha = 0.
inline double effective_alpha(const DecoderConfig& cfg) {
  switch (cfg.strategy) {
    case Strategy::entropy_only: return 1.0;
    case Strategy::uid_only: return 0.0;
    default: return cfg.alpha;
  }
}

struct StepRecord {
  TokenId token = 0;
  /// Entropy of the full distribution the token was chosen from.
  double step_entropy = 0.0;
  /// H(s | C) of the chosen token under the configured entropy mode.
  double candidate_entropy = 0.0;
  double chosen_surprisal = 0.0;
  bool fallback_used = false;
  std::size_t candidates_surviving = 0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

enum class Termination { eos, max_len };

inline std::string_view to_string(Termination t) { return t == Termination::eos ? "eos" : "max_len"; }

struct GenerationRecord {
  std::vector<TokenId> prompt;
  std::vector<StepRecord> steps;
  Termination terminated_by = Termination::max_len;

  [[nodiscard]] std::vector<TokenId> generated() const {
    std::vector<TokenId> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.token);
    return out;
  }

  friend bool operator==(const GenerationRecord&, const GenerationRecord&) = default;
};

struct Candidate {
  TokenId token = 0;
  double probability = 0.0;
  double entropy = 0.0;
  double surprisal = 0.0;
};

struct Selection {
  std::size_t index = 0;
  bool fallback_used = false;
  std::size_t survivors = 0;
};

/**
 * argmin of alpha * H + (1 - alpha) * S over candidates within both
 * thresholds, or over all candidates when none qualify. Equal scores go to the
 * more probable candidate, then to the lowest token id.
 */
inline Selection select_candidate(std::span<const Candidate> pool, double alpha, const Thresholds& thr) {
  if (pool.empty()) throw SourceError("empty candidate pool");
  auto better = [&](std::size_t a, double score_a, std::size_t b, double score_b) {
    if (score_a != score_b) return score_a < score_b;
    if (pool[a].probability != pool[b].probability) return pool[a].probability > pool[b].probability;
    return pool[a].token < pool[b].token;
  };
  auto argmin = [&](bool filtered, std::size_t& survivors) {
    std::optional<std::size_t> best;
    double best_score = 0.0;
    survivors = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const Candidate& c = pool[i];
      if (filtered && (c.entropy > thr.h_max || c.surprisal > thr.delta_max)) continue;
      ++survivors;
      const double s = score(c.entropy, c.surprisal, alpha);
      if (!best || better(i, s, *best, best_score)) {
        best = i;
        best_score = s;
      }
    }
    return best;
  };
  std::size_t survivors = 0;
  if (auto best = argmin(true, survivors)) return {*best, false, survivors};
  std::size_t unused = 0;
  return {*argmin(false, unused), true, 0};
}

/// The k most probable token ids, most probable first; ties to the lowest id.
inline std::vector<TokenId> top_candidates(const NextTokenDistribution& d, std::size_t k) {
  std::vector<TokenId> ids(d.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(i);
  k = std::min(k, ids.size());
  const auto by_prob = [&](TokenId a, TokenId b) { return d[a] != d[b] ? d[a] > d[b] : a < b; };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), by_prob);
  ids.resize(k);
  return ids;
}

inline TokenId argmax_token(const NextTokenDistribution& d) {
  TokenId best = 0;
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (d[static_cast<TokenId>(i)] > d[best]) best = static_cast<TokenId>(i);
  }
  return best;
}

/// Inverse-CDF draw from d using a 53-bit uniform variate from the generator.
inline TokenId sample_token(const NextTokenDistribution& d, std::mt19937_64& rng) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double cumulative = 0.0;
  std::optional<TokenId> last_positive;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double p = d[static_cast<TokenId>(i)];
    if (p <= 0.0) continue;
    cumulative += p;
    last_positive = static_cast<TokenId>(i);
    if (u < cumulative) return static_cast<TokenId>(i);
  }
  return *last_positive;  // u landed in the rounding slack above the final sum
}

namespace detail {

template <ProbabilitySource S>
NextTokenDistribution checked_distribution(S& source, std::span<const TokenId> context) {
  NextTokenDistribution d = [&] {
    try {
      return source.next_distribution(context);
    } catch (const InvalidDistribution& e) {
      throw SourceError(std::string("probability source returned an invalid distribution: ") + e.what());
    }
  }();
  if (d.size() != source.vocab_size()) {
    throw SourceError("distribution has " + std::to_string(d.size()) + " entries, vocabulary has " +
                      std::to_string(source.vocab_size()));
  }
  return d;
}

template <ProbabilitySource S>
double candidate_entropy_given(S& source, std::span<const TokenId> context, const NextTokenDistribution& d,
                               double step_entropy, TokenId candidate, EntropyMode mode, LogBase base) {
  switch (mode) {
    case EntropyMode::step:
      return step_entropy;
    case EntropyMode::pointwise:
      return pointwise_entropy(d.at(candidate), base);
    case EntropyMode::lookahead: {
      std::vector<TokenId> extended(context.begin(), context.end());
      extended.push_back(candidate);
      return entropy(checked_distribution(source, extended), base);
    }
  }
  return step_entropy;
}

}  // namespace detail

/// H(candidate | context) under `mode`.
template <ProbabilitySource S>
double candidate_entropy(S& source, std::span<const TokenId> context, TokenId candidate, EntropyMode mode,
                         LogBase base) {
  const NextTokenDistribution d = detail::checked_distribution(source, context);
  return detail::candidate_entropy_given(source, context, d, entropy(d, base), candidate, mode, base);
}

/// One step of a scored strategy (entropy_uid, entropy_only or uid_only).
template <ProbabilitySource S>
std::pair<TokenId, StepRecord> select_entropy_uid(S& source, std::span<const TokenId> context,
                                                  const DecoderConfig& cfg) {
  if (is_baseline(cfg.strategy)) throw ConfigError("select_entropy_uid called with a baseline strategy");
  const NextTokenDistribution d = detail::checked_distribution(source, context);
  const double step_h = entropy(d, cfg.log_base);

  std::vector<Candidate> pool;
  for (TokenId t : top_candidates(d, cfg.candidate_pool)) {
    pool.push_back({t, d[t],
                    detail::candidate_entropy_given(source, context, d, step_h, t, cfg.entropy_mode, cfg.log_base),
                    surprisal(d, t, cfg.log_base)});
  }
  const Thresholds thr =
      cfg.strategy == Strategy::entropy_uid ? resolve_thresholds(cfg, d.size()) : Thresholds{};
  const Selection sel = select_candidate(pool, effective_alpha(cfg), thr);
  const Candidate& c = pool[sel.index];
  return {c.token, StepRecord{c.token, step_h, c.entropy, c.surprisal, sel.fallback_used, sel.survivors}};
}

/// One step of a baseline strategy.
template <ProbabilitySource S>
std::pair<TokenId, StepRecord> select_baseline(S& source, std::span<const TokenId> context,
                                               const DecoderConfig& cfg, std::mt19937_64& rng) {
  if (!is_baseline(cfg.strategy)) throw ConfigError("select_baseline called with a scored strategy");
  const NextTokenDistribution d = detail::checked_distribution(source, context);
  const double step_h = entropy(d, cfg.log_base);
  const TokenId t = cfg.strategy == Strategy::baseline_greedy ? argmax_token(d) : sample_token(d, rng);
  return {t, StepRecord{t, step_h, step_h, surprisal(d, t, cfg.log_base), false, d.size()}};
}

/**
 * Runs the selection loop from `prompt` until EOS is chosen or the sequence
 * (prompt included) reaches cfg.max_len tokens. The sampling generator is
 * seeded with cfg.seed.
 */
template <ProbabilitySource S>
GenerationRecord generate(S& source, std::span<const TokenId> prompt, const DecoderConfig& cfg) {
  cfg.validate();
  const std::size_t vocab = source.vocab_size();
  for (TokenId t : prompt) {
    if (t >= vocab) throw ConfigError("prompt token " + std::to_string(t) + " outside vocabulary");
  }
  std::mt19937_64 rng(cfg.seed);
  GenerationRecord rec;
  rec.prompt.assign(prompt.begin(), prompt.end());
  std::vector<TokenId> context = rec.prompt;
  const TokenId eos = source.eos_id();
  while (context.size() < cfg.max_len) {
    auto [token, step] = is_baseline(cfg.strategy) ? select_baseline(source, context, cfg, rng)
                                                   : select_entropy_uid(source, context, cfg);
    rec.steps.push_back(step);
    if (token == eos) {
      rec.terminated_by = Termination::eos;
      return rec;
    }
    context.push_back(token);
  }
  rec.terminated_by = Termination::max_len;
  return rec;
}

}  // namespace uid_decode
