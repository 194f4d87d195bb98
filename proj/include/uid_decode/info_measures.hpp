// Copyright 2026 The uid-decode Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Information measures over a next-token distribution.
 *
 * entropy   H = -sum_i p_i log p_i        (0 log 0 := 0)
 * surprisal S = -log p_t                  (p_t = 0 maps to log(1 / 1e-12))
 * score       alpha * H + (1 - alpha) * S
 *
 * Every measure takes a LogBase; natural log (nats) unless base2 (bits) is
 * requested. Distributions are validated once, when NextTokenDistribution is
 * constructed, so the measures themselves never re-check normalization.
 */

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "uid_decode/common.hpp"

namespace uid_decode {

enum class LogBase { natural, base2 };

inline constexpr double kNormalizationTolerance = 1e-9;
/// Probability floor used for the surprisal of an impossible token.
inline constexpr double kZeroProbabilityEpsilon = 1e-12;

inline double log_in(double x, LogBase base) {
  return base == LogBase::base2 ? std::log2(x) : std::log(x);
}

/// Converts a quantity measured in nats into `base`.
inline double from_nats(double nats, LogBase base) {
  return base == LogBase::base2 ? nats / std::numbers::ln2 : nats;
}

inline std::string_view to_string(LogBase base) {
  return base == LogBase::base2 ? "bit" : "nat";
}

inline LogBase parse_log_base(std::string_view s) {
  if (s == "nat" || s == "natural" || s == "nats") return LogBase::natural;
  if (s == "bit" || s == "base2" || s == "bits") return LogBase::base2;
  throw ConfigError("unknown log base '" + std::string(s) + "' (expected nat or bit)");
}

/**
 * Normalized probability vector over the vocabulary, P(. | C).
 *
 * Invariants (checked in the constructor): every entry lies in [0, 1] and the
 * entries sum to 1 within kNormalizationTolerance.
 */
class NextTokenDistribution {
 public:
  NextTokenDistribution(std::vector<double> probs, std::size_t context_len)
      : probs_(std::move(probs)), context_len_(context_len) {
    validate();
  }

  [[nodiscard]] std::span<const double> probs() const noexcept { return probs_; }
  [[nodiscard]] std::size_t size() const noexcept { return probs_.size(); }
  [[nodiscard]] std::size_t context_len() const noexcept { return context_len_; }
  [[nodiscard]] double operator[](TokenId t) const { return probs_[t]; }

  [[nodiscard]] double at(TokenId t) const {
    if (t >= probs_.size()) {
      throw std::out_of_range("token id " + std::to_string(t) + " outside vocabulary of size " +
                              std::to_string(probs_.size()));
    }
    return probs_[t];
  }

 private:
  void validate() const {
    if (probs_.empty()) throw InvalidDistribution("empty distribution");
    double sum = 0.0;
    for (std::size_t i = 0; i < probs_.size(); ++i) {
      const double p = probs_[i];
      if (!(p >= 0.0 && p <= 1.0)) {
        throw InvalidDistribution("probability at index " + std::to_string(i) +
                                  " outside [0, 1]: " + std::to_string(p));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kNormalizationTolerance) {
      throw InvalidDistribution("probabilities sum to " + std::to_string(sum) + ", not 1");
    }
  }

  std::vector<double> probs_;
  std::size_t context_len_;
};

/// -p log p with the 0 log 0 = 0 convention.
inline double pointwise_entropy(double p, LogBase base) {
  return p > 0.0 ? -p * log_in(p, base) : 0.0;
}

inline double entropy(const NextTokenDistribution& d, LogBase base = LogBase::natural) {
  double h = 0.0;
  for (double p : d.probs()) h += pointwise_entropy(p, base);
  // Rounding can leave a one-hot distribution at -0.0 or a hair below zero.
  return h > 0.0 ? h : 0.0;
}

inline double surprisal_of_probability(double p, LogBase base) {
  if (p <= 0.0) return -log_in(kZeroProbabilityEpsilon, base);
  const double s = -log_in(p, base);
  return s > 0.0 ? s : 0.0;
}

inline double surprisal(const NextTokenDistribution& d, TokenId token,
                        LogBase base = LogBase::natural) {
  return surprisal_of_probability(d.at(token), base);
}

/// Entropy-UID objective alpha * H + (1 - alpha) * S.
inline double score(double entropy_value, double surprisal_value, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  if (!std::isfinite(entropy_value) || !std::isfinite(surprisal_value)) {
    throw std::invalid_argument("score requires finite entropy and surprisal");
  }
  return alpha * entropy_value + (1.0 - alpha) * surprisal_value;
}

}  // namespace uid_decode
