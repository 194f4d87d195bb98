// Copyright 2026 The uid-decode Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Interpolated Lidstone n-gram model, the built-in probability source.
 *
 *   P(t | C) = sum_{i=1..n} lambda_i * (count(c_i, t) + k) / (total(c_i) + k |V|)
 *
 * where c_i is the last i-1 tokens of C. Training pads every line with n-1
 * BOS tokens and terminates it with EOS; queries left-pad short contexts with
 * BOS the same way, so a bare prompt is scored as a sentence start. Contexts
 * never seen in training contribute the uniform Lidstone term k / (k |V|).
 *
 * Model file layout (text, one record per line, doubles printed with %.17g so
 * that load(save(m)) reproduces m bit-exactly):
 *
 *   uid-decode-ngram 1
 *   order <n>
 *   lidstone_k <k>
 *   lambdas <lambda_1> ... <lambda_n>
 *   vocab <V>
 *   <token string>                      (V lines, id order)
 *   contexts <M>
 *   <L> <ctx ids...> <m> <tok> <count> ... (M lines, lexicographic context order)
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "uid_decode/common.hpp"
#include "uid_decode/info_measures.hpp"
#include "uid_decode/vocabulary.hpp"

namespace uid_decode {

struct NgramParams {
  std::size_t order = 3;
  double lidstone_k = 0.1;
  /// lambda_1 weights the unigram term, lambda_n the longest context.
  std::vector<double> lambdas{0.1, 0.3, 0.6};

  void validate() const {
    if (order < 1) throw ConfigError("n-gram order must be >= 1");
    if (!(lidstone_k > 0.0) || !std::isfinite(lidstone_k)) {
      throw ConfigError("lidstone_k must be a positive finite number");
    }
    if (lambdas.size() != order) {
      throw ConfigError("expected " + std::to_string(order) + " interpolation weights, got " +
                        std::to_string(lambdas.size()));
    }
    double sum = 0.0;
    for (double l : lambdas) {
      if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("interpolation weights must be >= 0");
      sum += l;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError("interpolation weights sum to " + std::to_string(sum) + ", not 1");
    }
  }
};

class NgramModel {
 public:
  using Context = std::vector<TokenId>;

  struct ContextCounts {
    std::map<TokenId, std::uint64_t> next;
    std::uint64_t total = 0;
  };

  static NgramModel train(Vocabulary vocab, std::span<const std::vector<TokenId>> corpus,
                          NgramParams params = {}) {
    params.validate();
    NgramModel m(std::move(vocab), std::move(params));
    const std::size_t pad = m.params_.order - 1;
    std::vector<TokenId> line;
    for (const auto& sentence : corpus) {
      line.assign(pad, Vocabulary::kBos);
      for (TokenId t : sentence) {
        if (t >= m.vocab_.size()) {
          throw ConfigError("training token id " + std::to_string(t) + " outside vocabulary");
        }
        line.push_back(t);
      }
      line.push_back(Vocabulary::kEos);
      for (std::size_t pos = pad; pos < line.size(); ++pos) {
        for (std::size_t len = 0; len <= pad; ++len) {
          Context ctx(line.begin() + static_cast<std::ptrdiff_t>(pos - len),
                      line.begin() + static_cast<std::ptrdiff_t>(pos));
          auto& cc = m.counts_[std::move(ctx)];
          ++cc.next[line[pos]];
          ++cc.total;
        }
      }
    }
    return m;
  }

  [[nodiscard]] NextTokenDistribution next_distribution(std::span<const TokenId> context) const {
    const std::size_t n_vocab = vocab_.size();
    const double k = params_.lidstone_k;
    const double k_v = k * static_cast<double>(n_vocab);
    const Context history = padded_history(context);

    std::vector<double> probs(n_vocab, 0.0);
    double uniform_part = 0.0;
    for (std::size_t len = 0; len < params_.order; ++len) {
      const double lambda = params_.lambdas[len];
      const Context ctx(history.end() - static_cast<std::ptrdiff_t>(len), history.end());
      const auto it = counts_.find(ctx);
      const double total = it == counts_.end() ? 0.0 : static_cast<double>(it->second.total);
      const double denom = total + k_v;
      uniform_part += lambda * k / denom;
      if (it == counts_.end()) continue;
      for (const auto& [tok, c] : it->second.next) {
        probs[tok] += lambda * static_cast<double>(c) / denom;
      }
    }
    double sum = 0.0;
    for (double& p : probs) {
      p += uniform_part;
      sum += p;
    }
    for (double& p : probs) p /= sum;
    return NextTokenDistribution(std::move(probs), context.size());
  }

  [[nodiscard]] std::uint64_t count(std::span<const TokenId> ctx, TokenId t) const {
    const auto it = counts_.find(Context(ctx.begin(), ctx.end()));
    if (it == counts_.end()) return 0;
    const auto jt = it->second.next.find(t);
    return jt == it->second.next.end() ? 0 : jt->second;
  }

  [[nodiscard]] std::uint64_t total(std::span<const TokenId> ctx) const {
    const auto it = counts_.find(Context(ctx.begin(), ctx.end()));
    return it == counts_.end() ? 0 : it->second.total;
  }

  [[nodiscard]] const Vocabulary& vocab() const noexcept { return vocab_; }
  [[nodiscard]] std::size_t vocab_size() const noexcept { return vocab_.size(); }
  [[nodiscard]] TokenId eos_id() const noexcept { return Vocabulary::kEos; }
  [[nodiscard]] const NgramParams& params() const noexcept { return params_; }
  [[nodiscard]] const std::map<Context, ContextCounts>& counts() const noexcept { return counts_; }

  /// Number of training tokens (EOS included, padding excluded).
  [[nodiscard]] std::uint64_t token_count() const { return total({}); }

  void save(std::ostream& os) const {
    os << "uid-decode-ngram 1\n";
    os << "order " << params_.order << '\n';
    os << "lidstone_k " << format_double(params_.lidstone_k) << '\n';
    os << "lambdas";
    for (double l : params_.lambdas) os << ' ' << format_double(l);
    os << '\n';
    os << "vocab " << vocab_.size() << '\n';
    for (const auto& t : vocab_.tokens()) os << t << '\n';
    os << "contexts " << counts_.size() << '\n';
    for (const auto& [ctx, cc] : counts_) {
      os << ctx.size();
      for (TokenId t : ctx) os << ' ' << t;
      os << ' ' << cc.next.size();
      for (const auto& [tok, c] : cc.next) os << ' ' << tok << ' ' << c;
      os << '\n';
    }
  }

  static NgramModel load(std::istream& is) {
    std::string line;
    auto expect_line = [&](std::string_view what) -> std::istringstream {
      if (!std::getline(is, line)) {
        throw ConfigError("model file truncated: expected " + std::string(what));
      }
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      if (key != what) throw ConfigError("model file: expected '" + std::string(what) + "', got '" + key + "'");
      return ls;
    };

    {
      auto ls = expect_line("uid-decode-ngram");
      int version = 0;
      ls >> version;
      if (version != 1) throw ConfigError("unsupported model file version " + std::to_string(version));
    }
    NgramParams params;
    {
      auto ls = expect_line("order");
      ls >> params.order;
    }
    {
      auto ls = expect_line("lidstone_k");
      std::string v;
      ls >> v;
      params.lidstone_k = parse_double(v);
    }
    {
      auto ls = expect_line("lambdas");
      params.lambdas.clear();
      std::string v;
      while (ls >> v) params.lambdas.push_back(parse_double(v));
    }
    params.validate();

    std::size_t n_vocab = 0;
    {
      auto ls = expect_line("vocab");
      if (!(ls >> n_vocab) || n_vocab < 3) throw ConfigError("model file: bad vocabulary size");
    }
    std::vector<std::string> words;
    for (std::size_t i = 0; i < n_vocab; ++i) {
      if (!std::getline(is, line)) throw ConfigError("model file truncated in vocabulary");
      if (i >= 3) words.push_back(line);
    }
    NgramModel m(Vocabulary::from_words(words), std::move(params));

    std::size_t n_ctx = 0;
    {
      auto ls = expect_line("contexts");
      ls >> n_ctx;
    }
    for (std::size_t i = 0; i < n_ctx; ++i) {
      if (!std::getline(is, line)) throw ConfigError("model file truncated in counts");
      std::istringstream ls(line);
      std::size_t len = 0;
      ls >> len;
      if (len >= m.params_.order) throw ConfigError("model file: context longer than order - 1");
      Context ctx(len);
      for (auto& t : ctx) ls >> t;
      std::size_t m_next = 0;
      ls >> m_next;
      ContextCounts cc;
      for (std::size_t j = 0; j < m_next; ++j) {
        TokenId tok = 0;
        std::uint64_t c = 0;
        ls >> tok >> c;
        if (tok >= n_vocab) throw ConfigError("model file: token id outside vocabulary");
        cc.next[tok] = c;
        cc.total += c;
      }
      if (!ls) throw ConfigError("model file: malformed counts line " + std::to_string(i));
      for (TokenId t : ctx) {
        if (t >= n_vocab) throw ConfigError("model file: context id outside vocabulary");
      }
      m.counts_.emplace(std::move(ctx), std::move(cc));
    }
    return m;
  }

  friend bool operator==(const NgramModel& a, const NgramModel& b) {
    if (!(a.vocab_ == b.vocab_) || a.params_.order != b.params_.order ||
        a.params_.lidstone_k != b.params_.lidstone_k || a.params_.lambdas != b.params_.lambdas ||
        a.counts_.size() != b.counts_.size()) {
      return false;
    }
    auto it = b.counts_.begin();
    for (const auto& [ctx, cc] : a.counts_) {
      if (ctx != it->first || cc.next != it->second.next) return false;
      ++it;
    }
    return true;
  }

 private:
  NgramModel(Vocabulary vocab, NgramParams params)
      : vocab_(std::move(vocab)), params_(std::move(params)) {}

  Context padded_history(std::span<const TokenId> context) const {
    const std::size_t want = params_.order - 1;
    Context h;
    h.reserve(want);
    const std::size_t have = std::min(want, context.size());
    h.assign(want - have, Vocabulary::kBos);
    h.insert(h.end(), context.end() - static_cast<std::ptrdiff_t>(have), context.end());
    return h;
  }

  static std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }

  static double parse_double(const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw ConfigError("model file: bad number '" + s + "'");
    return v;
  }

  Vocabulary vocab_;
  NgramParams params_;
  std::map<Context, ContextCounts> counts_;
};

}  // namespace uid_decode
