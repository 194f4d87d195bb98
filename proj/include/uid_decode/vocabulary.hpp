// Copyright 2026 The uid-decode Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "uid_decode/common.hpp"

namespace uid_decode {

namespace detail {

// Decodes one UTF-8 code point starting at text[i]; advances i. Invalid bytes
// decode as themselves so malformed input still tokenizes deterministically.
inline char32_t next_code_point(std::string_view text, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(text[i]);
  int extra = 0;
  char32_t cp = b0;
  if (b0 >= 0xF0 && b0 < 0xF8) {
    extra = 3;
    cp = b0 & 0x07;
  } else if (b0 >= 0xE0) {
    extra = 2;
    cp = b0 & 0x0F;
  } else if (b0 >= 0xC0) {
    extra = 1;
    cp = b0 & 0x1F;
  }
  if (b0 >= 0xF8 || i + extra >= text.size()) {
    ++i;
    return b0;
  }
  for (int k = 1; k <= extra; ++k) {
    const auto b = static_cast<unsigned char>(text[i + k]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return b0;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += static_cast<std::size_t>(extra) + 1;
  return cp;
}

inline bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case U' ': case U'\t': case U'\n': case U'\v': case U'\f': case U'\r':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

inline bool is_punctuation(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
           (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
  }
  switch (cp) {
    case 0xA1: case 0xAB: case 0xB7: case 0xBB: case 0xBF:
    case 0x2026: case 0x3001: case 0x3002:
      return true;
    default:
      return cp >= 0x2010 && cp <= 0x201F;  // dashes and curly quotes
  }
}

}  // namespace detail

/**
 * Splits on Unicode whitespace, lowercases ASCII letters and strips leading
 * and trailing punctuation from each token. Tokens left empty are dropped.
 */
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    // Collect one whitespace-delimited span as (byte offset, code point) pairs.
    std::vector<std::pair<std::size_t, char32_t>> span;
    std::size_t end = i;
    while (end < text.size()) {
      std::size_t next = end;
      const char32_t cp = detail::next_code_point(text, next);
      if (detail::is_unicode_space(cp)) break;
      span.emplace_back(end, cp);
      end = next;
    }
    std::size_t first = 0;
    std::size_t last = span.size();
    while (first < last && detail::is_punctuation(span[first].second)) ++first;
    while (last > first && detail::is_punctuation(span[last - 1].second)) --last;
    if (first < last) {
      const std::size_t from = span[first].first;
      const std::size_t to = last < span.size() ? span[last].first : end;
      std::string token(text.substr(from, to - from));
      for (char& c : token) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      }
      out.push_back(std::move(token));
    }
    // Skip the whitespace code point that ended the span.
    i = end;
    if (i < text.size()) detail::next_code_point(text, i);
  }
  return out;
}

/// Dense token-id table with UNK, BOS and EOS pinned at ids 0, 1, 2.
class Vocabulary {
 public:
  static constexpr TokenId kUnk = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr std::string_view kUnkText = "<unk>";
  static constexpr std::string_view kBosText = "<s>";
  static constexpr std::string_view kEosText = "</s>";

  Vocabulary() {
    add(std::string(kUnkText));
    add(std::string(kBosText));
    add(std::string(kEosText));
  }

  /// Builds a vocabulary from an explicit word list (reserved tokens excluded).
  static Vocabulary from_words(std::span<const std::string> words) {
    Vocabulary v;
    for (const auto& w : words) {
      if (is_reserved(w)) throw ConfigError("reserved token '" + w + "' in word list");
      if (v.ids_.contains(w)) throw ConfigError("duplicate vocabulary entry '" + w + "'");
      v.add(w);
    }
    return v;
  }

  static bool is_reserved(std::string_view w) {
    return w == kUnkText || w == kBosText || w == kEosText;
  }

  [[nodiscard]] std::size_t size() const noexcept { return tokens_.size(); }

  /// Out-of-vocabulary strings map to UNK.
  [[nodiscard]] TokenId id(std::string_view token) const {
    const auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnk : it->second;
  }

  [[nodiscard]] bool contains(std::string_view token) const {
    return ids_.contains(std::string(token));
  }

  [[nodiscard]] const std::string& token(TokenId id) const { return tokens_.at(id); }
  [[nodiscard]] const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  [[nodiscard]] std::vector<TokenId> encode(std::span<const std::string> words) const {
    std::vector<TokenId> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(id(w));
    return ids;
  }

  [[nodiscard]] std::string decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId t : ids) {
      if (!out.empty()) out += ' ';
      out += t < tokens_.size() ? tokens_[t] : std::string(kUnkText);
    }
    return out;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  void add(std::string token) {
    ids_.emplace(token, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(std::move(token));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

/**
 * Tokens with count >= min_count, ordered by descending count then
 * lexicographically, after the three reserved entries. Reserved strings in the
 * corpus are not counted.
 */
inline Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus,
                              std::size_t min_count = 2) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& line : corpus) {
    for (const auto& w : line) {
      if (Vocabulary::is_reserved(w)) continue;
      ++counts[w];
      ++total;
    }
  }
  if (total == 0) throw ConfigError("cannot build a vocabulary from an empty corpus");

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [w, c] : counts) {
    if (c >= min_count) kept.emplace_back(w, c);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, c] : kept) words.push_back(std::move(w));
  return Vocabulary::from_words(words);
}

}  // namespace uid_decode
