// Copyright 2026 The uid-decode Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Line-delimited JSON persistence for generation records, one record per
// line. Each line carries the decoding settings that produced it so the file
// can be re-verified on its own. Infinite thresholds are written as null.

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "uid_decode/common.hpp"
#include "uid_decode/decoder.hpp"

namespace uid_decode {

inline constexpr int kRecordSchemaVersion = 1;

struct RecordEntry {
  std::string strategy;
  std::string corpus;
  std::size_t prompt_index = 0;
  std::uint64_t seed = 0;
  std::size_t vocab_size = 0;
  TokenId eos_id = 0;
  std::size_t max_len = 0;
  std::size_t candidate_pool = 0;
  /// Alpha actually used for scoring (1 for entropy_only, 0 for uid_only).
  double alpha = 0.0;
  EntropyMode entropy_mode = EntropyMode::lookahead;
  LogBase log_base = LogBase::natural;
  /// Active thresholds; infinite for every strategy except entropy_uid.
  Thresholds thresholds;
  GenerationRecord record;
  std::string text;

  /// Strategy label without any "@alpha=..." grid suffix.
  [[nodiscard]] Strategy base_strategy() const { return parse_strategy(strategy.substr(0, strategy.find('@'))); }
};

namespace detail {

inline nlohmann::ordered_json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

inline double number_or_inf(const nlohmann::ordered_json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace detail

inline std::string to_json_line(const RecordEntry& e) {
  nlohmann::ordered_json j;
  j["schema"] = kRecordSchemaVersion;
  j["strategy"] = e.strategy;
  j["corpus"] = e.corpus;
  j["prompt_index"] = e.prompt_index;
  j["seed"] = e.seed;
  j["vocab_size"] = e.vocab_size;
  j["eos_id"] = e.eos_id;
  j["max_len"] = e.max_len;
  j["candidate_pool"] = e.candidate_pool;
  j["alpha"] = e.alpha;
  j["entropy_mode"] = std::string(to_string(e.entropy_mode));
  j["log_base"] = std::string(to_string(e.log_base));
  j["h_max"] = detail::finite_or_null(e.thresholds.h_max);
  j["delta_max"] = detail::finite_or_null(e.thresholds.delta_max);
  j["prompt"] = e.record.prompt;
  auto steps = nlohmann::ordered_json::array();
  for (const auto& s : e.record.steps) {
    nlohmann::ordered_json js;
    js["token"] = s.token;
    js["step_entropy"] = s.step_entropy;
    js["candidate_entropy"] = s.candidate_entropy;
    js["surprisal"] = s.chosen_surprisal;
    js["fallback"] = s.fallback_used;
    js["survivors"] = s.candidates_surviving;
    steps.push_back(std::move(js));
  }
  j["steps"] = std::move(steps);
  j["terminated_by"] = std::string(to_string(e.record.terminated_by));
  j["text"] = e.text;
  return j.dump();
}

/// Throws ConfigError on malformed lines.
inline RecordEntry from_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::ordered_json::parse(line);
    if (j.at("schema").get<int>() != kRecordSchemaVersion) {
      throw ConfigError("unsupported record schema " + j.at("schema").dump());
    }
    RecordEntry e;
    e.strategy = j.at("strategy").get<std::string>();
    e.corpus = j.at("corpus").get<std::string>();
    e.prompt_index = j.at("prompt_index").get<std::size_t>();
    e.seed = j.at("seed").get<std::uint64_t>();
    e.vocab_size = j.at("vocab_size").get<std::size_t>();
    e.eos_id = j.at("eos_id").get<TokenId>();
    e.max_len = j.at("max_len").get<std::size_t>();
    e.candidate_pool = j.at("candidate_pool").get<std::size_t>();
    e.alpha = j.at("alpha").get<double>();
    e.entropy_mode = parse_entropy_mode(j.at("entropy_mode").get<std::string>());
    e.log_base = parse_log_base(j.at("log_base").get<std::string>());
    e.thresholds.h_max = detail::number_or_inf(j.at("h_max"));
    e.thresholds.delta_max = detail::number_or_inf(j.at("delta_max"));
    e.record.prompt = j.at("prompt").get<std::vector<TokenId>>();
    for (const auto& js : j.at("steps")) {
      StepRecord s;
      s.token = js.at("token").get<TokenId>();
      s.step_entropy = js.at("step_entropy").get<double>();
      s.candidate_entropy = js.at("candidate_entropy").get<double>();
      s.chosen_surprisal = js.at("surprisal").get<double>();
      s.fallback_used = js.at("fallback").get<bool>();
      s.candidates_surviving = js.at("survivors").get<std::size_t>();
      e.record.steps.push_back(s);
    }
    const auto term = j.at("terminated_by").get<std::string>();
    if (term == "eos") {
      e.record.terminated_by = Termination::eos;
    } else if (term == "max_len") {
      e.record.terminated_by = Termination::max_len;
    } else {
      throw ConfigError("unknown termination '" + term + "'");
    }
    e.text = j.value("text", std::string{});
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("malformed record: ") + ex.what());
  }
}

inline void write_records(std::ostream& os, const std::vector<RecordEntry>& entries) {
  for (const auto& e : entries) os << to_json_line(e) << '\n';
}

inline std::vector<RecordEntry> read_records(std::istream& is) {
  std::vector<RecordEntry> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(from_json_line(line));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace uid_decode
