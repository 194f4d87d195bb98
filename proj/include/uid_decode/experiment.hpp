// Copyright 2026 The uid-decode Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Experiment orchestration behind the command-line tool: configuration,
 * corpus split and prompt extraction, per-strategy generation runs with
 * shared prompts, comparison outputs and record verification.
 *
 * Corpus split: non-empty lines are numbered from 1; every line whose number
 * is a multiple of `heldout_every` is held out for prompts, the rest train the
 * n-gram model. A prompt is the first `prompt_tokens` tokens of a held-out
 * line.
 */

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "uid_decode/bridge_client.hpp"
#include "uid_decode/decoder.hpp"
#include "uid_decode/metrics.hpp"
#include "uid_decode/ngram_model.hpp"
#include "uid_decode/records.hpp"
#include "uid_decode/vocabulary.hpp"

namespace uid_decode {

inline constexpr const char* kBridgeCommandEnv = "UID_DECODE_BRIDGE_CMD";

enum class SourceKind { ngram, bridge };

struct BridgeSettings {
  std::string command;
  /// host:port; used instead of `command` when set.
  std::string socket;
  std::size_t top_k = 50;
  long timeout_ms = 30000;
  /// Unset means vocab_size - 1 (GPT-2's <|endoftext|> convention).
  std::optional<TokenId> eos_id;
};

struct ExperimentConfig {
  std::string corpus_path;
  std::string corpus_label = "desk";
  /// Pre-trained n-gram model; trained from the corpus split when empty.
  std::string model_path;
  NgramParams lm;
  std::size_t min_count = 2;
  /// One prompt per line; when empty, prompts come from held-out corpus lines.
  std::string prompts_file;
  std::size_t prompt_tokens = 5;
  std::size_t heldout_every = 5;
  std::vector<std::string> strategies{"baseline_sample", "entropy_only", "uid_only", "entropy_uid"};
  DecoderConfig decoder;
  /// Extra entropy_uid runs, one per alpha, labelled "entropy_uid@alpha=<a>".
  std::vector<double> alpha_grid;
  SourceKind source = SourceKind::ngram;
  BridgeSettings bridge;
  std::size_t n_generations = 200;
  std::string output_dir = "out";
  /// 0 means one worker per hardware thread. Bridge runs always use one.
  std::size_t workers = 0;

  void validate() const {
    if (n_generations < 1) throw ConfigError("n_generations must be >= 1");
    if (strategies.empty() && alpha_grid.empty()) throw ConfigError("strategies must not be empty");
    for (const auto& s : strategies) parse_strategy(s);
    for (double a : alpha_grid) {
      if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("alpha_grid values must lie in [0, 1]");
    }
    if (prompt_tokens < 1) throw ConfigError("prompt_tokens must be >= 1");
    if (heldout_every < 2) throw ConfigError("heldout_every must be >= 2");
    if (min_count < 1) throw ConfigError("min_count must be >= 1");
    decoder.validate();
    lm.validate();
    if (source == SourceKind::ngram) {
      if (model_path.empty() && corpus_path.empty()) throw ConfigError("corpus_path or model_path is required");
      if (corpus_path.empty() && prompts_file.empty()) {
        throw ConfigError("prompts_file is required when no corpus_path is given");
      }
    } else {
      if (bridge.command.empty() && bridge.socket.empty()) {
        throw ConfigError("bridge source needs bridge.command, bridge.socket or $" + std::string(kBridgeCommandEnv));
      }
      if (corpus_path.empty() && prompts_file.empty()) throw ConfigError("corpus_path or prompts_file is required");
      if (bridge.top_k < 1) throw ConfigError("bridge.top_k must be >= 1");
      if (bridge.timeout_ms < 1) throw ConfigError("bridge.timeout_ms must be >= 1");
    }
    for (const auto* p : {&corpus_path, &model_path, &prompts_file}) {
      if (!p->empty() && !std::filesystem::exists(*p)) throw ConfigError("no such file: " + *p);
    }
  }
};

// ---------------------------------------------------------------------------
// Configuration file (JSON)

namespace detail {

using OJson = nlohmann::ordered_json;

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                           std::string_view where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw ConfigError("unknown key '" + it.key() + "' in " + std::string(where));
    }
  }
}

// Threshold values: a positive number, or null / "inf" for no threshold.
inline std::optional<double> parse_threshold(const nlohmann::json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    if (s == "default") return std::nullopt;
    throw ConfigError("threshold must be a number, \"inf\" or \"default\"");
  }
  if (v.is_null()) return std::numeric_limits<double>::infinity();
  return v.get<double>();
}

inline OJson threshold_json(const std::optional<double>& v) {
  if (!v) return "default";
  if (std::isinf(*v)) return "inf";
  return *v;
}

}  // namespace detail

inline DecoderConfig decoder_from_json(const nlohmann::json& j, DecoderConfig d = {}) {
  detail::reject_unknown(j,
                         {"strategy", "alpha", "h_max", "delta_max", "entropy_mode", "candidate_pool", "max_len",
                          "log_base", "seed"},
                         "decoder");
  if (j.contains("strategy")) d.strategy = parse_strategy(j["strategy"].get<std::string>());
  if (j.contains("alpha")) d.alpha = j["alpha"].get<double>();
  if (j.contains("h_max")) d.h_max = detail::parse_threshold(j["h_max"]);
  if (j.contains("delta_max")) d.delta_max = detail::parse_threshold(j["delta_max"]);
  if (j.contains("entropy_mode")) d.entropy_mode = parse_entropy_mode(j["entropy_mode"].get<std::string>());
  if (j.contains("candidate_pool")) d.candidate_pool = j["candidate_pool"].get<std::size_t>();
  if (j.contains("max_len")) d.max_len = j["max_len"].get<std::size_t>();
  if (j.contains("log_base")) d.log_base = parse_log_base(j["log_base"].get<std::string>());
  if (j.contains("seed")) d.seed = j["seed"].get<std::uint64_t>();
  return d;
}

inline detail::OJson decoder_to_json(const DecoderConfig& d) {
  detail::OJson j;
  j["strategy"] = std::string(to_string(d.strategy));
  j["alpha"] = d.alpha;
  j["h_max"] = detail::threshold_json(d.h_max);
  j["delta_max"] = detail::threshold_json(d.delta_max);
  j["entropy_mode"] = std::string(to_string(d.entropy_mode));
  j["candidate_pool"] = d.candidate_pool;
  j["max_len"] = d.max_len;
  j["log_base"] = std::string(to_string(d.log_base));
  j["seed"] = d.seed;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    detail::reject_unknown(j,
                           {"corpus_path", "corpus_label", "model_path", "lm", "prompts", "strategies", "decoder",
                            "alpha_grid", "source", "n_generations", "output_dir", "workers"},
                           "config");
    ExperimentConfig c;
    c.corpus_path = j.value("corpus_path", c.corpus_path);
    c.corpus_label = j.value("corpus_label", c.corpus_label);
    c.model_path = j.value("model_path", c.model_path);
    if (j.contains("lm")) {
      const auto& lm = j["lm"];
      detail::reject_unknown(lm, {"order", "lidstone_k", "lambdas", "min_count"}, "lm");
      c.lm.order = lm.value("order", c.lm.order);
      c.lm.lidstone_k = lm.value("lidstone_k", c.lm.lidstone_k);
      if (lm.contains("lambdas")) c.lm.lambdas = lm["lambdas"].get<std::vector<double>>();
      c.min_count = lm.value("min_count", c.min_count);
    }
    if (j.contains("prompts")) {
      const auto& p = j["prompts"];
      detail::reject_unknown(p, {"file", "prefix_tokens", "heldout_every"}, "prompts");
      if (p.contains("file") && !p["file"].is_null()) c.prompts_file = p["file"].get<std::string>();
      c.prompt_tokens = p.value("prefix_tokens", c.prompt_tokens);
      c.heldout_every = p.value("heldout_every", c.heldout_every);
    }
    if (j.contains("strategies")) c.strategies = j["strategies"].get<std::vector<std::string>>();
    if (j.contains("decoder")) c.decoder = decoder_from_json(j["decoder"]);
    if (j.contains("alpha_grid")) c.alpha_grid = j["alpha_grid"].get<std::vector<double>>();
    if (j.contains("source")) {
      const auto& s = j["source"];
      detail::reject_unknown(s, {"kind", "command", "socket", "top_k", "timeout_ms", "eos_id"}, "source");
      const auto kind = s.value("kind", std::string("ngram"));
      if (kind == "ngram") {
        c.source = SourceKind::ngram;
      } else if (kind == "bridge") {
        c.source = SourceKind::bridge;
      } else {
        throw ConfigError("source.kind must be \"ngram\" or \"bridge\"");
      }
      c.bridge.command = s.value("command", c.bridge.command);
      c.bridge.socket = s.value("socket", c.bridge.socket);
      c.bridge.top_k = s.value("top_k", c.bridge.top_k);
      c.bridge.timeout_ms = s.value("timeout_ms", c.bridge.timeout_ms);
      if (s.contains("eos_id") && !s["eos_id"].is_null()) c.bridge.eos_id = s["eos_id"].get<TokenId>();
    }
    c.n_generations = j.value("n_generations", c.n_generations);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.workers = j.value("workers", c.workers);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

inline detail::OJson config_to_json(const ExperimentConfig& c) {
  detail::OJson j;
  j["corpus_path"] = c.corpus_path;
  j["corpus_label"] = c.corpus_label;
  j["model_path"] = c.model_path;
  j["lm"] = {{"order", c.lm.order}, {"lidstone_k", c.lm.lidstone_k}, {"lambdas", c.lm.lambdas},
             {"min_count", c.min_count}};
  j["prompts"] = {{"file", c.prompts_file.empty() ? detail::OJson(nullptr) : detail::OJson(c.prompts_file)},
                  {"prefix_tokens", c.prompt_tokens},
                  {"heldout_every", c.heldout_every}};
  j["strategies"] = c.strategies;
  j["decoder"] = decoder_to_json(c.decoder);
  j["alpha_grid"] = c.alpha_grid;
  detail::OJson s;
  s["kind"] = c.source == SourceKind::ngram ? "ngram" : "bridge";
  s["command"] = c.bridge.command;
  s["socket"] = c.bridge.socket;
  s["top_k"] = c.bridge.top_k;
  s["timeout_ms"] = c.bridge.timeout_ms;
  s["eos_id"] = c.bridge.eos_id ? detail::OJson(*c.bridge.eos_id) : detail::OJson(nullptr);
  j["source"] = std::move(s);
  j["n_generations"] = c.n_generations;
  j["output_dir"] = c.output_dir;
  j["workers"] = c.workers;
  return j;
}

// ---------------------------------------------------------------------------
// Corpus handling

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

struct CorpusSplit {
  std::vector<std::vector<std::string>> train;
  std::vector<std::vector<std::string>> heldout;
};

inline CorpusSplit split_corpus(const std::vector<std::string>& lines, std::size_t heldout_every) {
  CorpusSplit split;
  std::size_t n = 0;
  for (const auto& line : lines) {
    auto toks = tokenize(line);
    if (toks.empty()) continue;
    ++n;
    (n % heldout_every == 0 ? split.heldout : split.train).push_back(std::move(toks));
  }
  return split;
}

inline std::vector<std::vector<std::string>> tokenize_lines(const std::vector<std::string>& lines) {
  std::vector<std::vector<std::string>> out;
  for (const auto& l : lines) {
    auto toks = tokenize(l);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

struct TrainSummary {
  std::size_t vocab_size = 0;
  std::uint64_t token_count = 0;
};

inline NgramModel train_from_sentences(const std::vector<std::vector<std::string>>& sentences,
                                       const NgramParams& params, std::size_t min_count) {
  params.validate();
  Vocabulary vocab = build_vocab(sentences, min_count);
  std::vector<std::vector<TokenId>> ids;
  ids.reserve(sentences.size());
  for (const auto& s : sentences) ids.push_back(vocab.encode(s));
  return NgramModel::train(std::move(vocab), ids, params);
}

/// Trains on every non-empty line of `corpus_path` and writes the model file.
inline TrainSummary cmd_train(const std::string& corpus_path, const NgramParams& params, std::size_t min_count,
                              const std::string& out_path) {
  const auto sentences = tokenize_lines(read_lines(corpus_path));
  if (sentences.empty()) throw ConfigError("corpus " + corpus_path + " contains no tokens");
  const NgramModel model = train_from_sentences(sentences, params, min_count);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw ConfigError("cannot write model file " + out_path);
  model.save(out);
  if (!out) throw std::runtime_error("failed writing model file " + out_path);
  return {model.vocab_size(), model.token_count()};
}

inline NgramModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read model file " + path);
  return NgramModel::load(in);
}

/// Prompt word sequences shared by every strategy.
inline std::vector<std::vector<std::string>> extract_prompts(const ExperimentConfig& c, const CorpusSplit* split) {
  std::vector<std::vector<std::string>> prompts;
  if (!c.prompts_file.empty()) {
    prompts = tokenize_lines(read_lines(c.prompts_file));
  } else {
    for (const auto& line : split->heldout) {
      const std::size_t n = std::min(c.prompt_tokens, line.size());
      prompts.emplace_back(line.begin(), line.begin() + static_cast<std::ptrdiff_t>(n));
    }
  }
  if (prompts.size() < c.n_generations) {
    throw ConfigError("only " + std::to_string(prompts.size()) + " prompts available for n_generations = " +
                      std::to_string(c.n_generations));
  }
  prompts.resize(c.n_generations);
  return prompts;
}

// ---------------------------------------------------------------------------
// Generation runs

struct RunCell {
  std::string label;
  DecoderConfig decoder;
};

inline std::string alpha_label(double a) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "entropy_uid@alpha=%g", a);
  return buf;
}

inline std::vector<RunCell> make_cells(const ExperimentConfig& c) {
  std::vector<RunCell> cells;
  for (const auto& s : c.strategies) {
    DecoderConfig d = c.decoder;
    d.strategy = parse_strategy(s);
    cells.push_back({s, d});
  }
  for (double a : c.alpha_grid) {
    DecoderConfig d = c.decoder;
    d.strategy = Strategy::entropy_uid;
    d.alpha = a;
    cells.push_back({alpha_label(a), d});
  }
  return cells;
}

/**
 * Runs every (cell, prompt) pair. Prompt i is decoded with seed
 * decoder.seed + i in every cell. `workers` > 1 requires a source that is
 * safe to call concurrently. Output order is cell-major, then prompt index,
 * regardless of scheduling.
 */
template <ProbabilitySource S>
std::vector<RecordEntry> run_cells(S& source, const std::vector<RunCell>& cells,
                                   const std::vector<std::vector<TokenId>>& prompts, const std::string& corpus_label,
                                   std::size_t workers,
                                   const std::function<std::string(const std::vector<TokenId>&)>& detok = {}) {
  const std::size_t n_jobs = cells.size() * prompts.size();
  std::vector<RecordEntry> out(n_jobs);
  std::vector<std::exception_ptr> errors(n_jobs);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t job = next++; job < n_jobs; job = next++) {
      const std::size_t ci = job / prompts.size();
      const std::size_t pi = job % prompts.size();
      try {
        DecoderConfig d = cells[ci].decoder;
        d.seed = cells[ci].decoder.seed + pi;
        RecordEntry e;
        e.strategy = cells[ci].label;
        e.corpus = corpus_label;
        e.prompt_index = pi;
        e.seed = d.seed;
        e.vocab_size = source.vocab_size();
        e.eos_id = source.eos_id();
        e.max_len = d.max_len;
        e.candidate_pool = d.candidate_pool;
        e.alpha = effective_alpha(d);
        e.entropy_mode = d.entropy_mode;
        e.log_base = d.log_base;
        e.thresholds = d.strategy == Strategy::entropy_uid ? resolve_thresholds(d, e.vocab_size) : Thresholds{};
        e.record = generate(source, prompts[pi], d);
        if (detok) e.text = detok(e.record.generated());
        out[job] = std::move(e);
      } catch (...) {
        errors[job] = std::current_exception();
        next = n_jobs;
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, n_jobs));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

inline std::vector<MetricsSummary> summarize_entries(const std::vector<RecordEntry>& entries) {
  // (corpus, strategy) cells in first-appearance order.
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<GenerationRecord>> groups;
  for (const auto& e : entries) {
    auto key = std::make_pair(e.corpus, e.strategy);
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) keys.push_back(key);
    it->second.push_back(e.record);
  }
  std::vector<MetricsSummary> out;
  for (const auto& k : keys) out.push_back(summarize(groups[k], k.second, k.first));
  return out;
}

inline std::string per_sequence_csv(const std::vector<RecordEntry>& entries) {
  std::string out =
      "corpus,strategy,prompt_index,n_steps,avg_entropy,entropy_std,avg_surprisal,surprisal_std,terminated_by\n";
  for (const auto& e : entries) {
    out += e.corpus + ',' + e.strategy + ',' + std::to_string(e.prompt_index) + ',' +
           std::to_string(e.record.steps.size()) + ',';
    if (e.record.steps.empty()) {
      out += ",,,,";
    } else {
      const auto m = summarize(std::span(&e.record, 1), e.strategy, e.corpus);
      out += format_full(m.avg_entropy) + ',' + format_full(m.entropy_std) + ',' + format_full(m.avg_surprisal) +
             ',' + format_full(m.surprisal_std) + ',';
    }
    out += std::string(to_string(e.record.terminated_by)) + '\n';
  }
  return out;
}

/// Entropy-UID's pooled entropy STD against the sampled baseline's.
struct DirectionalCheck {
  bool applicable = false;
  double entropy_uid_std = 0.0;
  double baseline_std = 0.0;
  double slack = 0.05;
  /// entropy_uid_std <= (1 + slack) * baseline_std
  bool holds = false;
  double margin = 0.0;  // (1 + slack) * baseline_std - entropy_uid_std
};

inline DirectionalCheck directional_check(const std::vector<MetricsSummary>& rows, double slack = 0.05) {
  DirectionalCheck d;
  d.slack = slack;
  const MetricsSummary* uid = nullptr;
  const MetricsSummary* base = nullptr;
  for (const auto& r : rows) {
    if (r.strategy == "entropy_uid") uid = &r;
    if (r.strategy == "baseline_sample") base = &r;
  }
  if (uid == nullptr || base == nullptr) return d;
  d.applicable = true;
  d.entropy_uid_std = uid->entropy_std;
  d.baseline_std = base->entropy_std;
  d.margin = (1.0 + slack) * d.baseline_std - d.entropy_uid_std;
  d.holds = d.margin >= 0.0;
  return d;
}

// ---------------------------------------------------------------------------
// Top-level commands

struct RunResult {
  std::vector<RecordEntry> records;
  std::vector<MetricsSummary> summaries;
  Thresholds thresholds;
  std::size_t vocab_size = 0;
  std::string source_description;
};

namespace detail {

inline std::size_t worker_count(std::size_t requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

inline std::string join_words(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

inline std::unique_ptr<bridge::LineTransport> open_transport(const BridgeSettings& b) {
  if (!b.socket.empty()) return std::make_unique<bridge::SocketTransport>(b.socket);
  return std::make_unique<bridge::SubprocessTransport>(b.command);
}

}  // namespace detail

/// Applies $UID_DECODE_BRIDGE_CMD, if set, to the bridge command line.
inline void apply_environment(ExperimentConfig& c) {
  if (const char* cmd = std::getenv(kBridgeCommandEnv); cmd != nullptr && *cmd != '\0') {
    c.bridge.command = cmd;
  }
}

inline RunResult run_experiment(const ExperimentConfig& c) {
  c.validate();
  const auto cells = make_cells(c);
  RunResult result;

  std::optional<CorpusSplit> split;
  if (!c.corpus_path.empty()) split = split_corpus(read_lines(c.corpus_path), c.heldout_every);
  const auto prompt_words = extract_prompts(c, split ? &*split : nullptr);

  if (c.source == SourceKind::ngram) {
    NgramModel model = [&] {
      if (!c.model_path.empty()) return load_model(c.model_path);
      if (split->train.empty()) throw ConfigError("corpus has no training lines");
      return train_from_sentences(split->train, c.lm, c.min_count);
    }();
    std::vector<std::vector<TokenId>> prompts;
    for (const auto& p : prompt_words) prompts.push_back(model.vocab().encode(p));
    const auto detok = [&](const std::vector<TokenId>& ids) { return model.vocab().decode(ids); };
    // next_distribution is const, so worker threads can share the model.
    result.records = run_cells(model, cells, prompts, c.corpus_label, detail::worker_count(c.workers), detok);
    result.vocab_size = model.vocab_size();
    result.source_description = "ngram(order=" + std::to_string(model.params().order) + ")";
  } else {
    bridge::BridgeClient client(detail::open_transport(c.bridge), bridge::Milliseconds(c.bridge.timeout_ms));
    const auto info = client.handshake();
    std::vector<std::vector<TokenId>> prompts;
    for (const auto& p : prompt_words) prompts.push_back(client.encode(detail::join_words(p)));
    const TokenId eos = c.bridge.eos_id.value_or(static_cast<TokenId>(info.vocab_size - 1));
    bridge::BridgeSource source(client, std::min(c.bridge.top_k, info.vocab_size), eos);
    result.records = run_cells(source, cells, prompts, c.corpus_label, 1);
    result.vocab_size = info.vocab_size;
    result.source_description = "bridge(model=" + info.model + ", top_k=" + std::to_string(source.top_k()) + ")";
  }
  result.thresholds = resolve_thresholds(c.decoder, result.vocab_size);
  return result;
}

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << content;
  if (!out) throw std::runtime_error("failed writing " + p.string());
}

inline std::string resolved_config_json(const ExperimentConfig& c, const RunResult& r) {
  auto j = config_to_json(c);
  j["resolved"] = {{"vocab_size", r.vocab_size},
                   {"h_max", finite_or_null(r.thresholds.h_max)},
                   {"delta_max", finite_or_null(r.thresholds.delta_max)},
                   {"source", r.source_description}};
  return j.dump(2) + "\n";
}

inline std::string records_text(const std::vector<RecordEntry>& entries) {
  std::ostringstream os;
  write_records(os, entries);
  return os.str();
}

}  // namespace detail

/// Writes records.jsonl and config_used.json; returns the run.
inline RunResult cmd_generate(const ExperimentConfig& c) {
  RunResult r = run_experiment(c);
  std::filesystem::create_directories(c.output_dir);
  const std::filesystem::path dir(c.output_dir);
  detail::write_file(dir / "records.jsonl", detail::records_text(r.records));
  detail::write_file(dir / "config_used.json", detail::resolved_config_json(c, r));
  return r;
}

inline std::string compare_report(const ExperimentConfig& c, const RunResult& r) {
  std::ostringstream os;
  os << "source: " << r.source_description << "\n";
  os << "vocab_size: " << r.vocab_size << "\n";
  os << "log_base: " << to_string(c.decoder.log_base) << "\n";
  os << "entropy_mode: " << to_string(c.decoder.entropy_mode) << "\n";
  os << "alpha: " << format_full(c.decoder.alpha) << "\n";
  os << "h_max: " << format_full(r.thresholds.h_max) << (c.decoder.h_max ? "" : " (default)") << "\n";
  os << "delta_max: " << format_full(r.thresholds.delta_max) << (c.decoder.delta_max ? "" : " (default)") << "\n";
  os << "candidate_pool: " << c.decoder.candidate_pool << "\n";
  os << "max_len: " << c.decoder.max_len << "\n";
  os << "seed: " << c.decoder.seed << "\n";
  os << "n_generations: " << c.n_generations << "\n\n";
  os << "fallback rates:\n";
  for (const auto& s : r.summaries) os << "  " << s.strategy << ": " << format_full(s.fallback_rate) << "\n";
  const auto d = directional_check(r.summaries);
  if (d.applicable) {
    os << "\nentropy STD check (entropy_uid <= 1.05 * baseline_sample): " << (d.holds ? "holds" : "FAILS") << "\n";
    os << "  entropy_uid entropy_std: " << format_full(d.entropy_uid_std) << "\n";
    os << "  baseline_sample entropy_std: " << format_full(d.baseline_std) << "\n";
    os << "  margin: " << format_full(d.margin) << "\n";
  }
  return os.str();
}

/**
 * Runs every configured strategy on shared prompts and writes table.md,
 * summary.csv, gap.csv, per_sequence.csv, records.jsonl, config_used.json and
 * report.txt into the output directory.
 */
inline RunResult cmd_compare(const ExperimentConfig& c) {
  RunResult r = run_experiment(c);
  r.summaries = summarize_entries(r.records);
  std::filesystem::create_directories(c.output_dir);
  const std::filesystem::path dir(c.output_dir);
  const auto table = render_table(r.summaries);
  detail::write_file(dir / "table.md", table.markdown);
  detail::write_file(dir / "summary.csv", table.csv);
  detail::write_file(dir / "gap.csv", emit_gap_plotdata(r.summaries));
  detail::write_file(dir / "per_sequence.csv", per_sequence_csv(r.records));
  detail::write_file(dir / "records.jsonl", detail::records_text(r.records));
  detail::write_file(dir / "config_used.json", detail::resolved_config_json(c, r));
  detail::write_file(dir / "report.txt", compare_report(c, r));
  return r;
}

// ---------------------------------------------------------------------------
// Verification

struct VerifyReport {
  std::vector<std::string> failures;
  std::size_t records_checked = 0;
  std::size_t steps_checked = 0;
  bool metrics_checked = false;

  [[nodiscard]] bool ok() const { return failures.empty(); }
};

namespace detail {

inline bool close_rel(double a, double b, double rel = 1e-9) {
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

/**
 * Re-checks stored records: value ranges, threshold soundness, fallback
 * bookkeeping, termination, shared prompts and, when a summary CSV is given,
 * the metrics recomputed from the records.
 */
inline VerifyReport verify_records(const std::vector<RecordEntry>& entries, const std::string* summary_csv = nullptr) {
  VerifyReport rep;
  constexpr double tol = 1e-9;
  auto fail = [&](std::size_t idx, const std::string& msg) {
    rep.failures.push_back("record " + std::to_string(idx) + ": " + msg);
  };
  std::map<std::pair<std::string, std::size_t>, std::pair<std::size_t, std::vector<TokenId>>> prompts_seen;

  for (std::size_t i = 0; i < entries.size(); ++i) {
    const RecordEntry& e = entries[i];
    ++rep.records_checked;
    Strategy strategy{};
    try {
      strategy = e.base_strategy();
    } catch (const ConfigError& ex) {
      fail(i, ex.what());
      continue;
    }
    const double log_v = log_in(static_cast<double>(e.vocab_size), e.log_base);
    const double max_s = -log_in(kZeroProbabilityEpsilon, e.log_base);
    const auto& rec = e.record;
    if (rec.steps.size() > e.max_len) fail(i, "more steps than max_len");
    if (!rec.steps.empty() && rec.prompt.size() + rec.steps.size() > e.max_len) {
      fail(i, "prompt plus generated tokens exceed max_len");
    }
    for (TokenId t : rec.prompt) {
      if (t >= e.vocab_size) fail(i, "prompt token " + std::to_string(t) + " outside vocabulary");
    }
    for (std::size_t k = 0; k < rec.steps.size(); ++k) {
      const StepRecord& s = rec.steps[k];
      ++rep.steps_checked;
      const std::string at = "step " + std::to_string(k) + ": ";
      if (s.token >= e.vocab_size) fail(i, at + "token outside vocabulary");
      if (!(s.step_entropy >= 0.0) || s.step_entropy > log_v + tol) {
        fail(i, at + "step_entropy " + format_full(s.step_entropy) + " outside [0, log|V|]");
      }
      if (!(s.candidate_entropy >= 0.0) || s.candidate_entropy > log_v + tol) {
        fail(i, at + "candidate_entropy " + format_full(s.candidate_entropy) + " outside [0, log|V|]");
      }
      if (!(s.chosen_surprisal >= 0.0) || s.chosen_surprisal > max_s + tol) {
        fail(i, at + "surprisal " + format_full(s.chosen_surprisal) + " outside [0, -log 1e-12]");
      }
      if (e.entropy_mode == EntropyMode::step && !is_baseline(strategy) && s.candidate_entropy != s.step_entropy) {
        fail(i, at + "step-mode candidate entropy differs from step entropy");
      }
      if (strategy == Strategy::entropy_uid) {
        if (s.fallback_used && s.candidates_surviving != 0) fail(i, at + "fallback with surviving candidates");
        if (!s.fallback_used) {
          if (s.candidates_surviving < 1 || s.candidates_surviving > e.candidate_pool) {
            fail(i, at + "survivor count outside [1, candidate_pool]");
          }
          if (s.candidate_entropy > e.thresholds.h_max) fail(i, at + "entropy above h_max without fallback");
          if (s.chosen_surprisal > e.thresholds.delta_max) fail(i, at + "surprisal above delta_max without fallback");
        }
      } else if (s.fallback_used) {
        fail(i, at + "fallback flagged for a strategy without thresholds");
      }
      if (k + 1 < rec.steps.size() && s.token == e.eos_id) fail(i, at + "generation continued past EOS");
    }
    const bool ended_eos = !rec.steps.empty() && rec.steps.back().token == e.eos_id;
    if ((rec.terminated_by == Termination::eos) != ended_eos) fail(i, "terminated_by disagrees with final token");
    if (rec.terminated_by == Termination::max_len && rec.prompt.size() + rec.steps.size() < e.max_len) {
      fail(i, "terminated by max_len before reaching it");
    }
    auto [it, fresh] = prompts_seen.try_emplace({e.corpus, e.prompt_index}, i, rec.prompt);
    if (!fresh && it->second.second != rec.prompt) {
      fail(i, "prompt differs from record " + std::to_string(it->second.first) + " with the same prompt index");
    }
  }

  if (summary_csv != nullptr) {
    rep.metrics_checked = true;
    std::vector<MetricsSummary> recomputed;
    try {
      recomputed = summarize_entries(entries);
    } catch (const ConfigError& ex) {
      rep.failures.push_back(std::string("metrics: ") + ex.what());
    }
    std::map<std::pair<std::string, std::string>, const MetricsSummary*> by_key;
    for (const auto& m : recomputed) by_key[{m.corpus, m.strategy}] = &m;
    std::istringstream is(*summary_csv);
    std::string line;
    std::getline(is, line);
    if (line != kSummaryCsvHeader) rep.failures.push_back("metrics: unexpected CSV header");
    std::size_t rows = 0;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      ++rows;
      const auto cells = detail::split_csv_line(line);
      if (cells.size() != 10) {
        rep.failures.push_back("metrics: malformed row '" + line + "'");
        continue;
      }
      const auto found = by_key.find({cells[0], cells[1]});
      if (found == by_key.end()) {
        rep.failures.push_back("metrics: no records for " + cells[0] + "/" + cells[1]);
        continue;
      }
      const MetricsSummary& m = *found->second;
      const double want[] = {m.avg_entropy, m.entropy_std, m.avg_surprisal, m.surprisal_std, m.gap,
                             static_cast<double>(m.n_sequences), static_cast<double>(m.n_tokens), m.fallback_rate};
      static constexpr const char* names[] = {"avg_entropy", "entropy_std", "avg_surprisal", "surprisal_std",
                                              "gap", "n_sequences", "n_tokens", "fallback_rate"};
      for (std::size_t c = 0; c < 8; ++c) {
        double got = 0.0;
        try {
          got = std::stod(cells[c + 2]);
        } catch (const std::exception&) {
          got = std::numeric_limits<double>::quiet_NaN();
        }
        if (!detail::close_rel(got, want[c])) {
          rep.failures.push_back("metrics: " + cells[0] + "/" + cells[1] + " " + names[c] + " = " + cells[c + 2] +
                                 ", recomputed " + format_full(want[c]));
        }
      }
    }
    if (rows != recomputed.size()) {
      rep.failures.push_back("metrics: " + std::to_string(rows) + " rows for " + std::to_string(recomputed.size()) +
                             " record groups");
    }
  }
  return rep;
}

}  // namespace uid_decode
