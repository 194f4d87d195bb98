// Copyright 2026 The uid-decode Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: train, generate, compare, verify, bridge-check.
// Exit codes: 0 success, 1 runtime or source failure, 2 configuration error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uid_decode/bridge_client.hpp"
#include "uid_decode/experiment.hpp"

namespace {

using namespace uid_decode;

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string log_base;
};

struct RunFlags {
  std::string corpus;
  std::optional<std::size_t> n_generations;
  std::vector<std::string> strategies;
  std::vector<double> alpha_grid;
  std::optional<double> alpha;
  std::string entropy_mode;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "Experiment config (JSON)");
  cmd->add_option("--seed", f.seed, "Base seed; prompt i uses seed + i");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--log-base", f.log_base, "Logarithm base for all measures")->check(CLI::IsMember({"nat", "bit"}));
}

void add_run(CLI::App* cmd, RunFlags& r) {
  cmd->add_option("--corpus", r.corpus, "Corpus file (overrides config)");
  cmd->add_option("-n,--n-generations", r.n_generations, "Generations per strategy");
  cmd->add_option("--strategies", r.strategies, "Strategies to run")->delimiter(',');
  cmd->add_option("--alpha", r.alpha, "Entropy weight for entropy_uid");
  cmd->add_option("--alpha-grid", r.alpha_grid, "Extra entropy_uid runs, one per alpha")->delimiter(',');
  cmd->add_option("--entropy-mode", r.entropy_mode, "step | lookahead | pointwise");
}

ExperimentConfig build_config(const CommonFlags& f, const RunFlags& r) {
  ExperimentConfig c = f.config_path.empty() ? ExperimentConfig{} : load_config(f.config_path);
  if (!r.corpus.empty()) c.corpus_path = r.corpus;
  if (r.n_generations) c.n_generations = *r.n_generations;
  if (!r.strategies.empty()) c.strategies = r.strategies;
  if (!r.alpha_grid.empty()) c.alpha_grid = r.alpha_grid;
  if (r.alpha) c.decoder.alpha = *r.alpha;
  if (!r.entropy_mode.empty()) c.decoder.entropy_mode = parse_entropy_mode(r.entropy_mode);
  if (f.seed) c.decoder.seed = *f.seed;
  if (!f.out.empty()) c.output_dir = f.out;
  if (!f.log_base.empty()) c.decoder.log_base = parse_log_base(f.log_base);
  apply_environment(c);
  return c;
}

int run_verify(const std::string& records_path, std::string metrics_path) {
  std::ifstream in(records_path);
  if (!in) throw ConfigError("cannot read record file " + records_path);
  const auto entries = read_records(in);
  if (metrics_path.empty()) {
    const auto sibling = std::filesystem::path(records_path).parent_path() / "summary.csv";
    if (std::filesystem::exists(sibling)) metrics_path = sibling.string();
  }
  std::optional<std::string> csv;
  if (!metrics_path.empty()) {
    std::ifstream m(metrics_path);
    if (!m) throw ConfigError("cannot read metrics file " + metrics_path);
    std::ostringstream ss;
    ss << m.rdbuf();
    csv = ss.str();
  }
  const auto rep = verify_records(entries, csv ? &*csv : nullptr);
  for (const auto& f : rep.failures) std::cout << "FAIL " << f << '\n';
  std::cout << (rep.ok() ? "PASS" : "FAIL") << ": " << rep.records_checked << " records, " << rep.steps_checked
            << " steps" << (rep.metrics_checked ? ", metrics recomputed from " + metrics_path : "") << ", "
            << rep.failures.size() << " failure(s)\n";
  return rep.ok() ? 0 : kExitRuntime;
}

int run_bridge_check(const CommonFlags& f, std::string command, std::string socket, long timeout_ms) {
  BridgeSettings b;
  if (!f.config_path.empty()) b = load_config(f.config_path).bridge;
  if (const char* env = std::getenv(kBridgeCommandEnv); env != nullptr && *env != '\0') b.command = env;
  if (!command.empty()) b.command = command;
  if (!socket.empty()) b.socket = socket;
  if (b.command.empty() && b.socket.empty()) {
    throw ConfigError("no bridge command: pass --command, --socket or set " + std::string(kBridgeCommandEnv));
  }
  std::unique_ptr<bridge::LineTransport> t;
  if (!b.socket.empty()) {
    t = std::make_unique<bridge::SocketTransport>(b.socket);
  } else {
    t = std::make_unique<bridge::SubprocessTransport>(b.command);
  }
  bridge::BridgeClient client(std::move(t), bridge::Milliseconds(timeout_ms > 0 ? timeout_ms : b.timeout_ms));
  const auto info = client.handshake();
  std::cout << "protocol v" << info.version << " model=" << info.model << " vocab_size=" << info.vocab_size << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropy-UID decoding and evaluation harness"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train the n-gram model on a corpus");
  std::string train_corpus;
  std::string train_out;
  NgramParams params;
  std::size_t min_count = 2;
  train->add_option("--corpus", train_corpus, "Plain-text corpus, one sentence per line")->required();
  train->add_option("--out", train_out, "Model file (or directory for ngram.model)")->required();
  train->add_option("--order", params.order, "n-gram order")->capture_default_str();
  train->add_option("--k", params.lidstone_k, "Lidstone constant")->capture_default_str();
  std::vector<double> lambdas;
  train->add_option("--lambdas", lambdas, "Interpolation weights, unigram first")->delimiter(',');
  train->add_option("--min-count", min_count, "Vocabulary count threshold")->capture_default_str();

  CommonFlags gen_flags;
  RunFlags gen_run;
  auto* generate = app.add_subcommand("generate", "Generate records for each strategy");
  add_common(generate, gen_flags);
  add_run(generate, gen_run);

  CommonFlags cmp_flags;
  RunFlags cmp_run;
  auto* compare = app.add_subcommand("compare", "Run all strategies and write comparison tables");
  add_common(compare, cmp_flags);
  add_run(compare, cmp_run);

  auto* verify = app.add_subcommand("verify", "Re-check a record file");
  std::string verify_path;
  std::string verify_metrics;
  verify->add_option("records", verify_path, "records.jsonl")->required();
  verify->add_option("--metrics", verify_metrics, "summary.csv to recompute (default: sibling of records)");

  CommonFlags check_flags;
  auto* bridge_check = app.add_subcommand("bridge-check", "Handshake with a probability server");
  std::string bridge_cmd;
  std::string bridge_socket;
  long bridge_timeout = 0;
  add_common(bridge_check, check_flags);
  bridge_check->add_option("--command", bridge_cmd, "Server command line");
  bridge_check->add_option("--socket", bridge_socket, "host:port of a running server");
  bridge_check->add_option("--timeout-ms", bridge_timeout, "Handshake timeout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) {
      if (!lambdas.empty()) {
        params.lambdas = lambdas;
      } else if (params.order != 3) {
        throw ConfigError("--lambdas is required when --order is not 3");
      }
      std::string out = train_out;
      if (std::filesystem::is_directory(out)) out = (std::filesystem::path(out) / "ngram.model").string();
      const auto s = cmd_train(train_corpus, params, min_count, out);
      std::cout << "vocab_size=" << s.vocab_size << " tokens=" << s.token_count << " model=" << out << '\n';
      return 0;
    }
    if (*generate) {
      const auto c = build_config(gen_flags, gen_run);
      const auto r = cmd_generate(c);
      std::cout << "wrote " << r.records.size() << " records to "
                << (std::filesystem::path(c.output_dir) / "records.jsonl").string() << '\n';
      return 0;
    }
    if (*compare) {
      const auto c = build_config(cmp_flags, cmp_run);
      const auto r = cmd_compare(c);
      std::cout << render_markdown(r.summaries) << '\n' << compare_report(c, r);
      return 0;
    }
    if (*verify) return run_verify(verify_path, verify_metrics);
    if (*bridge_check) return run_bridge_check(check_flags, bridge_cmd, bridge_socket, bridge_timeout);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}
