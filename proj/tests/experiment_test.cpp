// Copyright 2026 The uid-decode Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "uid_decode/experiment.hpp"

namespace uid_decode {
namespace {

namespace fs = std::filesystem;

class ExperimentTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("uid_decode_exp_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream out(dir_ / "corpus.txt");
    const char* lines[] = {"the cat sat on the mat", "the dog sat on the log", "a cat ran to the dog",
                           "the cat saw a dog",      "the dog ran on the mat", "a dog sat by the cat",
                           "the mat was red",        "the log was old",        "a cat sat on a log",
                           "the dog saw the cat"};
    for (int rep = 0; rep < 3; ++rep) {
      for (const char* l : lines) out << l << "\n";
    }
  }
  void TearDown() override { fs::remove_all(dir_); }

  ExperimentConfig base_config() const {
    ExperimentConfig c;
    c.corpus_path = (dir_ / "corpus.txt").string();
    c.min_count = 1;
    c.prompt_tokens = 2;
    c.n_generations = 3;
    c.strategies = {"baseline_sample", "entropy_uid"};
    c.decoder.max_len = 12;
    c.output_dir = (dir_ / "out").string();
    c.workers = 2;
    return c;
  }

  fs::path dir_;
};

TEST(ConfigJson, ParsesNestedSectionsAndRejectsUnknownKeys) {
  const auto j = nlohmann::json::parse(R"({
    "corpus_path": "",
    "lm": {"order": 2, "lidstone_k": 0.5, "lambdas": [0.4, 0.6], "min_count": 1},
    "prompts": {"prefix_tokens": 3, "heldout_every": 4},
    "strategies": ["uid_only"],
    "decoder": {"alpha": 0.25, "h_max": "inf", "delta_max": 3.5, "entropy_mode": "pointwise", "log_base": "bit"},
    "alpha_grid": [0.1, 0.9],
    "n_generations": 7
  })");
  const auto c = config_from_json(j);
  EXPECT_EQ(c.lm.order, 2u);
  EXPECT_EQ(c.lm.lambdas, (std::vector<double>{0.4, 0.6}));
  EXPECT_EQ(c.min_count, 1u);
  EXPECT_EQ(c.prompt_tokens, 3u);
  EXPECT_EQ(c.heldout_every, 4u);
  EXPECT_EQ(c.decoder.alpha, 0.25);
  EXPECT_TRUE(std::isinf(*c.decoder.h_max));
  EXPECT_EQ(*c.decoder.delta_max, 3.5);
  EXPECT_EQ(c.decoder.entropy_mode, EntropyMode::pointwise);
  EXPECT_EQ(c.decoder.log_base, LogBase::base2);
  EXPECT_EQ(make_cells(c).size(), 3u);
  EXPECT_EQ(make_cells(c)[2].label, "entropy_uid@alpha=0.9");

  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"decoder": {"temperature": 1}})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"colour": 1})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"n_generations": "many"})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"source": {"kind": "magic"}})")), ConfigError);
}

TEST(ConfigJson, RoundTripsThroughJson) {
  ExperimentConfig c;
  c.corpus_path = "x.txt";
  c.decoder.h_max = 2.5;
  c.alpha_grid = {0.3};
  const auto back = config_from_json(nlohmann::json::parse(config_to_json(c).dump()));
  EXPECT_EQ(config_to_json(back).dump(), config_to_json(c).dump());
}

TEST(CorpusSplit, EveryNthNonEmptyLineIsHeldOut) {
  const std::vector<std::string> lines{"a", "", "b", "c", "d", "e", "f"};
  const auto s = split_corpus(lines, 3);
  ASSERT_EQ(s.heldout.size(), 2u);
  EXPECT_EQ(s.heldout[0], std::vector<std::string>{"c"});
  EXPECT_EQ(s.heldout[1], std::vector<std::string>{"f"});
  EXPECT_EQ(s.train.size(), 4u);
}

TEST_F(ExperimentTest, TwoStrategiesThreePromptsGiveSixRecords) {
  const auto r = cmd_generate(base_config());
  ASSERT_EQ(r.records.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(r.records[i].strategy, i < 3 ? "baseline_sample" : "entropy_uid");
    EXPECT_EQ(r.records[i].prompt_index, i % 3);
    EXPECT_EQ(r.records[i].seed, 42u + i % 3);
    EXPECT_EQ(r.records[i].record.prompt, r.records[i % 3].record.prompt);
  }
  std::ifstream in(dir_ / "out" / "records.jsonl");
  EXPECT_EQ(read_records(in).size(), 6u);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "config_used.json"));
}

TEST_F(ExperimentTest, PromptLongerThanMaxLenYieldsNoSteps) {
  auto c = base_config();
  c.prompt_tokens = 5;
  c.decoder.max_len = 3;
  const auto r = run_experiment(c);
  for (const auto& e : r.records) {
    if (e.record.prompt.size() >= 3) {
      EXPECT_TRUE(e.record.steps.empty());
    }
  }
  EXPECT_TRUE(verify_records(r.records).ok());
}

TEST_F(ExperimentTest, UidOnlyMatchesGreedyMetrics) {
  auto c = base_config();
  c.strategies = {"baseline_greedy", "uid_only"};
  c.decoder.candidate_pool = 1000;
  const auto r = run_experiment(c);
  const auto rows = summarize_entries(r.records);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].avg_entropy, rows[1].avg_entropy);
  EXPECT_EQ(rows[0].entropy_std, rows[1].entropy_std);
  EXPECT_EQ(rows[0].avg_surprisal, rows[1].avg_surprisal);
  EXPECT_EQ(rows[0].surprisal_std, rows[1].surprisal_std);
}

TEST_F(ExperimentTest, StepModeWithoutThresholdsAndAlphaZeroIsGreedy) {
  auto c = base_config();
  c.strategies = {"baseline_greedy", "entropy_uid"};
  c.decoder.entropy_mode = EntropyMode::step;
  c.decoder.alpha = 0.0;
  c.decoder.h_max = std::numeric_limits<double>::infinity();
  c.decoder.delta_max = std::numeric_limits<double>::infinity();
  const auto r = run_experiment(c);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.records[i].record.generated(), r.records[i + 3].record.generated());
  }
}

TEST_F(ExperimentTest, CompareIsDeterministicAcrossRunsAndWorkerCounts) {
  auto c = base_config();
  c.strategies = {"baseline_sample", "entropy_only", "uid_only", "entropy_uid"};
  cmd_compare(c);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  };
  const auto first_csv = slurp(dir_ / "out" / "summary.csv");
  const auto first_rec = slurp(dir_ / "out" / "records.jsonl");
  c.workers = 1;
  c.output_dir = (dir_ / "out2").string();
  cmd_compare(c);
  EXPECT_EQ(slurp(dir_ / "out2" / "summary.csv"), first_csv);
  EXPECT_EQ(slurp(dir_ / "out2" / "records.jsonl"), first_rec);
  for (const char* f : {"table.md", "gap.csv", "per_sequence.csv", "config_used.json", "report.txt"}) {
    EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
  }
}

TEST_F(ExperimentTest, VerifyAcceptsFreshAndFlagsCorruptedRecords) {
  auto c = base_config();
  const auto r = cmd_compare(c);
  std::ifstream csv_in(dir_ / "out" / "summary.csv");
  std::ostringstream csv;
  csv << csv_in.rdbuf();
  const std::string summary = csv.str();
  const auto ok = verify_records(r.records, &summary);
  EXPECT_TRUE(ok.ok()) << (ok.failures.empty() ? "" : ok.failures.front());
  EXPECT_TRUE(ok.metrics_checked);

  auto bad = r.records;
  std::size_t target = 0;
  while (bad[target].record.steps.empty()) ++target;
  bad[target].record.steps[0].step_entropy = -1.0;
  const auto rep = verify_records(bad);
  ASSERT_FALSE(rep.ok());
  EXPECT_NE(rep.failures.front().find("record " + std::to_string(target) + ": step 0"), std::string::npos)
      << rep.failures.front();

  std::string tampered = summary;
  const auto pos = tampered.find('\n') + 1;
  const auto comma = tampered.find(',', tampered.find(',', pos) + 1);
  tampered.replace(comma + 1, 1, "9");
  EXPECT_FALSE(verify_records(r.records, &tampered).ok());
}

TEST_F(ExperimentTest, VerifyFlagsThresholdBreachWithoutFallback) {
  auto c = base_config();
  c.strategies = {"entropy_uid"};
  auto r = run_experiment(c);
  auto& e = r.records[0];
  ASSERT_FALSE(e.record.steps.empty());
  e.thresholds.delta_max = e.record.steps[0].chosen_surprisal / 2;
  e.record.steps[0].fallback_used = false;
  EXPECT_FALSE(verify_records(r.records).ok());
}

TEST_F(ExperimentTest, EmptyCorpusIsAConfigError) {
  std::ofstream(dir_ / "empty.txt") << "\n  \n";
  EXPECT_THROW(cmd_train((dir_ / "empty.txt").string(), {}, 1, (dir_ / "m").string()), ConfigError);
  auto c = base_config();
  c.corpus_path = (dir_ / "empty.txt").string();
  EXPECT_THROW(run_experiment(c), ConfigError);
}

TEST_F(ExperimentTest, TooFewPromptsIsAConfigError) {
  auto c = base_config();
  c.n_generations = 1000;
  EXPECT_THROW(run_experiment(c), ConfigError);
}

TEST_F(ExperimentTest, TrainedModelFileReloadsIdentically) {
  const auto model_path = (dir_ / "ngram.model").string();
  const auto s = cmd_train((dir_ / "corpus.txt").string(), {}, 1, model_path);
  EXPECT_GT(s.vocab_size, 3u);
  auto c = base_config();
  c.model_path = model_path;
  const auto a = run_experiment(c);
  const auto b = run_experiment(c);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) EXPECT_EQ(a.records[i].record, b.records[i].record);
}

TEST(Records, JsonLineRoundTrip) {
  RecordEntry e;
  e.strategy = "entropy_uid@alpha=0.3";
  e.corpus = "c";
  e.vocab_size = 10;
  e.eos_id = 2;
  e.max_len = 5;
  e.candidate_pool = 4;
  e.alpha = 0.3;
  e.thresholds = {1.5, std::numeric_limits<double>::infinity()};
  e.record.prompt = {3, 4};
  e.record.steps = {{5, 1.25, 0.5, 0.125, false, 2}, {2, 0.1, 0.2, 0.3, true, 0}};
  e.record.terminated_by = Termination::eos;
  e.text = "x </s>";
  const auto back = from_json_line(to_json_line(e));
  EXPECT_EQ(to_json_line(back), to_json_line(e));
  EXPECT_EQ(back.record, e.record);
  EXPECT_TRUE(std::isinf(back.thresholds.delta_max));
  EXPECT_EQ(back.base_strategy(), Strategy::entropy_uid);
  EXPECT_THROW(from_json_line("{\"schema\": 1}"), ConfigError);
  EXPECT_THROW(from_json_line("not json"), ConfigError);
}

}  // namespace
}  // namespace uid_decode
