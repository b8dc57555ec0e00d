/*
 * Copyright 2026 The dsage Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "dsage/dag.hpp"
#include "dsage/dataset.hpp"
#include "dsage/io.hpp"
#include "dsage/scm.hpp"
#include "testing.hpp"

namespace dsage {
namespace {

using nlohmann::json;
using testing::TempDir;

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the CLI with `args`, capturing stdout and stderr through files in `dir`.
RunResult run_cli(const TempDir& dir, const std::string& args) {
  const std::string out = dir.file(".stdout");
  const std::string err = dir.file(".stderr");
  const std::string cmd = std::string("'") + DSAGE_CLI_PATH + "' " + args + " >'" + out + "' 2>'" + err + "'";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

std::string generate(const TempDir& dir, const std::string& sub, const std::string& flags) {
  const std::string out = dir.file(sub);
  std::filesystem::create_directories(out);
  const RunResult r = run_cli(dir, "generate " + flags + " --out '" + out + "' --log-level off");
  EXPECT_EQ(r.code, 0) << r.err;
  return out;
}

void strip_timing(json& j) {
  if (j.is_object()) {
    j.erase("timing");
    for (auto& [key, value] : j.items()) strip_timing(value);
  } else if (j.is_array()) {
    for (auto& value : j) strip_timing(value);
  }
}

TEST(CliGenerate, DatasetHashRoundTrip) {
  TempDir dir("cli_gen");
  const std::string out = generate(dir, "g", "--nodes 6 --avg-degree 2 --n 300 --seed 4");
  const json meta = json::parse(read_file(out + "/generate.json"));
  const Dataset data = load_csv(out + "/data.csv");
  EXPECT_EQ(meta.at("dataset_hash").get<std::uint64_t>(), dataset_hash(data));
  EXPECT_EQ(data.row_count(), 300u);
  const Dag g = load_dag(out + "/true_graph.json");
  EXPECT_EQ(g.edge_count(), meta.at("edge_count").get<std::size_t>());
  EXPECT_EQ(parse_scm_json(read_file(out + "/scm.json")).dag, g);
}

TEST(CliGenerate, ZeroDegreeWritesEmptyGraph) {
  TempDir dir("cli_gen0");
  const std::string out = generate(dir, "g", "--nodes 5 --avg-degree 0 --n 20 --format csv");
  EXPECT_EQ(load_dag(out + "/true_graph.txt").edge_count(), 0u);
}

TEST(CliGenerate, MeanEdgeCountOverSeeds) {
  TempDir dir("cli_gen_mean");
  double total = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    const std::string out = generate(dir, "s", "--nodes 10 --avg-degree 2 --n 5 --seed " + std::to_string(seed));
    total += json::parse(read_file(out + "/generate.json")).at("edge_count").get<double>();
  }
  EXPECT_NEAR(total / 100.0, 10.0, 0.5);
}

TEST(CliGenerate, InvalidDegreeIsUsageError) {
  TempDir dir("cli_gen_bad");
  const RunResult r = run_cli(dir, "generate --nodes 4 --avg-degree 7 --n 10 --output-dir '" + dir.str() + "'");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("degree"), std::string::npos) << r.err;
}

TEST(Cli, UsageErrors) {
  TempDir dir("cli_usage");
  EXPECT_EQ(run_cli(dir, "").code, 2);
  EXPECT_EQ(run_cli(dir, "frobnicate").code, 2);
  EXPECT_EQ(run_cli(dir, "generate --bogus 1").code, 2);
  EXPECT_EQ(run_cli(dir, "learn --data /nonexistent.csv").code, 2);
  EXPECT_EQ(run_cli(dir, "--help").code, 0);
}

class CliPipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli_pipeline");
    data_dir_ = generate(*dir_, "data", "--nodes 6 --avg-degree 2 --n 1500 --seed 3");
    target_ = json::parse(read_file(data_dir_ + "/generate.json")).at("target").get<std::string>();
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string data() { return data_dir_ + "/data.csv"; }
  static std::string sub(const std::string& name) {
    const std::string p = dir_->file(name);
    std::filesystem::create_directories(p);
    return p;
  }

  static TempDir* dir_;
  static std::string data_dir_;
  static std::string target_;
};

TempDir* CliPipelineTest::dir_ = nullptr;
std::string CliPipelineTest::data_dir_;
std::string CliPipelineTest::target_;

TEST_F(CliPipelineTest, LearnIsDeterministic) {
  const std::string a = sub("learn_a"), b = sub("learn_b");
  ASSERT_EQ(run_cli(*dir_, "learn --data '" + data() + "' --output-dir '" + a + "'").code, 0);
  ASSERT_EQ(run_cli(*dir_, "learn --data '" + data() + "' --output-dir '" + b + "' --threads 3").code, 0);
  EXPECT_EQ(read_file(a + "/learned_graph.json"), read_file(b + "/learned_graph.json"));
  const json report = json::parse(read_file(a + "/learn_report.json"));
  EXPECT_EQ(report.at("algorithm"), "tabu");
}

TEST_F(CliPipelineTest, LearnRecoversChainSkeleton) {
  LinearGaussianScm scm = random_scm(Dag({"X1", "X2", "X3"}, {{0, 1}, {1, 2}}), ScmConfig{});
  const std::string d = sub("chain");
  save_csv(sample(scm, 10000, 5), d + "/chain.csv");
  ASSERT_EQ(run_cli(*dir_, "learn --algorithm hc --data '" + d + "/chain.csv' --out '" + d + "/g.txt' --output-dir '" +
                               d + "'")
                .code,
            0);
  const Dag g = load_dag(d + "/g.txt");
  ASSERT_EQ(g.edge_count(), 2u);
  auto adjacent = [&](std::size_t a, std::size_t b) { return g.has_edge(a, b) || g.has_edge(b, a); };
  EXPECT_TRUE(adjacent(0, 1));
  EXPECT_TRUE(adjacent(1, 2));
}

TEST_F(CliPipelineTest, LearnRejectsUnknownAlgorithm) {
  const RunResult r = run_cli(*dir_, "learn --algorithm pc --data '" + data() + "' --output-dir '" + sub("bad") + "'");
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliPipelineTest, SageWithNonSeparatingGraphMatchesPlainRun) {
  const Dataset d = load_csv(data());
  std::vector<Edge> edges;
  for (std::size_t a = 0; a < d.column_count(); ++a) {
    for (std::size_t b = a + 1; b < d.column_count(); ++b) edges.emplace_back(a, b);
  }
  const std::string out = sub("sage_cmp");
  save_dag(Dag(d.column_labels, edges), out + "/complete.json");
  const std::string common = " --data '" + data() + "' --target " + target_ +
                             " --reps 2 --max-perms 15 --min-perms 5 --seed 9 --output-dir '" + out + "'";
  ASSERT_EQ(run_cli(*dir_, "sage" + common).code, 0);
  ASSERT_EQ(run_cli(*dir_, "sage --graph '" + out + "/complete.json'" + common).code, 0);
  for (int r = 0; r < 2; ++r) {
    const std::string suffix = "_rep" + std::to_string(r) + ".csv";
    EXPECT_EQ(read_file(out + "/sage" + suffix), read_file(out + "/dsage" + suffix));
  }
  const json a = json::parse(read_file(out + "/sage_summary.json"));
  const json b = json::parse(read_file(out + "/dsage_summary.json"));
  EXPECT_EQ(a.at("mean_phi"), b.at("mean_phi"));
}

TEST_F(CliPipelineTest, SageThreadsDoNotChangeOutput) {
  const std::string a = sub("sage_t1"), b = sub("sage_t4");
  const std::string common = " --data '" + data() + "' --target " + target_ + " --reps 1 --max-perms 12 --seed 2";
  ASSERT_EQ(run_cli(*dir_, "sage --threads 1 --output-dir '" + a + "'" + common).code, 0);
  ASSERT_EQ(run_cli(*dir_, "sage --threads 4 --output-dir '" + b + "'" + common).code, 0);
  EXPECT_EQ(read_file(a + "/sage_rep0.csv"), read_file(b + "/sage_rep0.csv"));
}

TEST_F(CliPipelineTest, SageMissingTargetIsUsageError) {
  const RunResult r = run_cli(*dir_, "sage --data '" + data() + "' --target NOPE --output-dir '" + sub("miss") + "'");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("NOPE"), std::string::npos) << r.err;
}

TEST_F(CliPipelineTest, CiBatch) {
  const std::string out = sub("ci");
  const Dataset d = load_csv(data());
  write_file_atomic(out + "/q.csv", d.column_labels[0] + "," + d.column_labels[1] + "\n" + d.column_labels[0] + "," +
                                        d.column_labels[2] + "," + d.column_labels[1] + "\n");
  ASSERT_EQ(run_cli(*dir_, "ci --data '" + data() + "' --queries '" + out + "/q.csv' --output-dir '" + out + "'").code, 0);
  const auto lines = split(read_file(out + "/ci_results.csv"), '\n');
  EXPECT_EQ(lines[0], "i,j,S,partial_correlation,z,p_value,independent");
  EXPECT_FALSE(lines[2].empty());
}

constexpr const char* kMinimalSpec = R"({"nodes": [5], "degrees": [2], "seeds": [0], "n": 1200, "train_rows": 1000,
  "repetitions": 1, "n_permutations_max": 10, "min_permutations": 5, "m_conditional_draws": 5,
  "n_mc": 2000, "runtime_permutations": 5})";

TEST(CliBench, MinimalSpecWritesSummaryAndReruns) {
  TempDir dir("cli_bench");
  write_file_atomic(dir.file("spec.json"), kMinimalSpec);
  const std::string a = dir.file("a"), b = dir.file("b");
  std::filesystem::create_directories(a);
  std::filesystem::create_directories(b);
  const RunResult first = run_cli(dir, "bench --spec '" + dir.file("spec.json") + "' --output-dir '" + a + "'");
  ASSERT_EQ(first.code, 0) << first.err;
  ASSERT_EQ(run_cli(dir, "bench --spec '" + dir.file("spec.json") + "' --output-dir '" + b + "'").code, 0);
  json sa = json::parse(read_file(a + "/summary.json"));
  json sb = json::parse(read_file(b + "/summary.json"));
  EXPECT_EQ(sa.at("cells_ok"), 1);
  strip_timing(sa);
  strip_timing(sb);
  EXPECT_EQ(sa, sb);
}

TEST(CliBench, MalformedSpecIsUsageError) {
  TempDir dir("cli_bench_bad");
  write_file_atomic(dir.file("bad.json"), R"({"nodes": [5], "repetitionz": 2})");
  const RunResult r = run_cli(dir, "bench --spec '" + dir.file("bad.json") + "' --output-dir '" + dir.str() + "'");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("repetitionz"), std::string::npos) << r.err;
  write_file_atomic(dir.file("bad2.json"), R"({"nodes": [5], "degrees": [9]})");
  EXPECT_EQ(run_cli(dir, "bench --spec '" + dir.file("bad2.json") + "' --output-dir '" + dir.str() + "'").code, 2);
}

}  // namespace
}  // namespace dsage
