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


#include "dsage/bench.hpp"

#include <filesystem>

#include <gtest/gtest.h>
#include <json.hpp>

#include "dsage/io.hpp"
#include "testing.hpp"

namespace dsage {
namespace {

using nlohmann::json;
using testing::TempDir;

void expect_confusion_identities(const DsepEvalReport& r) {
  EXPECT_EQ(r.tp + r.tn + r.fp + r.fn, r.n_mc);
  const double f1_den = static_cast<double>(2 * r.tp + r.fp + r.fn);
  EXPECT_DOUBLE_EQ(r.f1, f1_den == 0.0 ? 0.0 : 2.0 * static_cast<double>(r.tp) / f1_den);
  const double fdr_den = static_cast<double>(r.tp + r.fp);
  EXPECT_DOUBLE_EQ(r.fdr, fdr_den == 0.0 ? 0.0 : static_cast<double>(r.fp) / fdr_den);
}

// Removes every "timing" member so reruns can be compared.
void strip_timing(json& j) {
  if (j.is_object()) {
    j.erase("timing");
    for (auto& [key, value] : j.items()) strip_timing(value);
  } else if (j.is_array()) {
    for (auto& value : j) strip_timing(value);
  }
}

Dag complete_into_target(const Dag& g, std::size_t target) {
  std::vector<Edge> edges;
  for (std::size_t v = 0; v < g.node_count(); ++v) {
    if (v != target) edges.emplace_back(v, target);
  }
  return Dag(g.labels(), edges);
}

ExperimentSpec small_spec() {
  ExperimentSpec spec;
  spec.nodes = {6};
  spec.degrees = {2.0};
  spec.seeds = {1};
  spec.n = 1500;
  spec.train_rows = 1000;
  spec.repetitions = 2;
  spec.estimator.n_permutations_max = 15;
  spec.estimator.min_permutations = 5;
  spec.estimator.m_conditional_draws = 5;
  spec.n_mc = 5000;
  spec.runtime_permutations = 10;
  return spec;
}

TEST(FinalizeMetrics, Identities) {
  DsepEvalReport r;
  r.tp = 8;
  r.tn = 5;
  r.fp = 2;
  r.fn = 1;
  r.n_mc = 16;
  finalize_metrics(r);
  EXPECT_DOUBLE_EQ(r.f1, 16.0 / 19.0);
  EXPECT_DOUBLE_EQ(r.fdr, 0.2);
  EXPECT_DOUBLE_EQ(r.accuracy(), 13.0 / 16.0);
  DsepEvalReport empty;
  finalize_metrics(empty);
  EXPECT_EQ(empty.f1, 0.0);
  EXPECT_EQ(empty.fdr, 0.0);
}

TEST(McDsepEval, TrueGraphAgainstItself) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dag g = random_dag(10, 2.0, seed);
    const std::string target = g.labels()[choose_target(g, seed)];
    const DsepEvalReport r = mc_dsep_eval(g, g, target, 20000, seed);
    expect_confusion_identities(r);
    EXPECT_EQ(r.fp, 0u);
    EXPECT_EQ(r.fn, 0u);
    EXPECT_EQ(r.fdr, 0.0);
    if (r.tp > 0) EXPECT_EQ(r.f1, 1.0);
  }
}

TEST(McDsepEval, FullyConnectedPredictsNoSeparation) {
  const Dag g = random_dag(8, 1.5, 3);
  const std::size_t t = choose_target(g, 3);
  const DsepEvalReport r = mc_dsep_eval(g, complete_into_target(g, t), g.labels()[t], 1000, 4);
  expect_confusion_identities(r);
  EXPECT_EQ(r.tp, 0u);
  EXPECT_EQ(r.fp, 0u);
  EXPECT_TRUE(r.exact);
  const double share = dsep_share(g, t, DsepShareExact{});
  EXPECT_EQ(static_cast<double>(r.fn), share * static_cast<double>(r.n_mc));
}

TEST(McDsepEval, ExactEnumerationAndSamplingAgree) {
  const Dag g = random_dag(9, 2.0, 5);
  const Dag learned = random_dag(9, 2.0, 6);
  const std::string target = g.labels()[choose_target(g, 5)];
  const DsepEvalReport exact = mc_dsep_eval(g, learned, target, 1, 7);
  ASSERT_TRUE(exact.exact);
  EXPECT_EQ(exact.n_mc, dsep_query_count(8));
  const DsepEvalReport mc = mc_dsep_eval(g, learned, target, 200000, 7, 0);
  ASSERT_FALSE(mc.exact);
  EXPECT_EQ(mc.n_mc, 200000u);
  expect_confusion_identities(exact);
  expect_confusion_identities(mc);
  EXPECT_NEAR(mc.accuracy(), exact.accuracy(), 0.01);
  EXPECT_EQ(mc_dsep_eval(g, learned, target, 5000, 8, 0).tp, mc_dsep_eval(g, learned, target, 5000, 8, 0).tp);
}

TEST(McDsepEval, LabelsMustMatch) {
  const Dag a = random_dag(5, 2.0, 1);
  const Dag b = testing::chain_dag(5);
  EXPECT_DSAGE_ERROR(mc_dsep_eval(a, b, "X1", 100, 0), ErrorKind::kLabelMismatch);
  EXPECT_DSAGE_ERROR(mc_dsep_eval(a, a, "nope", 100, 0), ErrorKind::kLabelMismatch);
}

TEST(McDsepEval, Json) {
  const Dag g = random_dag(6, 2.0, 2);
  const auto j = json::parse(to_json_string(mc_dsep_eval(g, g, "X1", 100, 3)));
  for (const char* key : {"tp", "tn", "fp", "fn", "f1", "fdr", "n_mc", "seed"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_TRUE(j.at("timing").contains("wall_seconds"));
}

class RuntimeCompareTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ScmConfig config;
    config.seed = 9;
    scm_ = random_scm(random_dag(8, 2.0, 9), config);
    data_ = sample(scm_, 3000, 10);
    data_.target_label = scm_.dag.labels()[choose_target(scm_.dag, 9)];
  }
  LinearGaussianScm scm_;
  Dataset data_;
};

TEST_F(RuntimeCompareTest, AccuracyMatchesRecount) {
  RuntimeConfig config;
  config.n_permutations = 20;
  const RuntimeReport r = runtime_compare(data_, config, &scm_.dag);
  EXPECT_EQ(r.n_queries, 20u * 7u);
  EXPECT_EQ(r.decisions.size(), r.n_queries);
  ASSERT_TRUE(r.graph_accuracy && r.ci_accuracy);
  const auto [graph, ci] = recount_accuracy(r.decisions);
  EXPECT_EQ(*r.graph_accuracy, graph);
  EXPECT_EQ(*r.ci_accuracy, ci);
  // Independent recount from the decisions and the true graph.
  std::size_t agree = 0;
  const std::size_t t = data_.target_index();
  for (const auto& d : r.decisions) {
    if (d.graph_separated == d_separated(scm_.dag, d.feature, t, d.cond_set)) ++agree;
  }
  EXPECT_DOUBLE_EQ(graph, static_cast<double>(agree) / static_cast<double>(r.n_queries));
  EXPECT_GE(r.learn_seconds, 0.0);
  EXPECT_GE(r.ci_seconds, 0.0);
}

TEST_F(RuntimeCompareTest, ZeroQueriesTakeNoTime) {
  RuntimeConfig config;
  config.n_permutations = 0;
  const RuntimeReport r = runtime_compare(data_, config, &scm_.dag);
  EXPECT_EQ(r.n_queries, 0u);
  EXPECT_EQ(r.query_seconds, 0.0);
  EXPECT_EQ(r.ci_seconds, 0.0);
}

TEST_F(RuntimeCompareTest, DecisionsCsvAndJson) {
  RuntimeConfig config;
  config.n_permutations = 3;
  config.run_ci_tests = false;
  const RuntimeReport r = runtime_compare(data_, config);
  EXPECT_FALSE(r.graph_accuracy.has_value());
  const auto lines = split(decisions_csv(r, data_.column_labels), '\n');
  EXPECT_EQ(lines.front(), "feature,S,graph_separated,ci_independent,truth");
  EXPECT_EQ(std::count_if(lines.begin() + 1, lines.end(), [](const std::string& l) { return !l.empty(); }), 21);
  const auto j = json::parse(to_json_string(r));
  EXPECT_EQ(j.at("n_queries").get<std::size_t>(), 21u);
  EXPECT_TRUE(j.at("timing").contains("learn_seconds"));
}

class PairedRunsTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ScmConfig config;
    config.seed = 12;
    const auto scm = random_scm(random_dag(9, 2.0, 12), config);
    Dataset data = sample(scm, 2400, 13);
    data.target_label = scm.dag.labels()[choose_target(scm.dag, 12)];
    const auto split = split_train_test(data, 2000);
    const LinearModel model = fit_ols(split.train);
    const auto gm = fit_gaussian(split.train.features(), split.train.feature_labels());
    EstimatorConfig est;
    est.n_permutations_max = 30;
    est.min_permutations = 30;
    est.seed = 14;
    skip_ = {scm.dag, data.target_label};
    sage_ = sage_estimate(split.test, model, gm, est);
    dsage_ = dsage_estimate(split.test, model, gm, est, skip_);
  }
  SkipGraph skip_;
  SageResult sage_;
  SageResult dsage_;
};

TEST_F(PairedRunsTest, SkippedFractionEqualsSampledShare) {
  EXPECT_EQ(dsage_.skipped_fraction(), sampled_dsep_share(dsage_, skip_));
  EXPECT_EQ(sampled_dsep_share(sage_, skip_), sampled_dsep_share(dsage_, skip_));
}

TEST_F(PairedRunsTest, AuditCoversEverySkip) {
  const auto rows = audit_skips(sage_, dsage_, 3);
  ASSERT_EQ(rows.size(), dsage_.skip_log.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = dsage_.skip_log[i];
    EXPECT_EQ(rows[i].repetition, 3u);
    EXPECT_EQ(rows[i].feature, s.feature);
    EXPECT_EQ(rows[i].cond_size, s.cond_set.size());
    const auto& rec = sage_.delta_history[s.feature][s.permutation];
    EXPECT_EQ(rows[i].sage_delta, rec.delta);
    EXPECT_EQ(rows[i].within_3se, std::abs(rec.delta) <= 3.0 * rec.std_error);
  }
  const auto lines = split(audit_csv(rows, sage_.feature_labels), '\n');
  EXPECT_EQ(std::count_if(lines.begin() + 1, lines.end(), [](const std::string& l) { return !l.empty(); }),
            static_cast<std::ptrdiff_t>(rows.size()));
}

TEST_F(PairedRunsTest, RuntimeAccounting) {
  const auto e = estimate_sage_runtime(sage_, dsage_, 100);
  EXPECT_EQ(e.timed_permutations, 30u);
  EXPECT_EQ(e.skipped_fraction, dsage_.skipped_fraction());
  EXPECT_GT(e.seconds_per_evaluation, 0.0);
  // With free queries the accounted saving is exactly the skipped share.
  SageResult no_query_cost = dsage_;
  std::fill(no_query_cost.permutation_query_seconds.begin(), no_query_cost.permutation_query_seconds.end(), 0.0);
  EXPECT_NEAR(estimate_sage_runtime(sage_, no_query_cost, 100).accounted_saving_ratio, e.skipped_fraction, 1e-12);
  EXPECT_LE(e.accounted_saving_ratio, e.skipped_fraction);
}

TEST(AuditSkips, RequiresPairedRuns) {
  SageResult a, b;
  a.permutations = {{0, 1}};
  b.permutations = {{1, 0}};
  a.n_permutations_used = b.n_permutations_used = 1;
  EXPECT_DSAGE_ERROR(audit_skips(a, b), ErrorKind::kInvalidArgument);
}

TEST(ExperimentSpec, ParseAndValidate) {
  const ExperimentSpec spec = parse_experiment_spec(
      R"({"nodes": [4, 6], "degrees": [1, 2], "seeds": [3], "n": 500, "train_rows": 400, "algorithm": "hc",
          "repetitions": 2, "m_conditional_draws": 7, "threads": 2})");
  EXPECT_EQ(spec.nodes, (std::vector<std::size_t>{4, 6}));
  EXPECT_EQ(spec.search.algorithm, SearchAlgorithm::kHillClimb);
  EXPECT_EQ(spec.estimator.m_conditional_draws, 7u);
  EXPECT_EQ(spec.threads, 2u);
  const ExperimentSpec back = parse_experiment_spec(to_json_string(spec));
  EXPECT_EQ(to_json_string(back), to_json_string(spec));

  EXPECT_DSAGE_ERROR(parse_experiment_spec("{\"nodez\": [4]}"), ErrorKind::kParse);
  EXPECT_DSAGE_ERROR(parse_experiment_spec("{\"nodes\": \"ten\"}"), ErrorKind::kParse);
  EXPECT_DSAGE_ERROR(parse_experiment_spec("[1]"), ErrorKind::kParse);
  EXPECT_DSAGE_ERROR(parse_experiment_spec("{\"nodes\": [4], \"degrees\": [4]}"), ErrorKind::kInvalidDegree);
  EXPECT_DSAGE_ERROR(parse_experiment_spec("{\"n\": 100, \"train_rows\": 100}"), ErrorKind::kInvalidArgument);
  EXPECT_DSAGE_ERROR(parse_experiment_spec("{\"repetitions\": 0}"), ErrorKind::kInvalidArgument);
}

TEST(ExperimentSpec, Defaults) {
  const ExperimentSpec spec = parse_experiment_spec("{}");
  EXPECT_EQ(spec.n, 10000u);
  EXPECT_EQ(spec.train_rows, 8000u);
  EXPECT_EQ(spec.repetitions, 5u);
  EXPECT_EQ(spec.search.algorithm, SearchAlgorithm::kTabu);
  EXPECT_EQ(spec.search.tabu_list_size, 10u);
  EXPECT_EQ(spec.estimator.m_conditional_draws, 10u);
  EXPECT_EQ(spec.estimator.convergence_threshold, 0.025);
}

TEST(RunCell, SummaryAccounting) {
  const CellReport cell = run_cell(small_spec(), 6, 2.0, 1);
  ASSERT_EQ(cell.sage.size(), 2u);
  const auto j = json::parse(cell_summary_json(cell));
  std::size_t skipped = 0, total = 0;
  for (const auto& d : cell.dsage) {
    skipped += d.evaluations_skipped;
    total += d.evaluations_total;
  }
  EXPECT_EQ(j.at("skipped_fraction").get<double>(), static_cast<double>(skipped) / static_cast<double>(total));
  EXPECT_EQ(j.at("skip_audit").at("positions").get<std::size_t>(), cell.audit.size());
  expect_confusion_identities(cell.dsep_eval);
  EXPECT_EQ(cell.sage[0].permutations, cell.dsage[0].permutations);
  EXPECT_NE(cell.sage[0].permutations, cell.sage[1].permutations);
}

TEST(RunExperiment, WritesReportsAndIsReproducible) {
  TempDir a("bench_a"), b("bench_b");
  const ExperimentSpec spec = small_spec();
  const auto cells = run_experiment(spec, a.str());
  ASSERT_EQ(cells.size(), 1u);
  ASSERT_TRUE(cells[0].ok) << cells[0].error;
  const std::filesystem::path dir = std::filesystem::path(a.str()) / cell_directory_name(6, 2.0, 1);
  for (const char* name : {"scm.json", "true_graph.json", "learned_graph.json", "learn_report.json", "model.json",
                           "gaussian.json", "dsep_eval.json", "runtime.json", "query_decisions.csv",
                           "sage_rep0.json", "sage_rep1.csv", "dsage_rep0.json", "dsage_rep1.csv",
                           "skipped_delta_audit.csv", "summary.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
  }
  run_experiment(spec, b.str());
  json first = json::parse(read_file(a.file("summary.json")));
  json second = json::parse(read_file(b.file("summary.json")));
  EXPECT_EQ(first.at("cells_ok"), 1);
  strip_timing(first);
  strip_timing(second);
  EXPECT_EQ(first, second);
}

TEST(RunExperiment, FailingCellDoesNotStopOthers) {
  TempDir dir("bench_fail");
  ExperimentSpec spec = small_spec();
  spec.nodes = {3, 30};
  spec.n = 40;
  spec.train_rows = 25;
  spec.repetitions = 1;
  const auto cells = run_experiment(spec, dir.str());
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_TRUE(cells[0].ok) << cells[0].error;
  EXPECT_FALSE(cells[1].ok);
  EXPECT_FALSE(cells[1].error.empty());
  const json top = json::parse(read_file(dir.file("summary.json")));
  EXPECT_EQ(top.at("cells_ok"), 1);
  EXPECT_EQ(top.at("cells_failed"), 1);
}

TEST(RunExperiment, ThreadCountDoesNotChangeNumbers) {
  ExperimentSpec spec = small_spec();
  spec.seeds = {1, 2};
  TempDir one("bench_t1"), many("bench_t4");
  run_experiment(spec, one.str());
  spec.threads = 4;
  run_experiment(spec, many.str());
  json a = json::parse(read_file(one.file("summary.json")));
  json b = json::parse(read_file(many.file("summary.json")));
  strip_timing(a);
  strip_timing(b);
  a.erase("spec");
  b.erase("spec");
  EXPECT_EQ(a, b);
}

TEST(CellDirectoryName, Format) {
  EXPECT_EQ(cell_directory_name(10, 2.0, 0), "d10_deg2_s0");
  EXPECT_EQ(cell_directory_name(100, 2.5, 7), "d100_deg2p5_s7");
}

}  // namespace
}  // namespace dsage
