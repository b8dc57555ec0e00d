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

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsage/csl.hpp"
#include "dsage/dag.hpp"
#include "dsage/dataset.hpp"
#include "dsage/gaussian.hpp"
#include "dsage/model.hpp"
#include "dsage/sage.hpp"
#include "dsage/scm.hpp"

namespace dsage {

/// Query spaces up to this size are enumerated instead of sampled.
inline constexpr std::uint64_t kExactEnumerationLimit = 100000;

/// Confusion counts of learned-graph d-separation against the true graph,
/// with d-separation as the positive class.
struct DsepEvalReport {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  double f1 = 0.0;
  double fdr = 0.0;
  std::uint64_t n_mc = 0;
  std::uint64_t seed = 0;
  bool exact = false;
  double wall_seconds = 0.0;

  double accuracy() const;
};

/// Fills f1 and fdr from the counts.
void finalize_metrics(DsepEvalReport& report);

/// Classifies (feature, conditioning set) queries against `target_label` in
/// both graphs. Queries are drawn as in sample_feature_query, or enumerated
/// when the query space has at most `exact_limit` elements (n_mc is then the
/// enumerated count). Graphs are matched by label; throws kLabelMismatch when
/// the label sets differ.
DsepEvalReport mc_dsep_eval(const Dag& true_graph, const Dag& learned_graph, const std::string& target_label,
                            std::uint64_t n_mc, std::uint64_t seed,
                            std::uint64_t exact_limit = kExactEnumerationLimit);

std::string to_json_string(const DsepEvalReport& report);

struct RuntimeConfig {
  SearchConfig search;
  /// Query sequence: this many permutations of the features, each feature
  /// queried against the target given its predecessors.
  std::size_t n_permutations = 100;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  /// When false only the learning and query passes run.
  bool run_ci_tests = true;
};

struct QueryDecision {
  std::size_t feature = 0;
  std::vector<std::size_t> cond_set;
  bool graph_separated = false;
  bool ci_independent = false;
  /// Ground truth from the true graph when one was given.
  std::optional<bool> truth;
};

struct RuntimeReport {
  double learn_seconds = 0.0;
  double query_seconds = 0.0;
  double ci_seconds = 0.0;
  std::size_t n_queries = 0;
  /// Agreement with the true graph; empty without one.
  std::optional<double> graph_accuracy;
  std::optional<double> ci_accuracy;
  LearnResult learn;
  std::vector<QueryDecision> decisions;
  RuntimeConfig config;
};

/// Times structure learning on `data`, d-separation queries on the learned
/// graph and Fisher-z tests on the data over the same query sequence. Indices
/// in the decisions are data columns.
RuntimeReport runtime_compare(const Dataset& data, const RuntimeConfig& config, const Dag* true_graph = nullptr);

/// Recounts both accuracies from the logged decisions.
std::pair<double, double> recount_accuracy(const std::vector<QueryDecision>& decisions);

std::string to_json_string(const RuntimeReport& report);
/// feature,S,graph_separated,ci_independent,truth
std::string decisions_csv(const RuntimeReport& report, const std::vector<std::string>& labels);

/// Full-run time estimates from per-permutation timing: the first
/// `timed_permutations` permutations are measured and scaled to the number of
/// permutations each run used.
struct SageRuntimeEstimate {
  std::size_t timed_permutations = 0;
  double sage_timed_seconds = 0.0;
  double dsage_timed_seconds = 0.0;
  double sage_estimated_seconds = 0.0;
  double dsage_estimated_seconds = 0.0;
  /// Mean cost of one evaluated surplus contribution in the d-SAGE run.
  double seconds_per_evaluation = 0.0;
  /// 1 - (cost of evaluated contributions + queries) / (cost had every
  /// contribution been evaluated), all from the d-SAGE run.
  double accounted_saving_ratio = 0.0;
  /// 1 - dsage_timed / sage_timed over the same permutations.
  double measured_saving_ratio = 0.0;
  double skipped_fraction = 0.0;
};

SageRuntimeEstimate estimate_sage_runtime(const SageResult& sage, const SageResult& dsage,
                                          std::size_t timed_permutations = 100);

/// Share of the (feature, predecessor set) pairs visited by `result` that are
/// d-separated from the target in `skip.graph`, recounted from the stored
/// permutations.
double sampled_dsep_share(const SageResult& result, const SkipGraph& skip);

/// A skipped position of the d-SAGE run with the SAGE run's value there.
struct SkipAuditRow {
  std::size_t repetition = 0;
  std::size_t permutation = 0;
  std::size_t feature = 0;
  std::size_t cond_size = 0;
  double sage_delta = 0.0;
  double sage_std_error = 0.0;
  bool within_3se = false;
};

/// Pairs every skip of `dsage` with the same position of `sage`. Positions
/// past the end of the SAGE run are left out.
std::vector<SkipAuditRow> audit_skips(const SageResult& sage, const SageResult& dsage, std::size_t repetition = 0);

std::string audit_csv(const std::vector<SkipAuditRow>& rows, const std::vector<std::string>& feature_labels);

struct ExperimentSpec {
  std::vector<std::size_t> nodes{10};
  std::vector<double> degrees{2.0};
  std::vector<std::uint64_t> seeds{0};
  std::size_t n = 10000;
  std::size_t train_rows = 8000;
  SearchConfig search;
  std::size_t repetitions = 5;
  EstimatorConfig estimator;
  std::uint64_t n_mc = 1000000;
  std::size_t runtime_permutations = 100;
  double alpha = 0.05;
  bool use_true_covariance = false;
  /// Runs the Fisher-z timing comparison.
  bool compare_ci = true;
  unsigned threads = 1;

  void validate() const;
};

/// JSON only. Unknown keys and wrong types are rejected with kParse; values
/// are checked by validate().
ExperimentSpec parse_experiment_spec(const std::string& text);
ExperimentSpec load_experiment_spec(const std::string& path);
std::string to_json_string(const ExperimentSpec& spec);

/// Everything one (nodes, degree, seed) cell produces.
struct CellReport {
  std::size_t nodes = 0;
  double degree = 0.0;
  std::uint64_t seed = 0;
  LinearGaussianScm scm;
  std::string target_label;
  LinearModel model;
  double test_mse = 0.0;
  GaussianModel<double> gaussian;
  double true_dsep_share = 0.0;
  double learned_dsep_share = 0.0;
  DsepEvalReport dsep_eval;
  RuntimeReport runtime;
  std::vector<SageResult> sage;
  std::vector<SageResult> dsage;
  std::vector<SageRuntimeEstimate> sage_runtime;
  std::vector<SkipAuditRow> audit;
};

CellReport run_cell(const ExperimentSpec& spec, std::size_t nodes, double degree, std::uint64_t seed);

/// Summary with the numerical fields at the top level and every timing field
/// under "timing".
std::string cell_summary_json(const CellReport& cell);

/// Writes the cell's report files into `dir`.
void write_cell(const CellReport& cell, const std::string& dir);

struct CellStatus {
  std::size_t nodes = 0;
  double degree = 0.0;
  std::uint64_t seed = 0;
  std::string directory;
  bool ok = false;
  std::string error;
};

/// Runs every cell, writing one directory per cell plus a top-level
/// summary.json. A failing cell is recorded and the rest continue.
std::vector<CellStatus> run_experiment(const ExperimentSpec& spec, const std::string& output_dir);

/// "d<nodes>_deg<degree>_s<seed>" with any decimal point in the degree written as "p".
std::string cell_directory_name(std::size_t nodes, double degree, std::uint64_t seed);

}  // namespace dsage
