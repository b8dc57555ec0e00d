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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

#include "dsage/citest.hpp"
#include "dsage/error.hpp"
#include "dsage/io.hpp"
#include "dsage/parallel.hpp"
#include "dsage/random.hpp"

namespace dsage {
namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// index in `to` of every node of `from`, by label.
std::vector<std::size_t> label_map(const Dag& from, const Dag& to) {
  std::vector<std::string> a = from.labels();
  std::vector<std::string> b = to.labels();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b) throw Error(ErrorKind::kLabelMismatch, "graphs have different node labels");
  std::vector<std::size_t> out(from.node_count());
  for (std::size_t i = 0; i < from.node_count(); ++i) out[i] = to.index_of(from.labels()[i]);
  return out;
}

std::vector<std::size_t> remap(std::span<const std::size_t> nodes, const std::vector<std::size_t>& map) {
  std::vector<std::size_t> out;
  out.reserve(nodes.size());
  for (std::size_t v : nodes) out.push_back(map[v]);
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

template <typename T>
T take(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("spec field '") + key + "': " + e.what());
  }
}

std::string join_labels(std::span<const std::size_t> idx, const std::vector<std::string>& labels) {
  std::string out;
  for (std::size_t i : idx) {
    if (!out.empty()) out += ';';
    out += labels[i];
  }
  return out;
}

std::string degree_text(double degree) {
  std::string s = format_double(degree);
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

}  // namespace

double DsepEvalReport::accuracy() const {
  const std::uint64_t total = tp + tn + fp + fn;
  return total == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total);
}

void finalize_metrics(DsepEvalReport& report) {
  const std::uint64_t f1_den = 2 * report.tp + report.fp + report.fn;
  report.f1 = f1_den == 0 ? 0.0 : 2.0 * static_cast<double>(report.tp) / static_cast<double>(f1_den);
  const std::uint64_t pos = report.tp + report.fp;
  report.fdr = pos == 0 ? 0.0 : static_cast<double>(report.fp) / static_cast<double>(pos);
}

DsepEvalReport mc_dsep_eval(const Dag& true_graph, const Dag& learned_graph, const std::string& target_label,
                            std::uint64_t n_mc, std::uint64_t seed, std::uint64_t exact_limit) {
  if (n_mc == 0) throw Error(ErrorKind::kInvalidArgument, "n_mc must be positive");
  const auto start = Clock::now();
  const auto to_learned = label_map(true_graph, learned_graph);
  const std::size_t target = true_graph.index_of(target_label);
  const std::size_t learned_target = to_learned[target];
  const auto features = feature_nodes(true_graph, target);

  DsepEvalReport report;
  report.seed = seed;
  auto classify = [&](std::size_t j, std::span<const std::size_t> cond) {
    const bool truth = d_separated(true_graph, j, target, cond);
    const bool predicted = d_separated(learned_graph, to_learned[j], learned_target, remap(cond, to_learned));
    if (predicted) {
      ++(truth ? report.tp : report.fp);
    } else {
      ++(truth ? report.fn : report.tn);
    }
  };

  const std::uint64_t space = dsep_query_count(features.size());
  if (space > 0 && space <= exact_limit) {
    report.exact = true;
    std::vector<std::size_t> others;
    std::vector<std::size_t> cond;
    for (std::size_t j : features) {
      others.clear();
      for (std::size_t i : features) {
        if (i != j) others.push_back(i);
      }
      for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << others.size()); ++mask) {
        cond.clear();
        for (std::size_t b = 0; b < others.size(); ++b) {
          if (mask >> b & 1u) cond.push_back(others[b]);
        }
        classify(j, cond);
      }
    }
    report.n_mc = space;
  } else {
    Rng rng = make_rng(seed);
    for (std::uint64_t i = 0; i < n_mc; ++i) {
      const auto q = sample_feature_query(features, rng);
      classify(q.feature, q.cond_set);
    }
    report.n_mc = n_mc;
  }
  finalize_metrics(report);
  report.wall_seconds = seconds_since(start);
  return report;
}

std::string to_json_string(const DsepEvalReport& report) {
  json j;
  j["tp"] = report.tp;
  j["tn"] = report.tn;
  j["fp"] = report.fp;
  j["fn"] = report.fn;
  j["f1"] = report.f1;
  j["fdr"] = report.fdr;
  j["accuracy"] = report.accuracy();
  j["n_mc"] = report.n_mc;
  j["seed"] = report.seed;
  j["exact"] = report.exact;
  j["timing"] = {{"wall_seconds", report.wall_seconds}};
  return j.dump(2) + "\n";
}

RuntimeReport runtime_compare(const Dataset& data, const RuntimeConfig& config, const Dag* true_graph) {
  config.search.validate();
  RuntimeReport report;
  report.config = config;
  const std::size_t target = data.target_index();
  const auto features = data.feature_indices();

  const auto learn_start = Clock::now();
  report.learn = learn_structure(data, config.search);
  report.learn_seconds = seconds_since(learn_start);

  for (std::size_t perm = 0; perm < config.n_permutations; ++perm) {
    std::vector<std::size_t> order = features;
    Rng rng = make_rng(config.seed, {perm});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> prefix;
    for (std::size_t j : order) {
      QueryDecision q;
      q.feature = j;
      q.cond_set = prefix;
      std::sort(q.cond_set.begin(), q.cond_set.end());
      report.decisions.push_back(std::move(q));
      prefix.push_back(j);
    }
  }
  report.n_queries = report.decisions.size();

  const Dag& learned = report.learn.dag;
  std::vector<std::size_t> column_to_learned(data.column_count());
  for (std::size_t c = 0; c < data.column_count(); ++c) column_to_learned[c] = learned.index_of(data.column_labels[c]);
  std::vector<std::vector<std::size_t>> learned_sets;
  learned_sets.reserve(report.decisions.size());
  for (const auto& q : report.decisions) learned_sets.push_back(remap(q.cond_set, column_to_learned));

  if (!report.decisions.empty()) {
    const auto query_start = Clock::now();
    for (std::size_t i = 0; i < report.decisions.size(); ++i) {
      auto& q = report.decisions[i];
      q.graph_separated = d_separated(learned, column_to_learned[q.feature], column_to_learned[target], learned_sets[i]);
    }
    report.query_seconds = seconds_since(query_start);
  }

  if (config.run_ci_tests && !report.decisions.empty()) {
    const auto ci_start = Clock::now();
    for (auto& q : report.decisions) q.ci_independent = ci_test(data, q.feature, target, q.cond_set, config.alpha).independent;
    report.ci_seconds = seconds_since(ci_start);
  }

  if (true_graph) {
    std::vector<std::size_t> column_to_true(data.column_count());
    for (std::size_t c = 0; c < data.column_count(); ++c) column_to_true[c] = true_graph->index_of(data.column_labels[c]);
    for (auto& q : report.decisions) {
      q.truth = d_separated(*true_graph, column_to_true[q.feature], column_to_true[target],
                            remap(q.cond_set, column_to_true));
    }
    const auto [graph_acc, ci_acc] = recount_accuracy(report.decisions);
    report.graph_accuracy = graph_acc;
    if (config.run_ci_tests) report.ci_accuracy = ci_acc;
  }
  return report;
}

std::pair<double, double> recount_accuracy(const std::vector<QueryDecision>& decisions) {
  std::size_t graph_hits = 0;
  std::size_t ci_hits = 0;
  std::size_t counted = 0;
  for (const auto& q : decisions) {
    if (!q.truth) continue;
    ++counted;
    graph_hits += q.graph_separated == *q.truth ? 1 : 0;
    ci_hits += q.ci_independent == *q.truth ? 1 : 0;
  }
  if (counted == 0) return {0.0, 0.0};
  return {static_cast<double>(graph_hits) / static_cast<double>(counted),
          static_cast<double>(ci_hits) / static_cast<double>(counted)};
}

std::string to_json_string(const RuntimeReport& report) {
  json j;
  j["n_queries"] = report.n_queries;
  j["graph_accuracy"] = optional_json(report.graph_accuracy);
  j["ci_accuracy"] = optional_json(report.ci_accuracy);
  j["learned_edge_count"] = report.learn.dag.edge_count();
  j["learned_score"] = report.learn.score;
  j["config"] = {{"algorithm", std::string(to_string(report.config.search.algorithm))},
                 {"tabu_list_size", report.config.search.tabu_list_size},
                 {"max_nonimproving", report.config.search.max_nonimproving},
                 {"n_permutations", report.config.n_permutations},
                 {"alpha", report.config.alpha},
                 {"seed", report.config.seed},
                 {"run_ci_tests", report.config.run_ci_tests}};
  j["timing"] = {{"learn_seconds", report.learn_seconds},
                 {"query_seconds", report.query_seconds},
                 {"ci_seconds", report.ci_seconds},
                 {"learn_plus_query_seconds", report.learn_seconds + report.query_seconds}};
  return j.dump(2) + "\n";
}

std::string decisions_csv(const RuntimeReport& report, const std::vector<std::string>& labels) {
  std::string out = "feature,S,graph_separated,ci_independent,truth\n";
  for (const auto& q : report.decisions) {
    out += labels.at(q.feature) + ',' + join_labels(q.cond_set, labels) + ',' + (q.graph_separated ? "1" : "0") +
           ',' + (q.ci_independent ? "1" : "0") + ',' + (q.truth ? (*q.truth ? "1" : "0") : "") + '\n';
  }
  return out;
}

SageRuntimeEstimate estimate_sage_runtime(const SageResult& sage, const SageResult& dsage,
                                          std::size_t timed_permutations) {
  SageRuntimeEstimate out;
  out.skipped_fraction = dsage.skipped_fraction();
  const std::size_t k = std::min({timed_permutations, sage.n_permutations_used, dsage.n_permutations_used});
  out.timed_permutations = k;
  if (k == 0) return out;

  std::size_t evaluated = 0;
  double evaluation_seconds = 0.0;
  double query_seconds = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    out.sage_timed_seconds += sage.permutation_seconds[p];
    out.dsage_timed_seconds += dsage.permutation_seconds[p];
    query_seconds += dsage.permutation_query_seconds[p];
    evaluation_seconds += dsage.permutation_seconds[p] - dsage.permutation_query_seconds[p];
    for (const auto& history : dsage.delta_history) evaluated += history[p].skipped ? 0 : 1;
  }
  const auto kd = static_cast<double>(k);
  out.sage_estimated_seconds = out.sage_timed_seconds * static_cast<double>(sage.n_permutations_used) / kd;
  out.dsage_estimated_seconds = out.dsage_timed_seconds * static_cast<double>(dsage.n_permutations_used) / kd;
  if (out.sage_timed_seconds > 0.0) out.measured_saving_ratio = 1.0 - out.dsage_timed_seconds / out.sage_timed_seconds;

  if (evaluated > 0) {
    out.seconds_per_evaluation = evaluation_seconds / static_cast<double>(evaluated);
    const double full = out.seconds_per_evaluation * static_cast<double>(dsage.evaluations_total);
    const double spent =
        out.seconds_per_evaluation * static_cast<double>(dsage.evaluations_total - dsage.evaluations_skipped) +
        query_seconds / kd * static_cast<double>(dsage.n_permutations_used);
    if (full > 0.0) out.accounted_saving_ratio = 1.0 - spent / full;
  } else {
    out.accounted_saving_ratio = out.skipped_fraction;
  }
  return out;
}

double sampled_dsep_share(const SageResult& result, const SkipGraph& skip) {
  const std::size_t target = skip.graph.index_of(skip.target_label);
  std::vector<std::size_t> node;
  for (const auto& label : result.feature_labels) node.push_back(skip.graph.index_of(label));
  std::size_t separated = 0;
  std::size_t total = 0;
  for (const auto& order : result.permutations) {
    std::vector<std::size_t> prefix;
    for (std::size_t j : order) {
      separated += d_separated(skip.graph, node[j], target, prefix) ? 1 : 0;
      ++total;
      prefix.push_back(node[j]);
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(separated) / static_cast<double>(total);
}

std::vector<SkipAuditRow> audit_skips(const SageResult& sage, const SageResult& dsage, std::size_t repetition) {
  if (sage.feature_labels != dsage.feature_labels) {
    throw Error(ErrorKind::kLabelMismatch, "runs cover different features");
  }
  std::vector<SkipAuditRow> rows;
  const std::size_t shared = std::min(sage.n_permutations_used, dsage.n_permutations_used);
  for (std::size_t p = 0; p < shared; ++p) {
    if (sage.permutations[p] != dsage.permutations[p]) {
      throw Error(ErrorKind::kInvalidArgument, "runs are not seed-paired");
    }
  }
  for (const auto& skip : dsage.skip_log) {
    if (skip.permutation >= sage.n_permutations_used) continue;
    const auto& r = sage.delta_history[skip.feature][skip.permutation];
    SkipAuditRow row;
    row.repetition = repetition;
    row.permutation = skip.permutation;
    row.feature = skip.feature;
    row.cond_size = skip.cond_set.size();
    row.sage_delta = r.delta;
    row.sage_std_error = r.std_error;
    row.within_3se = std::abs(r.delta) <= 3.0 * r.std_error;
    rows.push_back(row);
  }
  return rows;
}

std::string audit_csv(const std::vector<SkipAuditRow>& rows, const std::vector<std::string>& feature_labels) {
  std::string out = "repetition,permutation,feature,cond_size,sage_delta,sage_std_error,within_3se\n";
  for (const auto& r : rows) {
    out += std::to_string(r.repetition) + ',' + std::to_string(r.permutation) + ',' + feature_labels.at(r.feature) +
           ',' + std::to_string(r.cond_size) + ',' + format_double(r.sage_delta) + ',' +
           format_double(r.sage_std_error) + ',' + (r.within_3se ? "1" : "0") + '\n';
  }
  return out;
}

void ExperimentSpec::validate() const {
  if (nodes.empty() || degrees.empty() || seeds.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "nodes, degrees and seeds must be non-empty");
  }
  for (std::size_t d : nodes) {
    if (d < 2) throw Error(ErrorKind::kInvalidArgument, "every graph needs at least 2 nodes");
    for (double k : degrees) {
      if (!(k >= 0.0 && k <= static_cast<double>(d - 1))) {
        throw Error(ErrorKind::kInvalidDegree, "degree " + format_double(k) + " outside [0, " +
                                                   std::to_string(d - 1) + "] for " + std::to_string(d) + " nodes");
      }
    }
  }
  if (train_rows == 0 || train_rows >= n) throw Error(ErrorKind::kInvalidArgument, "need 0 < train_rows < n");
  if (repetitions == 0) throw Error(ErrorKind::kInvalidArgument, "repetitions must be positive");
  if (n_mc == 0) throw Error(ErrorKind::kInvalidArgument, "n_mc must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::kInvalidArgument, "alpha must lie in (0, 1)");
  search.validate();
  estimator.validate();
}

ExperimentSpec parse_experiment_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::kParse, "spec must be a JSON object");
  static const std::set<std::string> known = {
      "nodes", "degrees", "seeds", "n", "train_rows", "algorithm", "tabu_list_size", "max_nonimproving",
      "max_in_degree", "repetitions", "n_permutations_max", "min_permutations", "convergence_threshold",
      "m_conditional_draws", "stop_on_convergence", "n_mc", "runtime_permutations", "alpha",
      "use_true_covariance", "compare_ci", "threads"};
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) throw Error(ErrorKind::kParse, "unknown spec field '" + item.key() + "'");
  }
  ExperimentSpec spec;
  if (j.contains("nodes")) spec.nodes = take<std::vector<std::size_t>>(j, "nodes");
  if (j.contains("degrees")) spec.degrees = take<std::vector<double>>(j, "degrees");
  if (j.contains("seeds")) spec.seeds = take<std::vector<std::uint64_t>>(j, "seeds");
  if (j.contains("n")) spec.n = take<std::size_t>(j, "n");
  if (j.contains("train_rows")) spec.train_rows = take<std::size_t>(j, "train_rows");
  if (j.contains("algorithm")) spec.search.algorithm = parse_search_algorithm(take<std::string>(j, "algorithm"));
  if (j.contains("tabu_list_size")) spec.search.tabu_list_size = take<std::size_t>(j, "tabu_list_size");
  if (j.contains("max_nonimproving")) spec.search.max_nonimproving = take<std::size_t>(j, "max_nonimproving");
  if (j.contains("max_in_degree")) spec.search.max_in_degree = take<std::size_t>(j, "max_in_degree");
  if (j.contains("repetitions")) spec.repetitions = take<std::size_t>(j, "repetitions");
  if (j.contains("n_permutations_max")) spec.estimator.n_permutations_max = take<std::size_t>(j, "n_permutations_max");
  if (j.contains("min_permutations")) spec.estimator.min_permutations = take<std::size_t>(j, "min_permutations");
  if (j.contains("convergence_threshold")) {
    spec.estimator.convergence_threshold = take<double>(j, "convergence_threshold");
  }
  if (j.contains("m_conditional_draws")) {
    spec.estimator.m_conditional_draws = take<std::size_t>(j, "m_conditional_draws");
  }
  if (j.contains("stop_on_convergence")) spec.estimator.stop_on_convergence = take<bool>(j, "stop_on_convergence");
  if (j.contains("n_mc")) spec.n_mc = take<std::uint64_t>(j, "n_mc");
  if (j.contains("runtime_permutations")) spec.runtime_permutations = take<std::size_t>(j, "runtime_permutations");
  if (j.contains("alpha")) spec.alpha = take<double>(j, "alpha");
  if (j.contains("use_true_covariance")) spec.use_true_covariance = take<bool>(j, "use_true_covariance");
  if (j.contains("compare_ci")) spec.compare_ci = take<bool>(j, "compare_ci");
  if (j.contains("threads")) spec.threads = take<unsigned>(j, "threads");
  spec.validate();
  return spec;
}

ExperimentSpec load_experiment_spec(const std::string& path) { return parse_experiment_spec(read_file(path)); }

std::string to_json_string(const ExperimentSpec& spec) {
  json j;
  j["nodes"] = spec.nodes;
  j["degrees"] = spec.degrees;
  j["seeds"] = spec.seeds;
  j["n"] = spec.n;
  j["train_rows"] = spec.train_rows;
  j["algorithm"] = std::string(to_string(spec.search.algorithm));
  j["tabu_list_size"] = spec.search.tabu_list_size;
  j["max_nonimproving"] = spec.search.max_nonimproving;
  if (spec.search.max_in_degree != std::numeric_limits<std::size_t>::max()) {
    j["max_in_degree"] = spec.search.max_in_degree;
  }
  j["repetitions"] = spec.repetitions;
  j["n_permutations_max"] = spec.estimator.n_permutations_max;
  j["min_permutations"] = spec.estimator.min_permutations;
  j["convergence_threshold"] = spec.estimator.convergence_threshold;
  j["m_conditional_draws"] = spec.estimator.m_conditional_draws;
  j["stop_on_convergence"] = spec.estimator.stop_on_convergence;
  j["n_mc"] = spec.n_mc;
  j["runtime_permutations"] = spec.runtime_permutations;
  j["alpha"] = spec.alpha;
  j["use_true_covariance"] = spec.use_true_covariance;
  j["compare_ci"] = spec.compare_ci;
  j["threads"] = spec.threads;
  return j.dump(2) + "\n";
}

CellReport run_cell(const ExperimentSpec& spec, std::size_t nodes, double degree, std::uint64_t seed) {
  CellReport cell;
  cell.nodes = nodes;
  cell.degree = degree;
  cell.seed = seed;

  const Dag dag = random_dag(nodes, degree, seed);
  ScmConfig scm_config;
  scm_config.seed = seed;
  cell.scm = random_scm(dag, scm_config);
  Dataset data = sample(cell.scm, spec.n, seed);
  const std::size_t target = choose_target(dag, seed);
  cell.target_label = dag.labels()[target];
  data.target_label = cell.target_label;
  const auto split = split_train_test(data, spec.train_rows);

  cell.model = fit_ols(split.train);
  cell.test_mse = mse(cell.model.predict_batch(split.test.features()), split.test.target());
  if (spec.use_true_covariance) {
    const GaussianModel<double> joint{data.column_labels, cell.scm.means, implied_covariance(cell.scm)};
    cell.gaussian = marginal(joint, data.feature_indices());
  } else {
    cell.gaussian = fit_gaussian(split.train.features(), split.train.feature_labels());
  }

  RuntimeConfig runtime_config;
  runtime_config.search = spec.search;
  runtime_config.search.seed = seed;
  runtime_config.search.threads = spec.threads;
  runtime_config.n_permutations = spec.runtime_permutations;
  runtime_config.alpha = spec.alpha;
  runtime_config.seed = seed;
  runtime_config.run_ci_tests = spec.compare_ci;
  cell.runtime = runtime_compare(data, runtime_config, &dag);
  const Dag& learned = cell.runtime.learn.dag;

  auto share = [&](const Dag& g) {
    const std::size_t t = g.index_of(cell.target_label);
    if (dsep_query_count(nodes - 1) <= kExactEnumerationLimit) return dsep_share(g, t, DsepShareExact{});
    return dsep_share(g, t, DsepShareMonteCarlo{spec.n_mc, seed});
  };
  cell.true_dsep_share = share(dag);
  cell.learned_dsep_share = share(learned);
  cell.dsep_eval = mc_dsep_eval(dag, learned, cell.target_label, spec.n_mc, seed);

  const SkipGraph skip{learned, cell.target_label};
  for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
    EstimatorConfig config = spec.estimator;
    config.seed = derive_seed(seed, {rep});
    config.threads = spec.threads;
    cell.sage.push_back(sage_estimate(split.test, cell.model, cell.gaussian, config));
    cell.dsage.push_back(dsage_estimate(split.test, cell.model, cell.gaussian, config, skip));
    cell.sage_runtime.push_back(estimate_sage_runtime(cell.sage.back(), cell.dsage.back(), spec.runtime_permutations));
    const auto rows = audit_skips(cell.sage.back(), cell.dsage.back(), rep);
    cell.audit.insert(cell.audit.end(), rows.begin(), rows.end());
  }
  return cell;
}

std::string cell_summary_json(const CellReport& cell) {
  json j;
  j["nodes"] = cell.nodes;
  j["degree"] = cell.degree;
  j["seed"] = cell.seed;
  j["target"] = cell.target_label;
  j["true_edge_count"] = cell.scm.dag.edge_count();
  j["learned_edge_count"] = cell.runtime.learn.dag.edge_count();
  j["learned_score"] = cell.runtime.learn.score;
  j["test_mse"] = cell.test_mse;
  j["true_dsep_share"] = cell.true_dsep_share;
  j["learned_dsep_share"] = cell.learned_dsep_share;
  j["dsep_eval"] = {{"tp", cell.dsep_eval.tp},   {"tn", cell.dsep_eval.tn},   {"fp", cell.dsep_eval.fp},
                    {"fn", cell.dsep_eval.fn},   {"f1", cell.dsep_eval.f1},   {"fdr", cell.dsep_eval.fdr},
                    {"n_mc", cell.dsep_eval.n_mc}, {"exact", cell.dsep_eval.exact}};
  j["query_accuracy"] = {{"graph", optional_json(cell.runtime.graph_accuracy)},
                         {"ci", optional_json(cell.runtime.ci_accuracy)}};

  json reps = json::array();
  json rep_timing = json::array();
  std::size_t skipped = 0;
  std::size_t total = 0;
  for (std::size_t r = 0; r < cell.sage.size(); ++r) {
    const auto& s = cell.sage[r];
    const auto& d = cell.dsage[r];
    skipped += d.evaluations_skipped;
    total += d.evaluations_total;
    reps.push_back({{"sage", {{"phi", vector_json(s.phi)},
                              {"n_permutations_used", s.n_permutations_used},
                              {"converged", s.converged}}},
                    {"dsage", {{"phi", vector_json(d.phi)},
                               {"n_permutations_used", d.n_permutations_used},
                               {"converged", d.converged},
                               {"evaluations_total", d.evaluations_total},
                               {"evaluations_skipped", d.evaluations_skipped},
                               {"skipped_fraction", d.skipped_fraction()}}},
                    {"max_abs_phi_difference", (s.phi - d.phi).cwiseAbs().maxCoeff()}});
    const auto& e = cell.sage_runtime[r];
    rep_timing.push_back({{"sage_wall_seconds", s.wall_seconds},
                          {"dsage_wall_seconds", d.wall_seconds},
                          {"timed_permutations", e.timed_permutations},
                          {"sage_estimated_seconds", e.sage_estimated_seconds},
                          {"dsage_estimated_seconds", e.dsage_estimated_seconds},
                          {"seconds_per_evaluation", e.seconds_per_evaluation},
                          {"accounted_saving_ratio", e.accounted_saving_ratio},
                          {"measured_saving_ratio", e.measured_saving_ratio}});
  }
  j["features"] = cell.sage.empty() ? std::vector<std::string>{} : cell.sage.front().feature_labels;
  j["repetitions"] = reps;
  j["skipped_fraction"] = total == 0 ? 0.0 : static_cast<double>(skipped) / static_cast<double>(total);
  const auto within = static_cast<std::size_t>(
      std::count_if(cell.audit.begin(), cell.audit.end(), [](const SkipAuditRow& r) { return r.within_3se; }));
  j["skip_audit"] = {{"positions", cell.audit.size()},
                     {"within_3se", within},
                     {"fraction_within_3se", cell.audit.empty() ? 1.0
                                                                : static_cast<double>(within) /
                                                                      static_cast<double>(cell.audit.size())}};
  j["timing"] = {{"learn_seconds", cell.runtime.learn_seconds},
                 {"query_seconds", cell.runtime.query_seconds},
                 {"ci_seconds", cell.runtime.ci_seconds},
                 {"dsep_eval_seconds", cell.dsep_eval.wall_seconds},
                 {"repetitions", rep_timing}};
  return j.dump(2) + "\n";
}

std::string cell_directory_name(std::size_t nodes, double degree, std::uint64_t seed) {
  return "d" + std::to_string(nodes) + "_deg" + degree_text(degree) + "_s" + std::to_string(seed);
}

void write_cell(const CellReport& cell, const std::string& dir) {
  const std::filesystem::path base(dir);
  auto put = [&](const std::string& name, const std::string& contents) {
    write_file_atomic((base / name).string(), contents);
  };
  put("scm.json", to_json_string(cell.scm));
  put("true_graph.json", to_json_string(cell.scm.dag));
  put("learned_graph.json", to_json_string(cell.runtime.learn.dag));
  put("learn_report.json", learn_report_json(cell.runtime.learn));
  put("model.json", to_json_string(cell.model));
  put("gaussian.json", to_json_string(cell.gaussian));
  put("dsep_eval.json", to_json_string(cell.dsep_eval));
  put("runtime.json", to_json_string(cell.runtime));
  put("query_decisions.csv", decisions_csv(cell.runtime, cell.scm.dag.labels()));
  for (std::size_t r = 0; r < cell.sage.size(); ++r) {
    const std::string suffix = "_rep" + std::to_string(r);
    put("sage" + suffix + ".json", to_json_string(cell.sage[r]));
    put("sage" + suffix + ".csv", to_long_csv(cell.sage[r]));
    put("dsage" + suffix + ".json", to_json_string(cell.dsage[r]));
    put("dsage" + suffix + ".csv", to_long_csv(cell.dsage[r]));
  }
  const std::vector<std::string> labels = cell.sage.empty() ? std::vector<std::string>{} : cell.sage.front().feature_labels;
  put("skipped_delta_audit.csv", audit_csv(cell.audit, labels));
  put("summary.json", cell_summary_json(cell));
}

std::vector<CellStatus> run_experiment(const ExperimentSpec& spec, const std::string& output_dir) {
  spec.validate();
  std::vector<CellStatus> cells;
  for (std::size_t d : spec.nodes) {
    for (double k : spec.degrees) {
      for (std::uint64_t s : spec.seeds) {
        CellStatus c;
        c.nodes = d;
        c.degree = k;
        c.seed = s;
        c.directory = cell_directory_name(d, k, s);
        cells.push_back(c);
      }
    }
  }

  // Cells run in parallel with single-threaded stages; a lone cell gets the
  // workers instead.
  ExperimentSpec cell_spec = spec;
  if (cells.size() > 1) cell_spec.threads = 1;
  std::vector<std::string> summaries(cells.size());
  parallel_for(cells.size(), cells.size() > 1 ? spec.threads : 1u, [&](std::size_t i) {
    auto& c = cells[i];
    try {
      const CellReport report = run_cell(cell_spec, c.nodes, c.degree, c.seed);
      write_cell(report, (std::filesystem::path(output_dir) / c.directory).string());
      summaries[i] = cell_summary_json(report);
      c.ok = true;
    } catch (const std::exception& e) {
      c.error = e.what();
    }
  });

  json top;
  top["spec"] = json::parse(to_json_string(spec));
  json list = json::array();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    json entry = {{"nodes", c.nodes}, {"degree", c.degree}, {"seed", c.seed}, {"directory", c.directory}, {"ok", c.ok}};
    entry["error"] = c.ok ? json(nullptr) : json(c.error);
    entry["summary"] = c.ok ? json::parse(summaries[i]) : json(nullptr);
    list.push_back(entry);
  }
  top["cells"] = list;
  top["cells_ok"] = std::count_if(cells.begin(), cells.end(), [](const CellStatus& c) { return c.ok; });
  top["cells_failed"] = std::count_if(cells.begin(), cells.end(), [](const CellStatus& c) { return !c.ok; });
  write_file_atomic((std::filesystem::path(output_dir) / "summary.json").string(), top.dump(2) + "\n");
  return cells;
}

}  // namespace dsage
