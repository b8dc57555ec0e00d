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

// dsage: generate synthetic data, learn graphs, estimate (d-)SAGE values and
// run benchmark experiments.
//
//   dsage generate --nodes 10 --avg-degree 2 --n 10000 --out data/
//   dsage learn --data data/data.csv --algorithm tabu
//   dsage sage --data data/data.csv --target X3 --graph learned_graph.json
//   dsage bench --spec spec.json --output-dir results/
//   dsage ci --data data/data.csv --queries queries.csv
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid usage.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "dsage/bench.hpp"
#include "dsage/citest.hpp"
#include "dsage/csl.hpp"
#include "dsage/dag.hpp"
#include "dsage/dataset.hpp"
#include "dsage/error.hpp"
#include "dsage/gaussian.hpp"
#include "dsage/io.hpp"
#include "dsage/model.hpp"
#include "dsage/random.hpp"
#include "dsage/sage.hpp"
#include "dsage/scm.hpp"

namespace {

using dsage::Error;
using dsage::ErrorKind;
namespace fs = std::filesystem;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Globals {
  std::uint64_t seed = 0;
  std::string output_dir = ".";
  std::string format = "json";
  unsigned threads = 0;
  std::string log_level = "warn";
};

struct GenerateArgs {
  std::size_t nodes = 10;
  double avg_degree = 2.0;
  std::size_t n = 10000;
  std::string out;
};

struct LearnArgs {
  std::string data;
  std::string algorithm = "tabu";
  std::size_t tabu_list_size = 10;
  std::size_t max_nonimproving = 100;
  std::optional<std::size_t> max_in_degree;
  std::string out;
};

struct SageArgs {
  std::string data;
  std::string target;
  std::string graph;
  std::size_t reps = 5;
  std::size_t m = 10;
  double t = 0.025;
  std::size_t max_perms = 1000;
  std::size_t min_perms = 20;
  std::optional<std::size_t> train_rows;
};

struct BenchArgs {
  std::string spec;
};

struct CiArgs {
  std::string data;
  std::string queries;
  double alpha = 0.05;
  std::string out;
};

std::string in_output_dir(const Globals& g, const std::string& name) { return (fs::path(g.output_dir) / name).string(); }

void set_log_level(const std::string& level) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("dsage"));
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::from_str(level));
}

void emit(const std::string& path, const std::string& contents) {
  dsage::write_file_atomic(path, contents);
  spdlog::info("wrote {}", path);
}

int cmd_generate(const Globals& g, const GenerateArgs& a) {
  const std::string dir = a.out.empty() ? g.output_dir : a.out;
  const dsage::Dag dag = dsage::random_dag(a.nodes, a.avg_degree, g.seed);
  dsage::ScmConfig config;
  config.seed = g.seed;
  const auto scm = dsage::random_scm(dag, config);
  auto data = dsage::sample(scm, a.n, g.seed);
  const std::size_t target = dsage::choose_target(dag, g.seed);

  const fs::path base(dir);
  dsage::save_csv(data, (base / "data.csv").string());
  emit((base / "scm.json").string(), dsage::to_json_string(scm));
  if (g.format == "csv") {
    emit((base / "true_graph.txt").string(), dsage::to_edge_list(dag));
  } else {
    emit((base / "true_graph.json").string(), dsage::to_json_string(dag));
  }
  data.target_label = dag.labels()[target];
  nlohmann::json meta = {{"nodes", a.nodes},
                         {"avg_degree", a.avg_degree},
                         {"n", a.n},
                         {"seed", g.seed},
                         {"target", data.target_label},
                         {"edge_count", dag.edge_count()},
                         {"dataset_hash", dsage::dataset_hash(data)}};
  emit((base / "generate.json").string(), meta.dump(2) + "\n");
  std::cout << data.target_label << "\n";
  return 0;
}

int cmd_learn(const Globals& g, const LearnArgs& a) {
  const dsage::Dataset data = dsage::load_csv(a.data);
  dsage::SearchConfig config;
  config.algorithm = dsage::parse_search_algorithm(a.algorithm);
  config.tabu_list_size = a.tabu_list_size;
  config.max_nonimproving = a.max_nonimproving;
  if (a.max_in_degree) config.max_in_degree = *a.max_in_degree;
  config.seed = g.seed;
  config.threads = g.threads;
  const auto result = dsage::learn_structure(data, config);

  std::string out = a.out;
  if (out.empty()) out = in_output_dir(g, g.format == "csv" ? "learned_graph.txt" : "learned_graph.json");
  dsage::write_file_atomic(out, out.ends_with(".json") ? dsage::to_json_string(result.dag)
                                                       : dsage::to_edge_list(result.dag));
  emit(in_output_dir(g, "learn_report.json"), dsage::learn_report_json(result));
  spdlog::info("learned {} edges, score {}", result.dag.edge_count(), result.score);
  return 0;
}

int cmd_sage(const Globals& g, const SageArgs& a) {
  dsage::Dataset data = dsage::load_csv(a.data);
  data.column_index(a.target);
  data.target_label = a.target;
  const std::size_t train_rows = a.train_rows.value_or(data.row_count() * 4 / 5);
  const auto split = dsage::split_train_test(data, train_rows);
  const auto model = dsage::fit_ols(split.train);
  const auto gm = dsage::fit_gaussian(split.train.features(), split.train.feature_labels());

  std::optional<dsage::SkipGraph> skip;
  if (!a.graph.empty()) skip = dsage::SkipGraph{dsage::load_dag(a.graph), a.target};

  dsage::EstimatorConfig config;
  config.n_permutations_max = a.max_perms;
  config.min_permutations = std::min(a.min_perms, a.max_perms);
  config.convergence_threshold = a.t;
  config.m_conditional_draws = a.m;
  config.threads = g.threads;
  config.validate();

  const std::string stem = skip ? "dsage" : "sage";
  nlohmann::json summary;
  summary["target"] = a.target;
  summary["features"] = split.test.feature_labels();
  summary["train_rows"] = train_rows;
  summary["model"] = nlohmann::json::parse(dsage::to_json_string(model));
  summary["graph"] = a.graph.empty() ? nlohmann::json(nullptr) : nlohmann::json(a.graph);
  nlohmann::json reps = nlohmann::json::array();
  Eigen::VectorXd mean_phi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.feature_count()));
  for (std::size_t r = 0; r < a.reps; ++r) {
    config.seed = dsage::derive_seed(g.seed, {r});
    const auto result = dsage::estimate(split.test, model, gm, config, skip ? &*skip : nullptr);
    const std::string name = stem + "_rep" + std::to_string(r);
    if (g.format == "csv") {
      emit(in_output_dir(g, name + ".csv"), dsage::to_long_csv(result));
    } else {
      emit(in_output_dir(g, name + ".json"), dsage::to_json_string(result));
      emit(in_output_dir(g, name + ".csv"), dsage::to_long_csv(result));
    }
    mean_phi += result.phi;
    reps.push_back({{"seed", config.seed},
                    {"phi", std::vector<double>(result.phi.data(), result.phi.data() + result.phi.size())},
                    {"n_permutations_used", result.n_permutations_used},
                    {"converged", result.converged},
                    {"skipped_fraction", result.skipped_fraction()}});
    spdlog::info("repetition {}: {} permutations, converged={}", r, result.n_permutations_used, result.converged);
  }
  if (a.reps > 0) mean_phi /= static_cast<double>(a.reps);
  summary["repetitions"] = reps;
  summary["mean_phi"] = std::vector<double>(mean_phi.data(), mean_phi.data() + mean_phi.size());
  emit(in_output_dir(g, stem + "_summary.json"), summary.dump(2) + "\n");
  return 0;
}

int cmd_bench(const Globals& g, const BenchArgs& a) {
  auto spec = dsage::load_experiment_spec(a.spec);
  if (g.threads != 0) spec.threads = g.threads;
  const auto cells = dsage::run_experiment(spec, g.output_dir);
  int failed = 0;
  for (const auto& c : cells) {
    if (!c.ok) {
      ++failed;
      spdlog::error("cell {} failed: {}", c.directory, c.error);
    }
  }
  std::cout << in_output_dir(g, "summary.json") << "\n";
  return failed == 0 ? 0 : kExitRuntime;
}

int cmd_ci(const Globals& g, const CiArgs& a) {
  const dsage::Dataset data = dsage::load_csv(a.data);
  const std::string out = dsage::run_ci_batch(data, dsage::read_file(a.queries), a.alpha);
  emit(a.out.empty() ? in_output_dir(g, "ci_results.csv") : a.out, out);
  return 0;
}

bool is_usage_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kInvalidDegree:
    case ErrorKind::kParse:
    case ErrorKind::kLabelMismatch:
    case ErrorKind::kGraphMismatch:
    case ErrorKind::kIndexOutOfRange:
      return true;
    default:
      return false;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"d-SAGE: conditional SAGE feature importance accelerated by learned d-separations"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "INI/TOML file with option defaults; flags override it");

  Globals g;
  if (const char* env = std::getenv("DSAGE_LOG_LEVEL")) g.log_level = env;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--output-dir", g.output_dir, "Directory for output files")->capture_default_str();
  app.add_option("--format", g.format, "Report format")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads, 0 = all cores")->capture_default_str();
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off (env DSAGE_LOG_LEVEL)")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}))
      ->capture_default_str();

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Random DAG, standardized linear-Gaussian SEM and a sample");
  generate->add_option("--nodes", gen.nodes, "Node count")->check(CLI::Range(2, 100000))->capture_default_str();
  generate->add_option("--avg-degree", gen.avg_degree, "Expected average degree")->capture_default_str();
  generate->add_option("--n", gen.n, "Sample size")->check(CLI::PositiveNumber)->capture_default_str();
  generate->add_option("--out", gen.out, "Output directory (default --output-dir)");

  LearnArgs learn;
  auto* learn_cmd = app.add_subcommand("learn", "BIC structure learning by hill climbing or tabu search");
  learn_cmd->add_option("--data", learn.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  learn_cmd->add_option("--algorithm", learn.algorithm, "Search algorithm")
      ->check(CLI::IsMember({"hc", "tabu"}))
      ->capture_default_str();
  learn_cmd->add_option("--tabu-list-size", learn.tabu_list_size, "Tabu list length")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  learn_cmd->add_option("--max-nonimproving", learn.max_nonimproving, "Tabu escape budget")->capture_default_str();
  learn_cmd->add_option("--max-in-degree", learn.max_in_degree, "Parent cap (default none)");
  learn_cmd->add_option("--out", learn.out, "Graph file; .json selects JSON, anything else the edge list");

  SageArgs sage;
  auto* sage_cmd = app.add_subcommand("sage", "SAGE values, or d-SAGE values when --graph is given");
  sage_cmd->add_option("--data", sage.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  sage_cmd->add_option("--target", sage.target, "Target column label")->required();
  sage_cmd->add_option("--graph", sage.graph, "Graph over features and target (JSON or edge list)")
      ->check(CLI::ExistingFile);
  sage_cmd->add_option("--reps", sage.reps, "Repetitions with derived seeds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sage_cmd->add_option("--m", sage.m, "Conditional draws per prediction")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sage_cmd->add_option("--t", sage.t, "Convergence threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  sage_cmd->add_option("--max-perms", sage.max_perms, "Permutation cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sage_cmd->add_option("--min-perms", sage.min_perms, "Permutations before convergence is checked")
      ->capture_default_str();
  sage_cmd->add_option("--train-rows", sage.train_rows, "Leading rows used for fitting (default 80%)");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Run an experiment spec (JSON) into --output-dir");
  bench_cmd->add_option("--spec", bench.spec, "Experiment spec")->required()->check(CLI::ExistingFile);

  CiArgs ci;
  auto* ci_cmd = app.add_subcommand("ci", "Batch Fisher-z partial-correlation tests");
  ci_cmd->add_option("--data", ci.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  ci_cmd->add_option("--queries", ci.queries, "Rows i,j,s1,s2,... of column labels")
      ->required()
      ->check(CLI::ExistingFile);
  ci_cmd->add_option("--alpha", ci.alpha, "Test level")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  ci_cmd->add_option("--out", ci.out, "Output CSV (default <output-dir>/ci_results.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    set_log_level(g.log_level);
    if (*generate) return cmd_generate(g, gen);
    if (*learn_cmd) return cmd_learn(g, learn);
    if (*sage_cmd) return cmd_sage(g, sage);
    if (*bench_cmd) return cmd_bench(g, bench);
    if (*ci_cmd) return cmd_ci(g, ci);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_usage_error(e.kind()) ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
