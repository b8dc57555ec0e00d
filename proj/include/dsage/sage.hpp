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
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dsage/dag.hpp"
#include "dsage/dataset.hpp"
#include "dsage/gaussian.hpp"
#include "dsage/model.hpp"

namespace dsage {

struct EstimatorConfig {
  std::size_t n_permutations_max = 1000;
  std::size_t min_permutations = 20;
  double convergence_threshold = 0.025;
  std::size_t m_conditional_draws = 10;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  /// When false the estimator runs exactly n_permutations_max permutations.
  bool stop_on_convergence = true;

  void validate() const;
};

/// Graph whose d-separations certify zero surplus contributions. It must have
/// one node per feature (matched by label) plus `target_label`.
struct SkipGraph {
  Dag graph;
  std::string target_label;
};

/// One surplus contribution of a feature within one permutation.
struct DeltaRecord {
  std::size_t permutation = 0;
  std::size_t cond_size = 0;
  /// Test-set mean of the per-instance loss difference; 0 when skipped.
  double delta = 0.0;
  /// Standard error of that mean over instances; 0 when skipped.
  double std_error = 0.0;
  bool skipped = false;
};

struct SkipRecord {
  std::size_t permutation = 0;
  std::size_t feature = 0;
  std::vector<std::size_t> cond_set;
};

struct SageResult {
  std::vector<std::string> feature_labels;
  Eigen::VectorXd phi;
  /// delta_history[j][k]: contribution of feature j in the k-th permutation.
  std::vector<std::vector<DeltaRecord>> delta_history;
  std::vector<std::vector<std::size_t>> permutations;
  /// Evaluation plus query time spent on each permutation.
  std::vector<double> permutation_seconds;
  /// The d-separation query part of permutation_seconds.
  std::vector<double> permutation_query_seconds;
  std::vector<SkipRecord> skip_log;
  /// Largest SE / value-range ratio after each permutation.
  std::vector<double> convergence_trace;
  std::size_t n_permutations_used = 0;
  bool converged = false;
  std::size_t evaluations_total = 0;
  std::size_t evaluations_skipped = 0;
  std::size_t jitter_events = 0;
  double wall_seconds = 0.0;
  /// Summed time spent evaluating surplus contributions.
  double evaluation_seconds = 0.0;
  /// Summed time spent in d-separation queries.
  double query_seconds = 0.0;

  /// Standard error of each phi over permutations.
  Eigen::VectorXd std_errors() const;
  double skipped_fraction() const {
    return evaluations_total == 0 ? 0.0
                                  : static_cast<double>(evaluations_skipped) / static_cast<double>(evaluations_total);
  }
};

/// Per-instance surplus contributions (y - f_S)^2 - (y - f_{S+j})^2 for every
/// row of `x`, with both marginalized predictions averaged over m conditional
/// draws. Indices refer to feature columns of x and gm.
Eigen::VectorXd surplus_delta_rows(const Predictor& model, const GaussianModel<double>& gm,
                                   const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::VectorXd& y,
                                   std::size_t feature, std::span<const std::size_t> cond_set, std::size_t m,
                                   std::uint64_t seed);

/// Single-instance form of surplus_delta_rows.
double surplus_delta(const Eigen::VectorXd& x, double y, const Predictor& model, const GaussianModel<double>& gm,
                     std::size_t feature, std::span<const std::size_t> cond_set, std::size_t m,
                     std::uint64_t seed);

struct ValueEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Empirical value function: mean over rows of (y - f_empty)^2 - (y - f_S)^2.
ValueEstimate estimate_value(const Predictor& model, const GaussianModel<double>& gm,
                             const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::VectorXd& y,
                             std::span<const std::size_t> subset, std::size_t m, std::uint64_t seed);

/// Permutation-sampling SAGE on `test` (features plus designated target).
/// `gm` is the joint Gaussian of the features in test.feature_indices() order.
SageResult sage_estimate(const Dataset& test, const Predictor& model, const GaussianModel<double>& gm,
                         const EstimatorConfig& config);

/// SAGE with surplus contributions skipped whenever the feature is
/// d-separated from the target given its predecessors in `skip.graph`.
/// Consumes the same permutations and random streams as sage_estimate.
SageResult dsage_estimate(const Dataset& test, const Predictor& model, const GaussianModel<double>& gm,
                          const EstimatorConfig& config, const SkipGraph& skip);

/// Shared implementation; `skip` may be null.
SageResult estimate(const Dataset& test, const Predictor& model, const GaussianModel<double>& gm,
                    const EstimatorConfig& config, const SkipGraph* skip);

/// Population value function of a linear model when features and target are
/// jointly Gaussian: risk(empty) - risk(S), both in closed form. `joint` covers
/// the features (in model order) and the target at index `target`.
double exact_value(const GaussianModel<double>& joint, const LinearModel& model, std::size_t target,
                   std::span<const std::size_t> subset);

/// Exact SAGE values by enumerating all subsets with Shapley weights.
/// Throws kTooLarge above `max_features`.
Eigen::VectorXd exact_sage(const GaussianModel<double>& joint, const LinearModel& model, std::size_t target,
                           std::size_t max_features = 8);

/// True iff, for every feature, the standard error of its mean contribution is
/// at most t times the range of the current estimates (range floored at 1e-6).
bool check_convergence(const std::vector<std::vector<DeltaRecord>>& delta_history, double threshold);

std::string to_json_string(const SageResult& result);
/// Long format: permutation,feature,cond_size,delta,std_error,skipped.
std::string to_long_csv(const SageResult& result);

}  // namespace dsage
