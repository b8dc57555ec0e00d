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
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dsage/dag.hpp"
#include "dsage/dataset.hpp"

namespace dsage {

struct ScmConfig {
  double w_min = 0.5;
  double w_max = 2.0;
  /// Smallest admissible noise variance; nodes whose parent contribution would
  /// leave less than this get their incoming weights scaled down.
  double noise_floor = 0.05;
  std::uint64_t seed = 0;
};

/// Linear-Gaussian structural equation model with unit marginal variances.
///
/// `weights(p, c)` is the coefficient of parent p in the equation of child c
/// and is zero off the edge set. `sampled_weights` keeps the draws before
/// standardization rescaled them.
struct LinearGaussianScm {
  Dag dag;
  Eigen::MatrixXd weights;
  Eigen::MatrixXd sampled_weights;
  Eigen::VectorXd noise_vars;
  Eigen::VectorXd means;
  std::vector<bool> rescaled;
  ScmConfig config;

  std::size_t node_count() const noexcept { return dag.node_count(); }
};

/// Labels "X1".."Xd".
std::vector<std::string> default_labels(std::size_t d);

/// Erdos-Renyi skeleton with p = avg_degree / (d - 1) over unordered pairs,
/// each edge oriented along a uniformly random node permutation.
Dag random_dag(std::size_t d, double avg_degree, std::uint64_t seed);

/// Uniform weights on +/-[w_min, w_max], then analytic standardization in
/// topological order so every implied marginal variance is exactly one.
LinearGaussianScm random_scm(const Dag& dag, const ScmConfig& config);

/// Exact covariance of the SEM by linear propagation in topological order.
Eigen::MatrixXd implied_covariance(const LinearGaussianScm& scm);

/// Ancestral sampling; columns follow the graph's node order.
Dataset sample(const LinearGaussianScm& scm, std::size_t n, std::uint64_t seed);

/// Uniform draw among nodes with at least one incident edge; falls back to
/// all nodes for an empty graph.
std::size_t choose_target(const Dag& dag, std::uint64_t seed);

std::string to_json_string(const LinearGaussianScm& scm);
LinearGaussianScm parse_scm_json(const std::string& text);

}  // namespace dsage
