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

#include "dsage/scm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "dsage/error.hpp"
#include "dsage/random.hpp"

namespace dsage {

std::vector<std::string> default_labels(std::size_t d) {
  std::vector<std::string> labels;
  labels.reserve(d);
  for (std::size_t i = 0; i < d; ++i) labels.push_back("X" + std::to_string(i + 1));
  return labels;
}

Dag random_dag(std::size_t d, double avg_degree, std::uint64_t seed) {
  if (d < 2) throw Error(ErrorKind::kInvalidDegree, "random graphs need at least two nodes");
  if (!(avg_degree >= 0.0) || avg_degree > static_cast<double>(d - 1)) {
    throw Error(ErrorKind::kInvalidDegree, "average degree must lie in [0, d - 1]");
  }
  Rng rng = make_rng(seed, {0});
  std::vector<std::size_t> rank(d);
  std::iota(rank.begin(), rank.end(), 0);
  std::shuffle(rank.begin(), rank.end(), rng);

  const double p = avg_degree / static_cast<double>(d - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      if (unif(rng) >= p) continue;
      edges.push_back(rank[i] < rank[j] ? Edge{i, j} : Edge{j, i});
    }
  }
  return Dag(default_labels(d), std::move(edges));
}

LinearGaussianScm random_scm(const Dag& dag, const ScmConfig& config) {
  if (!(config.w_min > 0.0) || !(config.w_min < config.w_max)) {
    throw Error(ErrorKind::kInvalidArgument, "weights need 0 < w_min < w_max");
  }
  if (!(config.noise_floor > 0.0) || !(config.noise_floor < 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "noise floor must lie in (0, 1)");
  }
  const auto d = static_cast<Eigen::Index>(dag.node_count());
  LinearGaussianScm scm;
  scm.dag = dag;
  scm.config = config;
  scm.weights = Eigen::MatrixXd::Zero(d, d);
  scm.noise_vars = Eigen::VectorXd::Ones(d);
  scm.means = Eigen::VectorXd::Zero(d);
  scm.rescaled.assign(dag.node_count(), false);

  Rng rng = make_rng(config.seed, {1});
  std::uniform_real_distribution<double> magnitude(config.w_min, config.w_max);
  std::bernoulli_distribution negative(0.5);
  for (const auto& [u, v] : dag.edges()) {
    const double w = magnitude(rng);
    scm.weights(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) = negative(rng) ? -w : w;
  }
  scm.sampled_weights = scm.weights;

  // Covariance of already standardized nodes, filled in topological order.
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  const double max_contribution = 1.0 - config.noise_floor;
  for (std::size_t node : topological_order(dag)) {
    const auto j = static_cast<Eigen::Index>(node);
    const auto parents = dag.parents(node);
    double contribution = 0.0;
    for (std::size_t a : parents) {
      for (std::size_t b : parents) {
        contribution += scm.weights(static_cast<Eigen::Index>(a), j) *
                        scm.weights(static_cast<Eigen::Index>(b), j) *
                        cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      }
    }
    if (contribution >= max_contribution) {
      const double scale = std::sqrt(max_contribution / contribution);
      for (std::size_t a : parents) scm.weights(static_cast<Eigen::Index>(a), j) *= scale;
      scm.noise_vars(j) = config.noise_floor;
      scm.rescaled[node] = true;
    } else {
      scm.noise_vars(j) = 1.0 - contribution;
    }
    // Cross terms against every node handled so far; untouched rows are zero.
    for (Eigen::Index k = 0; k < d; ++k) {
      if (k == j) continue;
      double c = 0.0;
      for (std::size_t a : parents) c += scm.weights(static_cast<Eigen::Index>(a), j) * cov(static_cast<Eigen::Index>(a), k);
      cov(j, k) = cov(k, j) = c;
    }
    cov(j, j) = 1.0;
  }
  return scm;
}

Eigen::MatrixXd implied_covariance(const LinearGaussianScm& scm) {
  const auto d = static_cast<Eigen::Index>(scm.node_count());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  std::vector<char> done(scm.node_count(), 0);
  for (std::size_t node : topological_order(scm.dag)) {
    const auto j = static_cast<Eigen::Index>(node);
    const auto parents = scm.dag.parents(node);
    for (Eigen::Index k = 0; k < d; ++k) {
      if (!done[static_cast<std::size_t>(k)]) continue;
      double c = 0.0;
      for (std::size_t a : parents) c += scm.weights(static_cast<Eigen::Index>(a), j) * cov(static_cast<Eigen::Index>(a), k);
      cov(j, k) = cov(k, j) = c;
    }
    double var = scm.noise_vars(j);
    for (std::size_t a : parents) {
      for (std::size_t b : parents) {
        var += scm.weights(static_cast<Eigen::Index>(a), j) * scm.weights(static_cast<Eigen::Index>(b), j) *
               cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      }
    }
    cov(j, j) = var;
    done[node] = 1;
  }
  return cov;
}

Dataset sample(const LinearGaussianScm& scm, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorKind::kInvalidArgument, "sample size must be positive");
  const auto d = static_cast<Eigen::Index>(scm.node_count());
  const auto rows = static_cast<Eigen::Index>(n);
  Rng rng = make_rng(seed, {2});
  NormalDistribution<> normal;
  Eigen::MatrixXd x(rows, d);
  for (std::size_t node : topological_order(scm.dag)) {
    const auto j = static_cast<Eigen::Index>(node);
    const double sd = std::sqrt(scm.noise_vars(j));
    auto col = x.col(j);
    for (Eigen::Index r = 0; r < rows; ++r) col(r) = scm.means(j) + sd * normal(rng);
    for (std::size_t a : scm.dag.parents(node)) {
      col += scm.weights(static_cast<Eigen::Index>(a), j) * x.col(static_cast<Eigen::Index>(a));
    }
  }
  return Dataset{scm.dag.labels(), std::move(x), {}};
}

std::size_t choose_target(const Dag& dag, std::uint64_t seed) {
  std::vector<std::size_t> candidates;
  for (std::size_t v = 0; v < dag.node_count(); ++v) {
    if (dag.degree(v) > 0) candidates.push_back(v);
  }
  if (candidates.empty()) {
    candidates.resize(dag.node_count());
    std::iota(candidates.begin(), candidates.end(), 0);
  }
  if (candidates.empty()) throw Error(ErrorKind::kInvalidGraph, "graph has no nodes");
  Rng rng = make_rng(seed, {3});
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  return candidates[pick(rng)];
}

std::string to_json_string(const LinearGaussianScm& scm) {
  nlohmann::json j;
  j["nodes"] = scm.dag.labels();
  j["edges"] = nlohmann::json::array();
  for (const auto& [u, v] : scm.dag.edges()) {
    const auto a = static_cast<Eigen::Index>(u);
    const auto b = static_cast<Eigen::Index>(v);
    j["edges"].push_back({{"parent", scm.dag.labels()[u]},
                          {"child", scm.dag.labels()[v]},
                          {"weight", scm.weights(a, b)},
                          {"sampled_weight", scm.sampled_weights(a, b)}});
  }
  j["noise_vars"] = std::vector<double>(scm.noise_vars.data(), scm.noise_vars.data() + scm.noise_vars.size());
  j["means"] = std::vector<double>(scm.means.data(), scm.means.data() + scm.means.size());
  j["rescaled"] = scm.rescaled;
  j["config"] = {{"w_min", scm.config.w_min},
                 {"w_max", scm.config.w_max},
                 {"noise_floor", scm.config.noise_floor},
                 {"seed", scm.config.seed}};
  return j.dump(2) + "\n";
}

LinearGaussianScm parse_scm_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    auto labels = j.at("nodes").get<std::vector<std::string>>();
    std::vector<std::pair<std::string, std::string>> named;
    for (const auto& e : j.at("edges")) {
      named.emplace_back(e.at("parent").get<std::string>(), e.at("child").get<std::string>());
    }
    LinearGaussianScm scm;
    scm.dag = Dag::from_labels(labels, named);
    const auto d = static_cast<Eigen::Index>(scm.dag.node_count());
    scm.weights = Eigen::MatrixXd::Zero(d, d);
    scm.sampled_weights = Eigen::MatrixXd::Zero(d, d);
    for (const auto& e : j.at("edges")) {
      const auto u = static_cast<Eigen::Index>(scm.dag.index_of(e.at("parent").get<std::string>()));
      const auto v = static_cast<Eigen::Index>(scm.dag.index_of(e.at("child").get<std::string>()));
      scm.weights(u, v) = e.at("weight").get<double>();
      scm.sampled_weights(u, v) = e.value("sampled_weight", scm.weights(u, v));
    }
    const auto noise = j.at("noise_vars").get<std::vector<double>>();
    const auto means = j.value("means", std::vector<double>(static_cast<std::size_t>(d), 0.0));
    if (noise.size() != static_cast<std::size_t>(d) || means.size() != static_cast<std::size_t>(d)) {
      throw Error(ErrorKind::kLengthMismatch, "per-node arrays do not match the node count");
    }
    scm.noise_vars = Eigen::Map<const Eigen::VectorXd>(noise.data(), d);
    scm.means = Eigen::Map<const Eigen::VectorXd>(means.data(), d);
    if ((scm.noise_vars.array() <= 0.0).any()) {
      throw Error(ErrorKind::kInvalidArgument, "noise variances must be positive");
    }
    scm.rescaled = j.value("rescaled", std::vector<bool>(static_cast<std::size_t>(d), false));
    if (j.contains("config")) {
      const auto& c = j["config"];
      scm.config.w_min = c.value("w_min", scm.config.w_min);
      scm.config.w_max = c.value("w_max", scm.config.w_max);
      scm.config.noise_floor = c.value("noise_floor", scm.config.noise_floor);
      scm.config.seed = c.value("seed", scm.config.seed);
    }
    return scm;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, e.what());
  }
}

}  // namespace dsage
