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

#include "dsage/sage.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "dsage/error.hpp"
#include "dsage/io.hpp"
#include "dsage/parallel.hpp"

namespace dsage {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Stream ids below the permutation index space.
constexpr std::uint64_t kPermutationStream = 0xffff'ffff'0000'0001ULL;
constexpr std::uint64_t kValueStream = 0xffff'ffff'0000'0002ULL;

Eigen::VectorXd marginal_predictions(const Predictor& model, const GaussianModel<double>& gm,
                                     const Eigen::Ref<const Eigen::MatrixXd>& x, std::span<const std::size_t> subset,
                                     std::size_t m, Rng& rng, std::size_t* jitter_events) {
  if (subset.size() == model.feature_count()) return model.predict_batch(x);
  const auto cg = condition(gm, subset);
  if (jitter_events && cg.jitter > 0.0) ++*jitter_events;
  return marginalized_predict_rows(model, cg, x, m, rng);
}

Eigen::VectorXd delta_rows(const Predictor& model, const GaussianModel<double>& gm,
                           const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::VectorXd& y, std::size_t feature,
                           std::span<const std::size_t> cond_set, std::size_t m, std::uint64_t seed,
                           std::size_t* jitter_events) {
  const std::size_t d = model.feature_count();
  if (gm.dim() != d || static_cast<std::size_t>(x.cols()) != d) {
    throw Error(ErrorKind::kLengthMismatch, "model, Gaussian and data disagree on the feature count");
  }
  if (y.size() != x.rows()) throw Error(ErrorKind::kLengthMismatch, "targets and rows differ in length");
  if (feature >= d) throw Error(ErrorKind::kIndexOutOfRange, "feature out of range");
  if (std::find(cond_set.begin(), cond_set.end(), feature) != cond_set.end()) {
    throw Error(ErrorKind::kInvalidArgument, "feature must not be in its conditioning set");
  }
  std::vector<std::size_t> with_feature(cond_set.begin(), cond_set.end());
  with_feature.push_back(feature);

  Rng rng_without = make_rng(seed, {0});
  Rng rng_with = make_rng(seed, {1});
  const Eigen::VectorXd without = marginal_predictions(model, gm, x, cond_set, m, rng_without, jitter_events);
  const Eigen::VectorXd with = marginal_predictions(model, gm, x, with_feature, m, rng_with, jitter_events);
  return (y - without).array().square() - (y - with).array().square();
}

struct MeanAndError {
  double mean = 0.0;
  double std_error = 0.0;
};

MeanAndError mean_and_error(const Eigen::VectorXd& v) {
  MeanAndError out;
  const auto n = static_cast<double>(v.size());
  out.mean = v.mean();
  if (v.size() > 1) {
    const double var = (v.array() - out.mean).square().sum() / (n - 1.0);
    out.std_error = std::sqrt(var / n);
  }
  return out;
}

// Largest SE-to-range ratio over features; infinity with fewer than two
// permutations.
double convergence_ratio(const std::vector<std::vector<DeltaRecord>>& history) {
  if (history.empty()) return 0.0;
  const std::size_t n = history.front().size();
  if (n < 2) return std::numeric_limits<double>::infinity();
  std::vector<double> means;
  std::vector<double> errors;
  for (const auto& records : history) {
    if (records.size() != n) throw Error(ErrorKind::kLengthMismatch, "ragged delta history");
    double sum = 0.0;
    for (const auto& r : records) sum += r.delta;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& r : records) ss += (r.delta - mean) * (r.delta - mean);
    means.push_back(mean);
    errors.push_back(std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)));
  }
  const auto [lo, hi] = std::minmax_element(means.begin(), means.end());
  const double range = std::max(*hi - *lo, 1e-6);
  return *std::max_element(errors.begin(), errors.end()) / range;
}

struct PermutationOutcome {
  std::vector<std::size_t> order;
  std::vector<DeltaRecord> by_feature;
  std::vector<SkipRecord> skips;
  double evaluation_seconds = 0.0;
  double query_seconds = 0.0;
  std::size_t jitter_events = 0;
};

struct SkipMapping {
  const Dag* graph = nullptr;
  std::size_t target_node = 0;
  std::vector<std::size_t> feature_node;
};

SkipMapping map_skip_graph(const SkipGraph& skip, const std::vector<std::string>& features) {
  SkipMapping mapping;
  mapping.graph = &skip.graph;
  if (skip.graph.node_count() != features.size() + 1) {
    throw Error(ErrorKind::kGraphMismatch, "graph must have one node per feature plus the target");
  }
  const auto target = skip.graph.find(skip.target_label);
  if (!target) throw Error(ErrorKind::kGraphMismatch, "graph has no target node '" + skip.target_label + "'");
  mapping.target_node = *target;
  for (const auto& label : features) {
    const auto node = skip.graph.find(label);
    if (!node || *node == *target) throw Error(ErrorKind::kGraphMismatch, "graph has no node for feature '" + label + "'");
    mapping.feature_node.push_back(*node);
  }
  return mapping;
}

}  // namespace

void EstimatorConfig::validate() const {
  if (!(convergence_threshold > 0.0 && convergence_threshold < 1.0) && stop_on_convergence) {
    throw Error(ErrorKind::kInvalidArgument, "convergence threshold must lie in (0, 1)");
  }
  if (n_permutations_max == 0) throw Error(ErrorKind::kInvalidArgument, "need at least one permutation");
  if (min_permutations > n_permutations_max) {
    throw Error(ErrorKind::kInvalidArgument, "min_permutations exceeds n_permutations_max");
  }
  if (m_conditional_draws == 0) throw Error(ErrorKind::kInvalidArgument, "need at least one conditional draw");
}

Eigen::VectorXd SageResult::std_errors() const {
  Eigen::VectorXd se = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(delta_history.size()));
  for (std::size_t j = 0; j < delta_history.size(); ++j) {
    const auto& records = delta_history[j];
    if (records.size() < 2) continue;
    Eigen::VectorXd v(static_cast<Eigen::Index>(records.size()));
    for (std::size_t k = 0; k < records.size(); ++k) v(static_cast<Eigen::Index>(k)) = records[k].delta;
    se(static_cast<Eigen::Index>(j)) = mean_and_error(v).std_error;
  }
  return se;
}

Eigen::VectorXd surplus_delta_rows(const Predictor& model, const GaussianModel<double>& gm,
                                   const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::VectorXd& y,
                                   std::size_t feature, std::span<const std::size_t> cond_set, std::size_t m,
                                   std::uint64_t seed) {
  return delta_rows(model, gm, x, y, feature, cond_set, m, seed, nullptr);
}

double surplus_delta(const Eigen::VectorXd& x, double y, const Predictor& model, const GaussianModel<double>& gm,
                     std::size_t feature, std::span<const std::size_t> cond_set, std::size_t m,
                     std::uint64_t seed) {
  Eigen::VectorXd target(1);
  target(0) = y;
  return delta_rows(model, gm, x.transpose(), target, feature, cond_set, m, seed, nullptr)(0);
}

ValueEstimate estimate_value(const Predictor& model, const GaussianModel<double>& gm,
                             const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::VectorXd& y,
                             std::span<const std::size_t> subset, std::size_t m, std::uint64_t seed) {
  Rng rng_empty = make_rng(seed, {kValueStream, 0});
  Rng rng_subset = make_rng(seed, {kValueStream, 1});
  const Eigen::VectorXd base = marginal_predictions(model, gm, x, {}, m, rng_empty, nullptr);
  const Eigen::VectorXd pred = marginal_predictions(model, gm, x, subset, m, rng_subset, nullptr);
  const Eigen::VectorXd per_row = (y - base).array().square() - (y - pred).array().square();
  const auto stats = mean_and_error(per_row);
  return {stats.mean, stats.std_error};
}

SageResult estimate(const Dataset& test, const Predictor& model, const GaussianModel<double>& gm,
                    const EstimatorConfig& config, const SkipGraph* skip) {
  config.validate();
  const auto start = Clock::now();
  const Eigen::MatrixXd x = test.features();
  const Eigen::VectorXd y = test.target();
  const std::size_t d = static_cast<std::size_t>(x.cols());
  if (d == 0) throw Error(ErrorKind::kInvalidArgument, "no features");
  if (model.feature_count() != d || gm.dim() != d) {
    throw Error(ErrorKind::kLengthMismatch, "model, Gaussian and data disagree on the feature count");
  }

  SageResult result;
  result.feature_labels = test.feature_labels();
  std::optional<SkipMapping> mapping;
  if (skip) mapping = map_skip_graph(*skip, result.feature_labels);
  result.delta_history.assign(d, {});

  auto run_permutation = [&](std::size_t perm) {
    PermutationOutcome out;
    out.order.resize(d);
    std::iota(out.order.begin(), out.order.end(), 0);
    Rng perm_rng = make_rng(config.seed, {kPermutationStream, perm});
    std::shuffle(out.order.begin(), out.order.end(), perm_rng);
    out.by_feature.resize(d);

    std::vector<std::size_t> prefix;
    std::vector<std::size_t> prefix_nodes;
    for (std::size_t pos = 0; pos < d; ++pos) {
      const std::size_t j = out.order[pos];
      DeltaRecord& record = out.by_feature[j];
      record.permutation = perm;
      record.cond_size = prefix.size();
      bool separated = false;
      if (mapping) {
        const auto q_start = Clock::now();
        separated = d_separated(*mapping->graph, mapping->feature_node[j], mapping->target_node, prefix_nodes);
        out.query_seconds += seconds_since(q_start);
      }
      if (separated) {
        record.skipped = true;
        std::vector<std::size_t> cond(prefix);
        std::sort(cond.begin(), cond.end());
        out.skips.push_back({perm, j, std::move(cond)});
      } else {
        const auto e_start = Clock::now();
        const Eigen::VectorXd rows = delta_rows(model, gm, x, y, j, prefix, config.m_conditional_draws,
                                                derive_seed(config.seed, {perm, pos}), &out.jitter_events);
        const auto stats = mean_and_error(rows);
        record.delta = stats.mean;
        record.std_error = stats.std_error;
        out.evaluation_seconds += seconds_since(e_start);
      }
      prefix.push_back(j);
      if (mapping) prefix_nodes.push_back(mapping->feature_node[j]);
    }
    return out;
  };

  const std::size_t batch = std::max<std::size_t>(1, resolve_threads(config.threads));
  std::vector<PermutationOutcome> outcomes;
  std::size_t next = 0;
  bool done = false;
  while (!done && next < config.n_permutations_max) {
    const std::size_t count = std::min(batch, config.n_permutations_max - next);
    outcomes.assign(count, {});
    parallel_for(count, config.threads, [&](std::size_t i) { outcomes[i] = run_permutation(next + i); });
    // Outcomes are merged in permutation order and anything past the stopping
    // point is dropped, so the result does not depend on the batch size.
    for (auto& out : outcomes) {
      for (std::size_t j = 0; j < d; ++j) result.delta_history[j].push_back(out.by_feature[j]);
      result.permutations.push_back(std::move(out.order));
      result.permutation_seconds.push_back(out.evaluation_seconds + out.query_seconds);
      result.permutation_query_seconds.push_back(out.query_seconds);
      for (auto& s : out.skips) result.skip_log.push_back(std::move(s));
      result.evaluation_seconds += out.evaluation_seconds;
      result.query_seconds += out.query_seconds;
      result.jitter_events += out.jitter_events;
      ++result.n_permutations_used;

      const double ratio = convergence_ratio(result.delta_history);
      result.convergence_trace.push_back(ratio);
      result.converged =
          result.n_permutations_used >= config.min_permutations && ratio <= config.convergence_threshold;
      if (result.converged && config.stop_on_convergence) {
        done = true;
        break;
      }
    }
    next += count;
  }

  result.phi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j) {
    double sum = 0.0;
    for (const auto& r : result.delta_history[j]) sum += r.delta;
    result.phi(static_cast<Eigen::Index>(j)) = sum / static_cast<double>(result.n_permutations_used);
  }
  result.evaluations_total = result.n_permutations_used * d;
  result.evaluations_skipped = result.skip_log.size();
  result.wall_seconds = seconds_since(start);
  return result;
}

SageResult sage_estimate(const Dataset& test, const Predictor& model, const GaussianModel<double>& gm,
                         const EstimatorConfig& config) {
  return estimate(test, model, gm, config, nullptr);
}

SageResult dsage_estimate(const Dataset& test, const Predictor& model, const GaussianModel<double>& gm,
                          const EstimatorConfig& config, const SkipGraph& skip) {
  return estimate(test, model, gm, config, &skip);
}

double exact_value(const GaussianModel<double>& joint, const LinearModel& model, std::size_t target,
                   std::span<const std::size_t> subset) {
  const std::size_t total = joint.dim();
  if (target >= total) throw Error(ErrorKind::kIndexOutOfRange, "target out of range");
  if (model.feature_count() + 1 != total) {
    throw Error(ErrorKind::kLengthMismatch, "joint Gaussian must cover the model features plus the target");
  }
  std::vector<std::size_t> features;
  for (std::size_t i = 0; i < total; ++i) {
    if (i != target) features.push_back(i);
  }
  const auto p = static_cast<Eigen::Index>(features.size());
  const GaussianModel<double> fx = marginal(joint, features);
  const Eigen::VectorXd& beta = model.coefficients();
  Eigen::VectorXd cov_xy(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    cov_xy(k) = joint.cov(static_cast<Eigen::Index>(features[static_cast<std::size_t>(k)]), static_cast<Eigen::Index>(target));
  }
  const auto t = static_cast<Eigen::Index>(target);
  const double var_y = joint.cov(t, t);
  const double bias = joint.mean(t) - model.intercept() - beta.dot(fx.mean);

  // f_S(x_S) = const + a^T x_S with a = beta_S + gain^T beta_free.
  auto risk = [&](std::span<const std::size_t> s) {
    if (s.empty()) return var_y + bias * bias;
    Eigen::VectorXd a(static_cast<Eigen::Index>(s.size()));
    for (std::size_t k = 0; k < s.size(); ++k) a(static_cast<Eigen::Index>(k)) = beta(static_cast<Eigen::Index>(s[k]));
    if (s.size() < features.size()) {
      const auto cg = condition(fx, s);
      Eigen::VectorXd beta_free(static_cast<Eigen::Index>(cg.free_count()));
      for (std::size_t k = 0; k < cg.free_count(); ++k) {
        beta_free(static_cast<Eigen::Index>(k)) = beta(static_cast<Eigen::Index>(cg.free_indices[k]));
      }
      a += cg.gain.transpose() * beta_free;
    }
    Eigen::MatrixXd cov_ss(a.size(), a.size());
    Eigen::VectorXd cov_sy(a.size());
    for (Eigen::Index u = 0; u < a.size(); ++u) {
      cov_sy(u) = cov_xy(static_cast<Eigen::Index>(s[static_cast<std::size_t>(u)]));
      for (Eigen::Index v = 0; v < a.size(); ++v) {
        cov_ss(u, v) = fx.cov(static_cast<Eigen::Index>(s[static_cast<std::size_t>(u)]),
                              static_cast<Eigen::Index>(s[static_cast<std::size_t>(v)]));
      }
    }
    return var_y - 2.0 * a.dot(cov_sy) + a.dot(cov_ss * a) + bias * bias;
  };
  for (std::size_t s : subset) {
    if (s >= features.size()) throw Error(ErrorKind::kIndexOutOfRange, "feature out of range");
  }
  return risk({}) - risk(subset);
}

Eigen::VectorXd exact_sage(const GaussianModel<double>& joint, const LinearModel& model, std::size_t target,
                           std::size_t max_features) {
  const std::size_t p = model.feature_count();
  if (p > max_features || p > 20) {
    throw Error(ErrorKind::kTooLarge, std::to_string(p) + " features exceed the enumeration cap");
  }
  const std::size_t subsets = std::size_t{1} << p;
  std::vector<double> value(subsets);
  std::vector<std::size_t> members;
  for (std::size_t mask = 0; mask < subsets; ++mask) {
    members.clear();
    for (std::size_t k = 0; k < p; ++k) {
      if (mask >> k & 1u) members.push_back(k);
    }
    value[mask] = exact_value(joint, model, target, members);
  }
  // Shapley weight |S|! (p - |S| - 1)! / p!.
  std::vector<double> weight(p);
  for (std::size_t s = 0; s < p; ++s) {
    weight[s] = std::exp(std::lgamma(static_cast<double>(s) + 1.0) + std::lgamma(static_cast<double>(p - s)) -
                         std::lgamma(static_cast<double>(p) + 1.0));
  }
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p; ++j) {
    const std::size_t bit = std::size_t{1} << j;
    for (std::size_t mask = 0; mask < subsets; ++mask) {
      if (mask & bit) continue;
      const auto size = static_cast<std::size_t>(std::popcount(mask));
      phi(static_cast<Eigen::Index>(j)) += weight[size] * (value[mask | bit] - value[mask]);
    }
  }
  return phi;
}

bool check_convergence(const std::vector<std::vector<DeltaRecord>>& delta_history, double threshold) {
  return convergence_ratio(delta_history) <= threshold;
}

std::string to_json_string(const SageResult& result) {
  nlohmann::json j;
  j["features"] = result.feature_labels;
  j["phi"] = std::vector<double>(result.phi.data(), result.phi.data() + result.phi.size());
  const Eigen::VectorXd se = result.std_errors();
  j["std_error"] = std::vector<double>(se.data(), se.data() + se.size());
  j["n_permutations_used"] = result.n_permutations_used;
  j["converged"] = result.converged;
  j["evaluations_total"] = result.evaluations_total;
  j["evaluations_skipped"] = result.evaluations_skipped;
  j["skipped_fraction"] = result.skipped_fraction();
  j["jitter_events"] = result.jitter_events;
  j["timing"] = {{"wall_seconds", result.wall_seconds},
                 {"evaluation_seconds", result.evaluation_seconds},
                 {"query_seconds", result.query_seconds}};
  return j.dump(2) + "\n";
}

std::string to_long_csv(const SageResult& result) {
  std::string out = "permutation,feature,cond_size,delta,std_error,skipped\n";
  for (std::size_t k = 0; k < result.n_permutations_used; ++k) {
    for (std::size_t pos = 0; pos < result.permutations[k].size(); ++pos) {
      const std::size_t j = result.permutations[k][pos];
      const auto& r = result.delta_history[j][k];
      out += std::to_string(r.permutation) + ',' + result.feature_labels[j] + ',' + std::to_string(r.cond_size) +
             ',' + format_double(r.delta) + ',' + format_double(r.std_error) + ',' + (r.skipped ? "1" : "0") + '\n';
    }
  }
  return out;
}

}  // namespace dsage
