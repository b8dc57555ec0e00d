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

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "dsage/dag.hpp"
#include "dsage/dataset.hpp"

namespace dsage {

/// Residual variances below this are floored when scoring.
inline constexpr double kResidualVarianceFloor = 1e-12;

/// Gaussian BIC local score of `node` given `parents`, computed directly from
/// the data by least squares with intercept:
///   -(n/2) (log(2 pi s2) + 1) - ((|parents| + 2) / 2) log n
/// where s2 is the ML residual variance. Higher is better. Throws
/// kSingularDesign for a rank-deficient parent design. `degenerate`, when
/// given, reports whether s2 had to be floored.
double bic_local(const Dataset& data, std::size_t node, std::span<const std::size_t> parents,
                 bool* degenerate = nullptr);

/// The same local score from precomputed sufficient statistics (column means
/// and ML covariance), which is what the search uses.
class BicScorer {
 public:
  explicit BicScorer(const Eigen::MatrixXd& rows);

  std::size_t variable_count() const noexcept { return static_cast<std::size_t>(cov_.rows()); }
  std::size_t sample_count() const noexcept { return n_; }
  double local(std::size_t node, std::span<const std::size_t> parents, bool* degenerate = nullptr) const;

 private:
  std::size_t n_;
  Eigen::MatrixXd cov_;
};

/// Memo of local scores keyed by (node, sorted parent set). Lookups take a
/// shared lock, inserts an exclusive one.
class ScoreCache {
 public:
  /// Returns the cached score or computes, stores and returns it. Exceptions
  /// from `compute` propagate and nothing is stored.
  template <typename Compute>
  double get_or_compute(std::size_t node, std::span<const std::size_t> parents, Compute&& compute) {
    Key key = make_key(node, parents);
    {
      std::shared_lock lock(mutex_);
      if (auto it = table_.find(key); it != table_.end()) {
        ++hits_;
        return it->second;
      }
    }
    ++misses_;
    const double value = compute();
    std::unique_lock lock(mutex_);
    table_.emplace(std::move(key), value);
    return value;
  }

  std::optional<double> lookup(std::size_t node, std::span<const std::size_t> parents) const;
  std::size_t size() const;
  std::uint64_t hits() const noexcept { return hits_; }
  std::uint64_t misses() const noexcept { return misses_; }

 private:
  using Key = std::vector<std::uint32_t>;
  struct KeyHash {
    std::size_t operator()(const Key& key) const noexcept;
  };
  static Key make_key(std::size_t node, std::span<const std::size_t> parents);

  mutable std::shared_mutex mutex_;
  std::unordered_map<Key, double, KeyHash> table_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
};

enum class SearchAlgorithm { kHillClimb, kTabu };

std::string_view to_string(SearchAlgorithm algorithm);
/// Accepts "hc" and "tabu"; throws kInvalidArgument otherwise.
SearchAlgorithm parse_search_algorithm(std::string_view name);

struct SearchConfig {
  SearchAlgorithm algorithm = SearchAlgorithm::kTabu;
  std::size_t tabu_list_size = 10;
  /// Escape-phase budget: iterations without a new best structure.
  std::size_t max_nonimproving = 100;
  std::size_t max_iterations = std::numeric_limits<std::size_t>::max();
  std::size_t max_in_degree = std::numeric_limits<std::size_t>::max();
  /// Kept for provenance; the search itself is deterministic.
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool use_cache = true;

  void validate() const;
};

struct LearnResult {
  Dag dag;
  double score = 0.0;
  std::size_t iterations = 0;
  std::size_t improving_iterations = 0;
  std::size_t skipped_moves = 0;
  /// Total score after each applied move.
  std::vector<double> score_trace;
  double wall_seconds = 0.0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  SearchConfig config;
};

/// Best-improvement greedy search over single-edge additions, deletions and
/// reversals from the empty graph, stopping at a local optimum. Ties go to the
/// lexicographically smallest (operation, parent, child) with add < delete <
/// reverse.
LearnResult hill_climb(const Dataset& data, const SearchConfig& config);

/// Hill climbing that keeps moving past local optima: each iteration applies
/// the best move whose resulting structure is not among the last
/// `tabu_list_size` visited ones; stops after `max_nonimproving` iterations
/// without a new best and returns the best structure visited.
LearnResult tabu_search(const Dataset& data, const SearchConfig& config);

/// Dispatch on config.algorithm.
LearnResult learn_structure(const Dataset& data, const SearchConfig& config);

/// Sum of local scores of `dag` on the columns of `data` (same order).
double total_score(const Dataset& data, const Dag& dag);

std::string learn_report_json(const LearnResult& result);

}  // namespace dsage
