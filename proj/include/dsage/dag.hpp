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
#include <utility>
#include <vector>

#include "dsage/random.hpp"

namespace dsage {

using Edge = std::pair<std::size_t, std::size_t>;  // (parent, child)

/// Immutable directed acyclic graph over labelled nodes.
///
/// Construction validates labels, rejects self-loops, duplicate edges and
/// cycles. Edges are stored sorted; parent and child lists are ascending.
class Dag {
 public:
  Dag() = default;
  Dag(std::vector<std::string> labels, std::vector<Edge> edges);

  static Dag from_labels(std::vector<std::string> labels,
                         const std::vector<std::pair<std::string, std::string>>& edges);

  std::size_t node_count() const noexcept { return labels_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  std::span<const std::size_t> parents(std::size_t v) const { return parents_.at(v); }
  std::span<const std::size_t> children(std::size_t v) const { return children_.at(v); }
  std::size_t degree(std::size_t v) const { return parents(v).size() + children(v).size(); }
  bool has_edge(std::size_t parent, std::size_t child) const;

  std::optional<std::size_t> find(const std::string& label) const;
  /// Throws kLabelMismatch when the label is unknown.
  std::size_t index_of(const std::string& label) const;

  friend bool operator==(const Dag& a, const Dag& b) {
    return a.labels_ == b.labels_ && a.edges_ == b.edges_;
  }

 private:
  std::vector<std::string> labels_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<std::size_t>> children_;
};

/// Kahn's algorithm with a min-heap frontier, so ties go to the smallest index.
/// Throws kCycleDetected on cyclic input.
std::vector<std::size_t> topological_order(std::size_t node_count, std::span<const Edge> edges);
std::vector<std::size_t> topological_order(const Dag& dag);

struct DsepQuery {
  std::size_t x = 0;
  std::size_t y = 0;
  std::vector<std::size_t> cond_set;
};

/// True iff every path between x and y is blocked given cond_set.
///
/// Bayes-ball reachability: mark the conditioning set and its ancestors, then
/// walk (node, direction) states from x. Linear in nodes + edges.
bool d_separated(const Dag& dag, const DsepQuery& query);
bool d_separated(const Dag& dag, std::size_t x, std::size_t y,
                 std::span<const std::size_t> cond_set);

/// Draws one (feature, conditioning set) pair: the feature uniformly, the set
/// size from Binomial(p - 1, 1/2), then the members without replacement from
/// the remaining features. `features` lists the candidate node indices.
struct FeatureQuery {
  std::size_t feature = 0;
  std::vector<std::size_t> cond_set;
};
FeatureQuery sample_feature_query(std::span<const std::size_t> features, Rng& rng);

/// All nodes except `target`, ascending.
std::vector<std::size_t> feature_nodes(const Dag& dag, std::size_t target);

struct DsepShareExact {
  std::uint64_t max_queries = 1u << 22;
};
struct DsepShareMonteCarlo {
  std::size_t n_mc = 100000;
  std::uint64_t seed = 0;
};

/// Number of (feature, subset of remaining features) pairs: p * 2^(p-1).
std::uint64_t dsep_query_count(std::size_t feature_count);

/// Fraction of (feature j, S subset of the other features) pairs with j
/// d-separated from `target` given S. Exact mode enumerates every pair and
/// throws kTooLargeForExact above the cap.
double dsep_share(const Dag& dag, std::size_t target, const DsepShareExact& mode);
double dsep_share(const Dag& dag, std::size_t target, const DsepShareMonteCarlo& mode);

// Text and JSON graph formats.
std::string to_edge_list(const Dag& dag);
Dag parse_edge_list(const std::string& text);
std::string to_json_string(const Dag& dag);
Dag parse_dag_json(const std::string& text);

/// Reads either format; JSON is detected by a leading '{'.
Dag load_dag(const std::string& path);
/// Writes JSON when the path ends in ".json", the edge list otherwise.
void save_dag(const Dag& dag, const std::string& path);

}  // namespace dsage
