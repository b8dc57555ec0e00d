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

#include "dsage/dag.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <queue>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "dsage/error.hpp"
#include "dsage/io.hpp"

namespace dsage {
namespace {

void validate_label(const std::string& label) {
  if (label.empty()) throw Error(ErrorKind::kInvalidGraph, "empty node label");
  if (label.find_first_of(",\n\r") != std::string::npos || trim(label) != label) {
    throw Error(ErrorKind::kInvalidGraph, "node label '" + label +
                                              "' contains a comma, newline or padding");
  }
}

}  // namespace

Dag::Dag(std::vector<std::string> labels, std::vector<Edge> edges)
    : labels_(std::move(labels)), edges_(std::move(edges)) {
  const std::size_t n = labels_.size();
  std::set<std::string> seen;
  for (const auto& label : labels_) {
    validate_label(label);
    if (!seen.insert(label).second) {
      throw Error(ErrorKind::kInvalidGraph, "duplicate node label '" + label + "'");
    }
  }
  std::sort(edges_.begin(), edges_.end());
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const auto [u, v] = edges_[i];
    if (u >= n || v >= n) throw Error(ErrorKind::kIndexOutOfRange, "edge endpoint out of range");
    if (u == v) throw Error(ErrorKind::kInvalidGraph, "self-loop on " + labels_[u]);
    if (i > 0 && edges_[i - 1] == edges_[i]) {
      throw Error(ErrorKind::kInvalidGraph, "duplicate edge " + labels_[u] + "->" + labels_[v]);
    }
  }
  topological_order(n, edges_);
  parents_.assign(n, {});
  children_.assign(n, {});
  for (const auto& [u, v] : edges_) {
    parents_[v].push_back(u);
    children_[u].push_back(v);
  }
  for (auto& p : parents_) std::sort(p.begin(), p.end());
}

Dag Dag::from_labels(std::vector<std::string> labels,
                     const std::vector<std::pair<std::string, std::string>>& edges) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index.emplace(labels[i], i);
  std::vector<Edge> indexed;
  indexed.reserve(edges.size());
  for (const auto& [p, c] : edges) {
    const auto pi = index.find(p);
    const auto ci = index.find(c);
    if (pi == index.end() || ci == index.end()) {
      throw Error(ErrorKind::kLabelMismatch, "edge " + p + "->" + c + " names an unknown node");
    }
    indexed.emplace_back(pi->second, ci->second);
  }
  return Dag(std::move(labels), std::move(indexed));
}

bool Dag::has_edge(std::size_t parent, std::size_t child) const {
  const auto& ps = parents_.at(child);
  return std::binary_search(ps.begin(), ps.end(), parent);
}

std::optional<std::size_t> Dag::find(const std::string& label) const {
  const auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels_.begin());
}

std::size_t Dag::index_of(const std::string& label) const {
  if (auto i = find(label)) return *i;
  throw Error(ErrorKind::kLabelMismatch, "graph has no node '" + label + "'");
}

std::vector<std::size_t> topological_order(std::size_t node_count, std::span<const Edge> edges) {
  std::vector<std::vector<std::size_t>> out(node_count);
  std::vector<std::size_t> in_degree(node_count, 0);
  for (const auto& [u, v] : edges) {
    if (u >= node_count || v >= node_count) {
      throw Error(ErrorKind::kIndexOutOfRange, "edge endpoint out of range");
    }
    out[u].push_back(v);
    ++in_degree[v];
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t v = 0; v < node_count; ++v) {
    if (in_degree[v] == 0) ready.push(v);
  }
  std::vector<std::size_t> order;
  order.reserve(node_count);
  while (!ready.empty()) {
    const std::size_t u = ready.top();
    ready.pop();
    order.push_back(u);
    for (std::size_t v : out[u]) {
      if (--in_degree[v] == 0) ready.push(v);
    }
  }
  if (order.size() != node_count) throw Error(ErrorKind::kCycleDetected, "edge set is cyclic");
  return order;
}

std::vector<std::size_t> topological_order(const Dag& dag) {
  return topological_order(dag.node_count(), dag.edges());
}

bool d_separated(const Dag& dag, std::size_t x, std::size_t y,
                 std::span<const std::size_t> cond_set) {
  const std::size_t n = dag.node_count();
  if (x >= n || y >= n) throw Error(ErrorKind::kIndexOutOfRange, "query node out of range");
  if (x == y) throw Error(ErrorKind::kInvalidArgument, "query requires x != y");
  std::vector<char> observed(n, 0);
  for (std::size_t z : cond_set) {
    if (z >= n) throw Error(ErrorKind::kIndexOutOfRange, "conditioning node out of range");
    if (z == x || z == y) {
      throw Error(ErrorKind::kInvalidArgument, "conditioning set contains a query endpoint");
    }
    observed[z] = 1;
  }

  // Observed nodes and their ancestors: a collider there is open.
  std::vector<char> opens_collider(n, 0);
  std::vector<std::size_t> stack(cond_set.begin(), cond_set.end());
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    if (opens_collider[v]) continue;
    opens_collider[v] = 1;
    for (std::size_t p : dag.parents(v)) stack.push_back(p);
  }

  // State (v, up): reached v from a child. State (v, down): reached v from a parent.
  enum : std::uint8_t { kUp = 1, kDown = 2 };
  std::vector<std::uint8_t> visited(n, 0);
  std::vector<std::pair<std::size_t, std::uint8_t>> frontier{{x, kUp}};
  while (!frontier.empty()) {
    const auto [v, dir] = frontier.back();
    frontier.pop_back();
    if (visited[v] & dir) continue;
    visited[v] |= dir;
    if (!observed[v] && v == y) return false;
    if (dir == kUp && !observed[v]) {
      for (std::size_t p : dag.parents(v)) frontier.emplace_back(p, kUp);
      for (std::size_t c : dag.children(v)) frontier.emplace_back(c, kDown);
    } else if (dir == kDown) {
      if (!observed[v]) {
        for (std::size_t c : dag.children(v)) frontier.emplace_back(c, kDown);
      }
      if (opens_collider[v]) {
        for (std::size_t p : dag.parents(v)) frontier.emplace_back(p, kUp);
      }
    }
  }
  return true;
}

bool d_separated(const Dag& dag, const DsepQuery& query) {
  return d_separated(dag, query.x, query.y, query.cond_set);
}

FeatureQuery sample_feature_query(std::span<const std::size_t> features, Rng& rng) {
  if (features.empty()) throw Error(ErrorKind::kInvalidArgument, "no features to sample from");
  FeatureQuery q;
  std::uniform_int_distribution<std::size_t> pick(0, features.size() - 1);
  const std::size_t pos = pick(rng);
  q.feature = features[pos];

  std::vector<std::size_t> rest;
  rest.reserve(features.size() - 1);
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (i != pos) rest.push_back(features[i]);
  }
  std::binomial_distribution<std::size_t> size_dist(rest.size(), 0.5);
  const std::size_t size = rest.empty() ? 0 : size_dist(rng);
  for (std::size_t i = 0; i < size; ++i) {
    std::uniform_int_distribution<std::size_t> swap_with(i, rest.size() - 1);
    std::swap(rest[i], rest[swap_with(rng)]);
  }
  q.cond_set.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(size));
  std::sort(q.cond_set.begin(), q.cond_set.end());
  return q;
}

std::vector<std::size_t> feature_nodes(const Dag& dag, std::size_t target) {
  if (target >= dag.node_count()) throw Error(ErrorKind::kIndexOutOfRange, "target out of range");
  std::vector<std::size_t> features;
  features.reserve(dag.node_count() - 1);
  for (std::size_t v = 0; v < dag.node_count(); ++v) {
    if (v != target) features.push_back(v);
  }
  return features;
}

std::uint64_t dsep_query_count(std::size_t feature_count) {
  if (feature_count == 0) return 0;
  if (feature_count > 58) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(feature_count) << (feature_count - 1);
}

double dsep_share(const Dag& dag, std::size_t target, const DsepShareExact& mode) {
  const auto features = feature_nodes(dag, target);
  const std::size_t p = features.size();
  const std::uint64_t total = dsep_query_count(p);
  if (total == 0) return 0.0;
  if (total > mode.max_queries) {
    throw Error(ErrorKind::kTooLargeForExact,
                std::to_string(p) + " features exceed the exact-enumeration cap");
  }
  std::uint64_t separated = 0;
  std::vector<std::size_t> others;
  std::vector<std::size_t> cond;
  for (std::size_t j = 0; j < p; ++j) {
    others.clear();
    for (std::size_t i = 0; i < p; ++i) {
      if (i != j) others.push_back(features[i]);
    }
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << others.size()); ++mask) {
      cond.clear();
      for (std::size_t b = 0; b < others.size(); ++b) {
        if (mask >> b & 1u) cond.push_back(others[b]);
      }
      separated += d_separated(dag, features[j], target, cond) ? 1 : 0;
    }
  }
  return static_cast<double>(separated) / static_cast<double>(total);
}

double dsep_share(const Dag& dag, std::size_t target, const DsepShareMonteCarlo& mode) {
  const auto features = feature_nodes(dag, target);
  if (features.empty() || mode.n_mc == 0) return 0.0;
  Rng rng = make_rng(mode.seed);
  std::size_t separated = 0;
  for (std::size_t i = 0; i < mode.n_mc; ++i) {
    const auto q = sample_feature_query(features, rng);
    separated += d_separated(dag, q.feature, target, q.cond_set) ? 1 : 0;
  }
  return static_cast<double>(separated) / static_cast<double>(mode.n_mc);
}

std::string to_edge_list(const Dag& dag) {
  std::string out = "# nodes: ";
  for (std::size_t i = 0; i < dag.node_count(); ++i) {
    if (i) out += ',';
    out += dag.labels()[i];
  }
  out += '\n';
  for (const auto& [u, v] : dag.edges()) {
    out += dag.labels()[u] + ',' + dag.labels()[v] + '\n';
  }
  return out;
}

Dag parse_edge_list(const std::string& text) {
  std::optional<std::vector<std::string>> labels;
  std::vector<std::pair<std::string, std::string>> edges;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      constexpr std::string_view kHeader = "# nodes:";
      if (line.substr(0, kHeader.size()) != kHeader) continue;
      if (labels) throw Error(ErrorKind::kParse, "duplicate '# nodes:' header");
      labels.emplace();
      const auto body = trim(line.substr(kHeader.size()));
      if (!body.empty()) {
        for (const auto& label : split(body, ',')) labels->emplace_back(trim(label));
      }
      continue;
    }
    if (!labels) throw Error(ErrorKind::kParse, "edge before '# nodes:' header");
    const auto parts = split(line, ',');
    if (parts.size() != 2) {
      throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": expected parent,child");
    }
    edges.emplace_back(std::string(trim(parts[0])), std::string(trim(parts[1])));
  }
  if (!labels) throw Error(ErrorKind::kParse, "missing '# nodes:' header");
  return Dag::from_labels(std::move(*labels), edges);
}

std::string to_json_string(const Dag& dag) {
  nlohmann::json j;
  j["nodes"] = dag.labels();
  j["edges"] = nlohmann::json::array();
  for (const auto& [u, v] : dag.edges()) {
    j["edges"].push_back({dag.labels()[u], dag.labels()[v]});
  }
  return j.dump(2) + "\n";
}

Dag parse_dag_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    auto labels = j.at("nodes").get<std::vector<std::string>>();
    std::vector<std::pair<std::string, std::string>> edges;
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw Error(ErrorKind::kParse, "edge must be [p, c]");
      edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
    }
    return Dag::from_labels(std::move(labels), edges);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, e.what());
  }
}

Dag load_dag(const std::string& path) {
  const std::string text = read_file(path);
  const auto body = trim(text);
  if (!body.empty() && body.front() == '{') return parse_dag_json(text);
  return parse_edge_list(text);
}

void save_dag(const Dag& dag, const std::string& path) {
  const bool json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  write_file_atomic(path, json ? to_json_string(dag) : to_edge_list(dag));
}

}  // namespace dsage
