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

#include "dsage/csl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <numbers>

#include <json.hpp>

#include "dsage/error.hpp"
#include "dsage/parallel.hpp"

namespace dsage {
namespace {

double bic_from_variance(double residual_var, std::size_t n, std::size_t parent_count, bool* degenerate) {
  const bool floored = residual_var < kResidualVarianceFloor;
  if (degenerate) *degenerate = floored;
  const double s2 = floored ? kResidualVarianceFloor : residual_var;
  const double nd = static_cast<double>(n);
  return -0.5 * nd * (std::log(2.0 * std::numbers::pi * s2) + 1.0) -
         0.5 * static_cast<double>(parent_count + 2) * std::log(nd);
}

void check_parents(std::size_t node, std::span<const std::size_t> parents, std::size_t d) {
  if (node >= d) throw Error(ErrorKind::kIndexOutOfRange, "node out of range");
  for (std::size_t p : parents) {
    if (p >= d) throw Error(ErrorKind::kIndexOutOfRange, "parent out of range");
    if (p == node) throw Error(ErrorKind::kInvalidArgument, "node cannot be its own parent");
  }
}

}  // namespace

double bic_local(const Dataset& data, std::size_t node, std::span<const std::size_t> parents,
                 bool* degenerate) {
  const std::size_t d = data.column_count();
  const std::size_t n = data.row_count();
  check_parents(node, parents, d);
  if (n <= parents.size() + 2) throw Error(ErrorKind::kInsufficientRows, "too few rows for the regression");
  const auto k = static_cast<Eigen::Index>(parents.size());
  Eigen::MatrixXd design(static_cast<Eigen::Index>(n), k + 1);
  design.col(0).setOnes();
  for (Eigen::Index c = 0; c < k; ++c) {
    design.col(c + 1) = data.rows.col(static_cast<Eigen::Index>(parents[static_cast<std::size_t>(c)]));
  }
  const Eigen::VectorXd y = data.rows.col(static_cast<Eigen::Index>(node));
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < k + 1) throw Error(ErrorKind::kSingularDesign, "parent design is rank deficient");
  const Eigen::VectorXd residual = y - design * qr.solve(y);
  return bic_from_variance(residual.squaredNorm() / static_cast<double>(n), n, parents.size(), degenerate);
}

BicScorer::BicScorer(const Eigen::MatrixXd& rows) : n_(static_cast<std::size_t>(rows.rows())) {
  if (rows.rows() < 3) throw Error(ErrorKind::kInsufficientRows, "need at least three rows");
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - mean;
  cov_ = (centered.transpose() * centered) / static_cast<double>(n_);
}

double BicScorer::local(std::size_t node, std::span<const std::size_t> parents, bool* degenerate) const {
  const std::size_t d = variable_count();
  check_parents(node, parents, d);
  if (n_ <= parents.size() + 2) throw Error(ErrorKind::kInsufficientRows, "too few rows for the regression");
  const auto j = static_cast<Eigen::Index>(node);
  if (parents.empty()) return bic_from_variance(cov_(j, j), n_, 0, degenerate);

  const auto k = static_cast<Eigen::Index>(parents.size());
  Eigen::MatrixXd cpp(k, k);
  Eigen::VectorXd cpj(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    const auto pa = static_cast<Eigen::Index>(parents[static_cast<std::size_t>(a)]);
    cpj(a) = cov_(pa, j);
    for (Eigen::Index b = 0; b < k; ++b) cpp(a, b) = cov_(pa, static_cast<Eigen::Index>(parents[static_cast<std::size_t>(b)]));
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cpp);
  const double scale = std::max(cpp.diagonal().maxCoeff(), 1e-300);
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 1e-10 * scale) {
    throw Error(ErrorKind::kSingularDesign, "parent design is rank deficient");
  }
  const double residual_var = cov_(j, j) - cpj.dot(ldlt.solve(cpj));
  return bic_from_variance(residual_var, n_, parents.size(), degenerate);
}

std::optional<double> ScoreCache::lookup(std::size_t node, std::span<const std::size_t> parents) const {
  std::shared_lock lock(mutex_);
  if (auto it = table_.find(make_key(node, parents)); it != table_.end()) return it->second;
  return std::nullopt;
}

std::size_t ScoreCache::size() const {
  std::shared_lock lock(mutex_);
  return table_.size();
}

std::size_t ScoreCache::KeyHash::operator()(const Key& key) const noexcept {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (std::uint32_t v : key) h = mix64(h ^ v);
  return static_cast<std::size_t>(h);
}

ScoreCache::Key ScoreCache::make_key(std::size_t node, std::span<const std::size_t> parents) {
  Key key;
  key.reserve(parents.size() + 1);
  key.push_back(static_cast<std::uint32_t>(node));
  for (std::size_t p : parents) key.push_back(static_cast<std::uint32_t>(p));
  std::sort(key.begin() + 1, key.end());
  return key;
}

std::string_view to_string(SearchAlgorithm algorithm) {
  return algorithm == SearchAlgorithm::kHillClimb ? "hc" : "tabu";
}

SearchAlgorithm parse_search_algorithm(std::string_view name) {
  if (name == "hc") return SearchAlgorithm::kHillClimb;
  if (name == "tabu") return SearchAlgorithm::kTabu;
  throw Error(ErrorKind::kInvalidArgument, "unknown search algorithm '" + std::string(name) + "'");
}

void SearchConfig::validate() const {
  if (algorithm == SearchAlgorithm::kTabu && tabu_list_size < 1) {
    throw Error(ErrorKind::kInvalidArgument, "tabu list size must be at least 1");
  }
}

namespace {

enum class MoveOp : int { kAdd = 0, kDelete = 1, kReverse = 2 };

struct Move {
  MoveOp op;
  std::size_t parent;
  std::size_t child;
  double delta = 0.0;
  bool valid = true;
};

bool tie_order(const Move& a, const Move& b) {
  return std::tie(a.op, a.parent, a.child) < std::tie(b.op, b.parent, b.child);
}

// Mutable search state: parent sets, adjacency and cached local scores.
class SearchState {
 public:
  SearchState(const BicScorer& scorer, ScoreCache* cache) : scorer_(scorer), cache_(cache) {
    const std::size_t d = scorer.variable_count();
    parents_.assign(d, {});
    adjacent_.assign(d * d, 0);
    local_.resize(d);
    for (std::size_t v = 0; v < d; ++v) local_[v] = score(v, parents_[v]);
  }

  std::size_t size() const noexcept { return parents_.size(); }
  bool has_edge(std::size_t u, std::size_t v) const { return adjacent_[u * size() + v] != 0; }
  const std::vector<std::size_t>& parents(std::size_t v) const { return parents_[v]; }
  double total() const {
    double sum = 0.0;
    for (double s : local_) sum += s;
    return sum;
  }
  double local(std::size_t v) const { return local_[v]; }

  double score(std::size_t node, const std::vector<std::size_t>& parents) const {
    if (!cache_) return scorer_.local(node, parents);
    return cache_->get_or_compute(node, parents, [&] { return scorer_.local(node, parents); });
  }

  // reach[u * d + v]: directed path u ~> v of length >= 1.
  std::vector<char> reachability() const {
    const std::size_t d = size();
    std::vector<char> reach(d * d, 0);
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < d; ++s) {
      stack.assign(1, s);
      while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        for (std::size_t v = 0; v < d; ++v) {
          if (has_edge(u, v) && !reach[s * d + v]) {
            reach[s * d + v] = 1;
            stack.push_back(v);
          }
        }
      }
    }
    return reach;
  }

  void add(std::size_t u, std::size_t v) {
    auto& ps = parents_[v];
    ps.insert(std::upper_bound(ps.begin(), ps.end(), u), u);
    adjacent_[u * size() + v] = 1;
  }
  void remove(std::size_t u, std::size_t v) {
    auto& ps = parents_[v];
    ps.erase(std::find(ps.begin(), ps.end(), u));
    adjacent_[u * size() + v] = 0;
  }

  void apply(const Move& m) {
    switch (m.op) {
      case MoveOp::kAdd: add(m.parent, m.child); break;
      case MoveOp::kDelete: remove(m.parent, m.child); break;
      case MoveOp::kReverse:
        remove(m.parent, m.child);
        add(m.child, m.parent);
        local_[m.parent] = score(m.parent, parents_[m.parent]);
        break;
    }
    local_[m.child] = score(m.child, parents_[m.child]);
  }

  // Structure identity for the tabu list.
  std::vector<char> key_after(const Move& m) const {
    std::vector<char> key = adjacent_;
    const std::size_t d = size();
    switch (m.op) {
      case MoveOp::kAdd: key[m.parent * d + m.child] = 1; break;
      case MoveOp::kDelete: key[m.parent * d + m.child] = 0; break;
      case MoveOp::kReverse:
        key[m.parent * d + m.child] = 0;
        key[m.child * d + m.parent] = 1;
        break;
    }
    return key;
  }
  const std::vector<char>& key() const { return adjacent_; }

  Dag to_dag(const std::vector<std::string>& labels) const {
    std::vector<Edge> edges;
    for (std::size_t v = 0; v < size(); ++v) {
      for (std::size_t u : parents_[v]) edges.emplace_back(u, v);
    }
    return Dag(labels, std::move(edges));
  }

 private:
  const BicScorer& scorer_;
  ScoreCache* cache_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<char> adjacent_;
  std::vector<double> local_;
};

// Legal moves with their score deltas; moves whose scoring failed are marked
// invalid and counted in `skipped`.
std::vector<Move> candidate_moves(const SearchState& state, const SearchConfig& config, std::size_t& skipped) {
  const std::size_t d = state.size();
  const auto reach = state.reachability();
  std::vector<Move> moves;
  for (std::size_t u = 0; u < d; ++u) {
    for (std::size_t v = 0; v < d; ++v) {
      if (u == v) continue;
      if (state.has_edge(u, v)) {
        moves.push_back({MoveOp::kDelete, u, v});
        // Reversal is legal unless another directed path u ~> v exists.
        bool other_path = false;
        for (std::size_t c = 0; c < d && !other_path; ++c) {
          if (c != v && state.has_edge(u, c) && reach[c * d + v]) other_path = true;
        }
        if (!other_path && state.parents(u).size() < config.max_in_degree) {
          moves.push_back({MoveOp::kReverse, u, v});
        }
      } else if (!state.has_edge(v, u) && !reach[v * d + u] && state.parents(v).size() < config.max_in_degree) {
        moves.push_back({MoveOp::kAdd, u, v});
      }
    }
  }

  parallel_for(moves.size(), config.threads, [&](std::size_t i) {
    Move& m = moves[i];
    try {
      auto child_parents = state.parents(m.child);
      if (m.op == MoveOp::kAdd) {
        child_parents.insert(std::upper_bound(child_parents.begin(), child_parents.end(), m.parent), m.parent);
      } else {
        child_parents.erase(std::find(child_parents.begin(), child_parents.end(), m.parent));
      }
      m.delta = state.score(m.child, child_parents) - state.local(m.child);
      if (m.op == MoveOp::kReverse) {
        auto parent_parents = state.parents(m.parent);
        parent_parents.insert(std::upper_bound(parent_parents.begin(), parent_parents.end(), m.child), m.child);
        m.delta += state.score(m.parent, parent_parents) - state.local(m.parent);
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kSingularDesign && e.kind() != ErrorKind::kInsufficientRows) throw;
      m.valid = false;
    }
  });

  std::vector<Move> valid;
  valid.reserve(moves.size());
  for (const auto& m : moves) {
    if (m.valid) {
      valid.push_back(m);
    } else {
      ++skipped;
    }
  }
  // Best delta first, ties by (operation, parent, child).
  std::stable_sort(valid.begin(), valid.end(), [](const Move& a, const Move& b) {
    if (a.delta != b.delta) return a.delta > b.delta;
    return tie_order(a, b);
  });
  return valid;
}

constexpr double kImprovementTolerance = 1e-9;

LearnResult run_search(const Dataset& data, const SearchConfig& config, bool tabu) {
  config.validate();
  if (data.column_count() < 2) throw Error(ErrorKind::kInvalidArgument, "structure learning needs two columns");
  data.validate();
  const auto start = std::chrono::steady_clock::now();
  const BicScorer scorer(data.rows);
  ScoreCache cache;
  SearchState state(scorer, config.use_cache ? &cache : nullptr);

  LearnResult result;
  result.config = config;
  double best_score = state.total();
  std::vector<std::vector<std::size_t>> best_parents;
  auto snapshot = [&] {
    best_parents.clear();
    for (std::size_t v = 0; v < state.size(); ++v) best_parents.push_back(state.parents(v));
  };
  snapshot();

  std::deque<std::vector<char>> tabu_list;
  if (tabu) tabu_list.push_back(state.key());
  std::size_t nonimproving = 0;
  bool escaping = false;

  while (result.iterations < config.max_iterations) {
    const auto moves = candidate_moves(state, config, result.skipped_moves);
    const Move* chosen = nullptr;
    if (!escaping) {
      if (!moves.empty() && moves.front().delta > kImprovementTolerance) chosen = &moves.front();
      if (!chosen) {
        if (!tabu) break;
        escaping = true;
      }
    }
    if (escaping) {
      for (const auto& m : moves) {
        const auto key = state.key_after(m);
        if (std::find(tabu_list.begin(), tabu_list.end(), key) == tabu_list.end()) {
          chosen = &m;
          break;
        }
      }
      if (!chosen) break;
    }

    state.apply(*chosen);
    ++result.iterations;
    if (!escaping) ++result.improving_iterations;
    if (tabu) {
      tabu_list.push_back(state.key());
      while (tabu_list.size() > config.tabu_list_size) tabu_list.pop_front();
    }
    const double current = state.total();
    result.score_trace.push_back(current);
    if (current > best_score + kImprovementTolerance) {
      best_score = current;
      snapshot();
      nonimproving = 0;
    } else if (escaping) {
      if (++nonimproving >= config.max_nonimproving) break;
    }
  }

  std::vector<Edge> edges;
  for (std::size_t v = 0; v < best_parents.size(); ++v) {
    for (std::size_t u : best_parents[v]) edges.emplace_back(u, v);
  }
  result.dag = Dag(data.column_labels, std::move(edges));
  result.score = best_score;
  result.cache_hits = cache.hits();
  result.cache_misses = cache.misses();
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace

LearnResult hill_climb(const Dataset& data, const SearchConfig& config) {
  return run_search(data, config, false);
}

LearnResult tabu_search(const Dataset& data, const SearchConfig& config) {
  return run_search(data, config, true);
}

LearnResult learn_structure(const Dataset& data, const SearchConfig& config) {
  return config.algorithm == SearchAlgorithm::kTabu ? tabu_search(data, config) : hill_climb(data, config);
}

double total_score(const Dataset& data, const Dag& dag) {
  if (dag.node_count() != data.column_count()) {
    throw Error(ErrorKind::kGraphMismatch, "graph and data disagree on the variable count");
  }
  const BicScorer scorer(data.rows);
  double sum = 0.0;
  for (std::size_t v = 0; v < dag.node_count(); ++v) {
    const auto ps = dag.parents(v);
    sum += scorer.local(v, std::vector<std::size_t>(ps.begin(), ps.end()));
  }
  return sum;
}

std::string learn_report_json(const LearnResult& result) {
  nlohmann::json j;
  j["algorithm"] = std::string(to_string(result.config.algorithm));
  j["iterations"] = result.iterations;
  j["improving_iterations"] = result.improving_iterations;
  j["final_score"] = result.score;
  j["edge_count"] = result.dag.edge_count();
  j["skipped_moves"] = result.skipped_moves;
  j["wall_seconds"] = result.wall_seconds;
  j["cache"] = {{"hits", result.cache_hits}, {"misses", result.cache_misses}};
  j["config"] = {{"tabu_list_size", result.config.tabu_list_size},
                 {"max_nonimproving", result.config.max_nonimproving},
                 {"seed", result.config.seed}};
  return j.dump(2) + "\n";
}

}  // namespace dsage
