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

#include <algorithm>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "dsage/dag.hpp"

namespace dsage::testing {

inline std::vector<std::string> labels_for(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("N" + std::to_string(i));
  return out;
}

// Separation in the moral graph of the ancestral set of {x, y} U S.
inline bool moralization_oracle(const Dag& g, std::size_t x, std::size_t y, const std::vector<std::size_t>& cond) {
  const std::size_t n = g.node_count();
  std::vector<char> keep(n, 0);
  std::vector<std::size_t> stack{x, y};
  stack.insert(stack.end(), cond.begin(), cond.end());
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    if (keep[v]) continue;
    keep[v] = 1;
    for (std::size_t p : g.parents(v)) stack.push_back(p);
  }
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  for (std::size_t v = 0; v < n; ++v) {
    if (!keep[v]) continue;
    const auto pa = g.parents(v);
    for (std::size_t a = 0; a < pa.size(); ++a) {
      adj[pa[a]][v] = adj[v][pa[a]] = 1;
      for (std::size_t b = a + 1; b < pa.size(); ++b) adj[pa[a]][pa[b]] = adj[pa[b]][pa[a]] = 1;
    }
  }
  std::vector<char> blocked(n, 0);
  for (std::size_t s : cond) blocked[s] = 1;
  std::vector<char> seen(n, 0);
  std::queue<std::size_t> q;
  q.push(x);
  seen[x] = 1;
  while (!q.empty()) {
    const std::size_t v = q.front();
    q.pop();
    if (v == y) return false;
    for (std::size_t w = 0; w < n; ++w) {
      if (adj[v][w] && keep[w] && !blocked[w] && !seen[w]) {
        seen[w] = 1;
        q.push(w);
      }
    }
  }
  return true;
}

inline Dag random_test_dag(std::size_t n, double p, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::bernoulli_distribution coin(p);
  std::vector<Edge> edges;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (coin(rng)) edges.emplace_back(order[a], order[b]);
    }
  }
  return Dag(labels_for(n), edges);
}

}  // namespace dsage::testing
