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
#include <cmath>
#include <queue>
#include <random>

#include <gtest/gtest.h>

#include "dsep_oracle.hpp"
#include "testing.hpp"

namespace dsage {
namespace {

using testing::chain_dag;
using testing::labels_for;
using testing::moralization_oracle;
using testing::random_test_dag;

TEST(TopologicalOrder, Chain) {
  EXPECT_EQ(topological_order(chain_dag(3)), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(TopologicalOrder, EmptyGraphUsesIndexOrder) {
  EXPECT_EQ(topological_order(Dag(labels_for(4), {})), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(TopologicalOrder, TwoCycle) {
  const std::vector<Edge> edges{{0, 1}, {1, 0}};
  EXPECT_DSAGE_ERROR(topological_order(2, edges), ErrorKind::kCycleDetected);
  EXPECT_DSAGE_ERROR(Dag(labels_for(2), edges), ErrorKind::kCycleDetected);
}

TEST(TopologicalOrder, TiesBrokenBySmallestIndex) {
  const Dag g(labels_for(4), {{3, 0}, {2, 1}});
  EXPECT_EQ(topological_order(g), (std::vector<std::size_t>{2, 1, 3, 0}));
}

TEST(Dag, RejectsMalformedInput) {
  EXPECT_DSAGE_ERROR(Dag(labels_for(2), {{0, 0}}), ErrorKind::kInvalidGraph);
  EXPECT_DSAGE_ERROR(Dag(labels_for(2), {{0, 1}, {0, 1}}), ErrorKind::kInvalidGraph);
  EXPECT_DSAGE_ERROR(Dag(labels_for(2), {{0, 2}}), ErrorKind::kIndexOutOfRange);
  EXPECT_DSAGE_ERROR(Dag({"a", "a"}, {}), ErrorKind::kInvalidGraph);
}

TEST(Dsep, ChainBlockedByMiddle) {
  const Dag g = chain_dag(3);
  const std::vector<std::size_t> mid{1};
  EXPECT_TRUE(d_separated(g, 0, 2, mid));
  EXPECT_FALSE(d_separated(g, 0, 2, {}));
}

TEST(Dsep, ConditionedColliderOpensPath) {
  const Dag g(labels_for(3), {{0, 1}, {2, 1}});
  const std::vector<std::size_t> mid{1};
  EXPECT_FALSE(d_separated(g, 0, 2, mid));
  EXPECT_TRUE(d_separated(g, 0, 2, {}));
}

TEST(Dsep, ConditionedDescendantOfColliderOpensPath) {
  const Dag g(labels_for(4), {{0, 1}, {2, 1}, {1, 3}});
  const std::vector<std::size_t> desc{3};
  EXPECT_FALSE(d_separated(g, 0, 2, desc));
}

TEST(Dsep, RejectsBadQueries) {
  const Dag g = chain_dag(3);
  EXPECT_DSAGE_ERROR(d_separated(g, 0, 5, {}), ErrorKind::kIndexOutOfRange);
  EXPECT_DSAGE_ERROR(d_separated(g, 1, 1, {}), ErrorKind::kInvalidArgument);
  const std::vector<std::size_t> bad{0};
  EXPECT_DSAGE_ERROR(d_separated(g, 0, 2, bad), ErrorKind::kInvalidArgument);
}

TEST(Dsep, MatchesMoralizationOracleOnSixNodeGraphs) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Dag g = random_test_dag(6, 0.4, rng);
    for (std::size_t x = 0; x < 6; ++x) {
      for (std::size_t y = 0; y < 6; ++y) {
        if (x == y) continue;
        for (std::uint32_t mask = 0; mask < 64; ++mask) {
          if (mask >> x & 1u || mask >> y & 1u) continue;
          std::vector<std::size_t> cond;
          for (std::size_t b = 0; b < 6; ++b) {
            if (mask >> b & 1u) cond.push_back(b);
          }
          ASSERT_EQ(d_separated(g, x, y, cond), moralization_oracle(g, x, y, cond));
        }
      }
    }
  }
}

TEST(Dsep, MatchesOracleOnRandomCasesUpToEightNodes) {
  std::mt19937_64 rng(11);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
    const Dag g = random_test_dag(n, std::uniform_real_distribution<double>(0.1, 0.7)(rng), rng);
    std::uniform_int_distribution<std::size_t> node(0, n - 1);
    const std::size_t x = node(rng);
    std::size_t y = node(rng);
    while (y == x) y = node(rng);
    std::vector<std::size_t> cond;
    std::bernoulli_distribution in(0.4);
    for (std::size_t v = 0; v < n; ++v) {
      if (v != x && v != y && in(rng)) cond.push_back(v);
    }
    if (d_separated(g, x, y, cond) != moralization_oracle(g, x, y, cond)) ++mismatches;
  }
  EXPECT_EQ(mismatches, 0);
}

TEST(Dsep, Symmetric) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Dag g = random_test_dag(7, 0.35, rng);
    std::vector<std::size_t> cond;
    for (std::size_t v = 2; v < 7; ++v) {
      if (rng() & 1u) cond.push_back(v);
    }
    EXPECT_EQ(d_separated(g, 0, 1, cond), d_separated(g, 1, 0, cond));
  }
}

TEST(Dsep, EdgeDeletionNeverBreaksASeparation) {
  std::mt19937_64 rng(5);
  int separated_before = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const Dag g = random_test_dag(6, 0.4, rng);
    const std::vector<std::size_t> cond{2, 4};
    const bool before = d_separated(g, 0, 1, cond);
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
      std::vector<Edge> edges = g.edges();
      edges.erase(edges.begin() + static_cast<std::ptrdiff_t>(e));
      const Dag h(g.labels(), edges);
      const bool after = d_separated(h, 0, 1, cond);
      EXPECT_EQ(after, moralization_oracle(h, 0, 1, cond));
      if (before) EXPECT_TRUE(after);
    }
    separated_before += before ? 1 : 0;
  }
  EXPECT_GT(separated_before, 10);
}

TEST(DsepShare, TwoFeatureHandCount) {
  const Dag g({"X1", "X2", "Y"}, {{0, 2}});
  EXPECT_DOUBLE_EQ(dsep_share(g, 2, DsepShareExact{}), 0.5);
}

TEST(DsepShare, FullyConnectedIntoTargetIsZero) {
  const Dag g({"X1", "X2", "X3", "Y"}, {{0, 3}, {1, 3}, {2, 3}, {0, 1}, {1, 2}, {0, 2}});
  EXPECT_DOUBLE_EQ(dsep_share(g, 3, DsepShareExact{}), 0.0);
}

TEST(DsepShare, ExactCapEnforced) {
  const Dag g(labels_for(12), {});
  EXPECT_DSAGE_ERROR(dsep_share(g, 0, DsepShareExact{100}), ErrorKind::kTooLargeForExact);
  EXPECT_EQ(dsep_query_count(11), 11u << 10);
}

TEST(DsepShare, MonteCarloApproachesExact) {
  std::mt19937_64 rng(2);
  const Dag g = random_test_dag(8, 0.35, rng);
  const double exact = dsep_share(g, 0, DsepShareExact{});
  const double mc = dsep_share(g, 0, DsepShareMonteCarlo{200000, 4});
  // Binomial sampling of sizes weights every subset equally, so both target
  // the same share.
  EXPECT_NEAR(mc, exact, 5.0 * std::sqrt(0.25 / 200000.0));
}

TEST(FeatureQuery, SizeFollowsBinomialMean) {
  const std::vector<std::size_t> features{0, 1, 2, 3, 4, 5, 6, 7, 8};
  Rng rng = make_rng(99);
  const int draws = 1000000;
  double sum = 0.0;
  for (int i = 0; i < draws; ++i) {
    const auto q = sample_feature_query(features, rng);
    ASSERT_EQ(std::count(q.cond_set.begin(), q.cond_set.end(), q.feature), 0);
    sum += static_cast<double>(q.cond_set.size());
  }
  const double p1 = static_cast<double>(features.size() - 1);
  const double sigma = std::sqrt(p1 * 0.25 / draws);
  EXPECT_NEAR(sum / draws, p1 / 2.0, 3.0 * sigma);
}

TEST(GraphFormats, EdgeListRoundTrip) {
  const Dag g({"a", "b", "c"}, {{0, 2}, {1, 2}});
  const std::string text = to_edge_list(g);
  EXPECT_EQ(text, "# nodes: a,b,c\na,c\nb,c\n");
  EXPECT_EQ(parse_edge_list(text), g);
}

TEST(GraphFormats, JsonRoundTrip) {
  const Dag g({"a", "b", "c"}, {{2, 0}, {1, 0}});
  EXPECT_EQ(parse_dag_json(to_json_string(g)), g);
}

TEST(GraphFormats, FileRoundTripBothFormats) {
  testing::TempDir dir("graph_formats");
  const Dag g({"x", "y", "z"}, {{0, 1}, {1, 2}});
  save_dag(g, dir.file("g.json"));
  save_dag(g, dir.file("g.txt"));
  EXPECT_EQ(load_dag(dir.file("g.json")), g);
  EXPECT_EQ(load_dag(dir.file("g.txt")), g);
}

TEST(GraphFormats, RejectsUnknownLabel) {
  EXPECT_DSAGE_ERROR(parse_edge_list("# nodes: a,b\na,q\n"), ErrorKind::kLabelMismatch);
}

}  // namespace
}  // namespace dsage
