// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <map>

#include "doctest.h"
#include "fixtures.hpp"
#include "kge/graph_index.hpp"

using namespace kge;
using kge::testing::edges_to_triples;
using kge::testing::random_edges;

namespace {

StructureIndex path_abc() {
  const std::vector<Triple> t = {{0, 0, 1}, {1, 0, 2}};
  return StructureIndex(3, t);
}

}  // namespace

TEST_CASE("parallel relations collapse to one edge") {
  const std::vector<Triple> t = {{0, 0, 1}, {0, 1, 1}, {1, 0, 0}};
  const StructureIndex idx(2, t);
  CHECK(idx.edge_count() == 1);
  CHECK(idx.has_edge(0, 1));
  CHECK(idx.has_edge(1, 0));
  CHECK(idx.average_degree() == 1.0);
}

TEST_CASE("self-loops are not edges") {
  const std::vector<Triple> t = {{0, 0, 0}, {0, 0, 1}};
  const StructureIndex idx(2, t);
  CHECK(idx.edge_count() == 1);
  CHECK_FALSE(idx.has_edge(0, 0));
}

TEST_CASE("path graph adjacency and distances") {
  const auto idx = path_abc();
  const auto adj = idx.neighbors(1);
  CHECK(std::vector<EntityId>(adj.begin(), adj.end()) == std::vector<EntityId>{0, 2});
  CHECK(shortest_path_length(idx, 0, 0) == 0);
  CHECK(shortest_path_length(idx, 0, 1) == 1);
  CHECK(shortest_path_length(idx, 0, 2) == 2);
  CHECK_FALSE(shortest_path_length(idx, 0, 2, 1).has_value());
  CHECK_THROWS_AS(shortest_path_length(idx, 0, 2, 0), Error);
  CHECK_THROWS_AS(shortest_path_length(idx, 0, 7), Error);
}

TEST_CASE("index is built from training triples only") {
  const auto kg = kge::testing::graph_from({{"a", "r", "b"}}, {{"b", "r", "c"}}, {{"c", "r", "a"}});
  const auto idx = build_structure_index(kg);
  CHECK(idx.entity_count() == 3);
  CHECK(idx.edge_count() == 1);
  CHECK_FALSE(shortest_path_length(idx, 0, 2).has_value());
}

TEST_CASE("neighborhoods of a path and an isolated node") {
  const std::vector<Triple> t = {{0, 0, 1}, {1, 0, 2}};
  const StructureIndex idx(4, t);
  const auto nb = two_hop_neighborhoods(idx, 0);
  CHECK(nb.n1 == std::vector<EntityId>{1});
  CHECK(nb.n2 == std::vector<EntityId>{2});
  const auto iso = two_hop_neighborhoods(idx, 3);
  CHECK(iso.n1.empty());
  CHECK(iso.n2.empty());
  CHECK(alpha_distribution(idx, 3).empty());
}

TEST_CASE("alpha on a path and a star") {
  const auto a = alpha_distribution(path_abc(), 0);
  CHECK(a.probability(1) == 0.5);
  CHECK(a.probability(2) == 0.5);
  CHECK(a.probability(0) == 0.0);

  const std::vector<Triple> star = {{0, 0, 1}, {0, 0, 2}, {0, 0, 3}};
  const StructureIndex idx(4, star);
  const auto nb = two_hop_neighborhoods(idx, 0);
  CHECK(nb.n2.empty());
  const auto s = alpha_distribution(idx, 0);
  for (EntityId e : {1, 2, 3}) CHECK(s.probability(e) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("BFS and neighborhoods agree with Floyd-Warshall on random graphs") {
  Rng rng(2024);
  for (int g = 0; g < 50; ++g) {
    const int n = 2 + static_cast<int>(rng.below(49));
    const double p = rng.uniform(0.0, 4.0 / n);
    const auto edges = random_edges(rng, n, p);
    const auto triples = edges_to_triples(edges);
    const StructureIndex idx(static_cast<std::size_t>(n), triples);
    const auto dist = oracle::floyd_warshall(static_cast<std::size_t>(n), edges);
    BfsWorkspace ws(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
      ws.run(idx, s, n);
      const auto nb = two_hop_neighborhoods(idx, s);
      std::vector<EntityId> n1, n2;
      for (int t = 0; t < n; ++t) {
        const auto d = ws.distance(t);
        CHECK(d.value_or(-1) == dist[s][t]);
        CHECK(shortest_path_length(idx, s, t, n).value_or(-1) == dist[s][t]);
        if (dist[s][t] == 1) n1.push_back(t);
        if (dist[s][t] == 2) n2.push_back(t);
      }
      CHECK(nb.n1 == n1);
      CHECK(nb.n2 == n2);
      const auto alpha = alpha_distribution(idx, s);
      if (!alpha.empty()) {
        double total = 0.0;
        for (int t = 0; t < n; ++t) total += alpha.probability(t);
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("distances are symmetric and satisfy the triangle inequality") {
  Rng rng(77);
  const int n = 40;
  const auto edges = random_edges(rng, n, 0.06);
  const StructureIndex idx(n, edges_to_triples(edges));
  for (int i = 0; i < 500; ++i) {
    const auto a = static_cast<EntityId>(rng.below(n));
    const auto b = static_cast<EntityId>(rng.below(n));
    const auto c = static_cast<EntityId>(rng.below(n));
    const auto ab = shortest_path_length(idx, a, b, n), ba = shortest_path_length(idx, b, a, n);
    CHECK(ab == ba);
    const auto bc = shortest_path_length(idx, b, c, n), ac = shortest_path_length(idx, a, c, n);
    if (ab && bc && ac) CHECK(*ac <= *ab + *bc);
  }
}

TEST_CASE("alpha samples stay within two hops and are uniform") {
  Rng rng(5);
  const int n = 30;
  const auto edges = random_edges(rng, n, 0.08);
  const StructureIndex idx(n, edges_to_triples(edges));
  for (EntityId h = 0; h < n; ++h) {
    const auto alpha = alpha_distribution(idx, h);
    if (alpha.empty()) continue;
    std::map<EntityId, int> counts;
    for (int i = 0; i < 2000; ++i) {
      const EntityId s = alpha.sample(rng);
      const auto d = shortest_path_length(idx, h, s);
      REQUIRE(d.has_value());
      CHECK((*d == 1 || *d == 2));
      ++counts[s];
    }
    CHECK(counts.size() <= alpha.support().size());
  }
}

TEST_CASE("neighborhood cache returns the computed sets and evicts LRU") {
  const auto idx = path_abc();
  NeighborhoodCache cache(idx, 2);
  const auto a = cache.get(0);
  CHECK(a->n1 == std::vector<EntityId>{1});
  CHECK(cache.get(0) == a);
  CHECK(cache.hits() == 1);
  cache.get(1);
  cache.get(2);
  CHECK(cache.size() == 2);
  const auto again = cache.get(0);
  CHECK(again != a);
  CHECK(again->n2 == a->n2);
  CHECK(cache.misses() == 4);
}
