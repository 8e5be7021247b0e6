#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "graphre/errors.hpp"
#include "graphre/synth.hpp"
#include "test_util.hpp"

using namespace graphre;
using namespace graphre::testutil;

TEST_SUITE_BEGIN("synth");

TEST_CASE("mu=0 produces no inter-community edges") {
  SyntheticSpec spec;
  spec.num_nodes = 120;
  spec.num_communities = 2;
  spec.mu = 0.0;
  spec.avg_degree = 8.0;
  spec.seed = 5;
  auto sg = generate(spec);
  for (auto e : sg.graph.edge_list()) {
    CHECK(sg.communities[e.u] == sg.communities[e.v]);
  }
  CHECK(mixing_fraction(sg.graph, sg.communities) == 0.0);
}

TEST_CASE("generation is deterministic per seed") {
  SyntheticSpec spec;
  spec.num_nodes = 80;
  spec.num_communities = 3;
  spec.mu = 0.08;
  spec.avg_degree = 6.0;
  spec.seed = 11;
  auto a = generate(spec);
  auto b = generate(spec);
  CHECK(a.graph.edge_list() == b.graph.edge_list());
  CHECK(a.graph.features() == b.graph.features());
  spec.seed = 12;
  auto c = generate(spec);
  CHECK(a.graph.edge_list() != c.graph.edge_list());
}

TEST_CASE("labels equal communities and features carry the community bit") {
  SyntheticSpec spec;
  spec.num_nodes = 60;
  spec.num_communities = 3;
  spec.mu = 0.05;
  spec.avg_degree = 5.0;
  spec.seed = 2;
  auto sg = generate(spec);
  CHECK(sg.graph.labels() == sg.communities);
  CHECK(sg.graph.num_classes() == 3);
  // 5% flip noise leaves the vast majority of community bits set.
  int set_bits = 0;
  for (int i = 0; i < 60; ++i) {
    set_bits += sg.graph.features()(i, sg.communities[i]) == 1.0;
  }
  CHECK(set_bits > 45);
}

TEST_CASE("measured mixing tracks the requested mu") {
  SyntheticSpec spec;
  spec.num_nodes = 500;
  spec.num_communities = 4;
  spec.mu = 0.10;
  spec.avg_degree = 10.0;
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    spec.seed = seed;
    auto sg = generate(spec);
    total += mixing_fraction(sg.graph, sg.communities);
  }
  double mean = total / 10.0;
  CHECK(mean > 0.07);
  CHECK(mean < 0.13);
}

TEST_CASE("generator rejects infeasible specs") {
  SyntheticSpec spec;
  spec.num_nodes = 50;
  spec.avg_degree = 50.0;
  CHECK_THROWS_AS(generate(spec), GenerationError);
  spec.avg_degree = 5.0;
  spec.mu = 0.1;
  spec.num_communities = 1;
  CHECK_THROWS_AS(generate(spec), GenerationError);
}

TEST_CASE("mixing_fraction closed-form cases") {
  SUBCASE("two disconnected cliques") {
    Graph g = two_cliques(12);
    std::vector<int> comm(12);
    for (int i = 0; i < 12; ++i) comm[i] = i < 6 ? 0 : 1;
    CHECK(mixing_fraction(g, comm) == 0.0);
  }
  SUBCASE("per-node 9 intra and 1 inter gives 0.1") {
    // Two K10 cliques plus a perfect matching across them.
    std::vector<std::pair<int, int>> edges;
    for (int a = 0; a < 10; ++a) {
      for (int b = a + 1; b < 10; ++b) {
        edges.emplace_back(a, b);
        edges.emplace_back(10 + a, 10 + b);
      }
      edges.emplace_back(a, 10 + a);
    }
    Graph g = make_graph(20, edges);
    std::vector<int> comm(20);
    for (int i = 0; i < 20; ++i) comm[i] = i < 10 ? 0 : 1;
    CHECK(mixing_fraction(g, comm) == doctest::Approx(0.1).epsilon(1e-12));
  }
  SUBCASE("complete bipartite graph is fully mixed") {
    std::vector<std::pair<int, int>> edges;
    for (int a = 0; a < 5; ++a) {
      for (int b = 5; b < 10; ++b) edges.emplace_back(a, b);
    }
    Graph g = make_graph(10, edges);
    std::vector<int> comm(10);
    for (int i = 0; i < 10; ++i) comm[i] = i < 5 ? 0 : 1;
    CHECK(mixing_fraction(g, comm) == 1.0);
  }
}

TEST_CASE("resource allocation scores") {
  SUBCASE("path candidate scores by the middle node degree") {
    Graph g = make_graph(3, {{0, 1}, {1, 2}});
    auto scored = link_prediction_scores(g);
    REQUIRE(scored.size() == 1);
    CHECK(scored[0].u == 0);
    CHECK(scored[0].v == 2);
    CHECK(scored[0].score == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("no common neighbors means all scores zero") {
    Graph g = make_graph(4, {{0, 1}, {2, 3}});
    for (const auto& s : link_prediction_scores(g)) CHECK(s.score == 0.0);
  }
}

TEST_CASE("ranking matches an exhaustive oracle on a 6-node graph") {
  Graph g = make_graph(6, {{0, 1}, {0, 2}, {1, 2}, {2, 3}, {3, 4}, {4, 5},
                           {1, 4}});
  auto scored = link_prediction_scores(g);

  // Oracle: direct evaluation of the definition for every non-edge.
  std::vector<ScoredPair> oracle;
  for (int u = 0; u < 6; ++u) {
    for (int v = u + 1; v < 6; ++v) {
      if (g.has_edge(u, v)) continue;
      double s = 0.0;
      for (int w : g.neighbors(u)) {
        if (g.has_edge(w, v)) s += 1.0 / g.degree(w);
      }
      oracle.push_back({u, v, s});
    }
  }
  std::stable_sort(oracle.begin(), oracle.end(),
                   [](const ScoredPair& a, const ScoredPair& b) {
                     if (a.score != b.score) return a.score > b.score;
                     if (a.u != b.u) return a.u < b.u;
                     return a.v < b.v;
                   });
  REQUIRE(scored.size() == oracle.size());
  for (std::size_t i = 0; i < scored.size(); ++i) {
    CHECK(scored[i].u == oracle[i].u);
    CHECK(scored[i].v == oracle[i].v);
    CHECK(scored[i].score == doctest::Approx(oracle[i].score).epsilon(1e-12));
  }
}

TEST_CASE("link prediction is permutation-equivariant") {
  Rng rng(31);
  Graph g = random_graph(10, 0.3, rng);
  std::vector<int> p(10);
  for (int i = 0; i < 10; ++i) p[i] = i;
  rng.shuffle(p);
  std::vector<std::pair<int, int>> edges;
  for (auto e : g.edge_list()) edges.emplace_back(p[e.u], p[e.v]);
  Graph gp = make_graph(10, edges);

  std::map<std::pair<int, int>, double> base, perm;
  for (const auto& s : link_prediction_scores(g)) {
    base[std::minmax(p[s.u], p[s.v])] = s.score;
  }
  for (const auto& s : link_prediction_scores(gp)) {
    perm[{s.u, s.v}] = s.score;
  }
  CHECK(base == perm);
}

TEST_CASE("structural regularity bounds and determinism") {
  SyntheticSpec spec;
  spec.num_nodes = 200;
  spec.num_communities = 4;
  spec.mu = 0.04;
  spec.avg_degree = 8.0;
  spec.seed = 3;
  auto sg = generate(spec);
  auto r1 = structural_regularity(sg.graph, 0.1, 17);
  auto r2 = structural_regularity(sg.graph, 0.1, 17);
  CHECK(r1.sigma_c >= 0.0);
  CHECK(r1.sigma_c <= 1.0);
  CHECK(r1.sigma_c == r2.sigma_c);
  CHECK(r1.removed_edges == r2.removed_edges);
  CHECK(r1.predicted_top.size() == r1.removed_edges.size());
  CHECK(r1.removed_edges.size() ==
        static_cast<std::size_t>(std::ceil(0.1 * sg.graph.num_edges())));
}

TEST_CASE("structural regularity rejects tiny graphs") {
  Graph g = make_graph(4, {{0, 1}, {1, 2}, {2, 3}});
  CHECK_THROWS_AS(structural_regularity(g, 0.1, 1), ValidationError);
}

TEST_CASE("sigma_c hits the closed-form extremes") {
  // A clique recovers its removed edges: every removed pair has the maximal
  // number of common neighbors, and no other non-edge exists.
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < 8; ++u) {
    for (int v = u + 1; v < 8; ++v) edges.emplace_back(u, v);
  }
  Graph clique = make_graph(8, edges);
  auto r = structural_regularity(clique, 0.2, 9);
  CHECK(r.sigma_c == 1.0);

  // A long cycle leaves no common neighbors after removals, and the
  // lexicographic tie-break ranks far-apart pairs ahead of the removed ones
  // only by accident; use a graph where removed edges cannot be recovered:
  // a star plus pendant chain has zero-score candidates everywhere.
  std::vector<std::pair<int, int>> ring;
  for (int i = 0; i < 40; ++i) ring.emplace_back(i, (i + 1) % 40);
  Graph cyc = make_graph(40, ring);
  auto rc = structural_regularity(cyc, 0.25, 4);
  // All candidate scores are 0 or tiny; recovery is near-chance.
  CHECK(rc.sigma_c <= 0.2);
}

TEST_CASE("sigma_c decreases from low to high mu") {
  auto mean_sigma = [](double mu) {
    SyntheticSpec spec;
    spec.num_nodes = 300;
    spec.num_communities = 4;
    spec.mu = mu;
    spec.avg_degree = 10.0;
    double total = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
      spec.seed = s;
      auto sg = generate(spec);
      total += structural_regularity(sg.graph, 0.1, 100 + s).sigma_c;
    }
    return total / 5.0;
  };
  CHECK(mean_sigma(0.02) > mean_sigma(0.10));
}

TEST_SUITE_END();
