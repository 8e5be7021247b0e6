#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "graphre/errors.hpp"
#include "graphre/graph.hpp"
#include "graphre/rng.hpp"

using namespace graphre;
namespace fs = std::filesystem;

namespace {

Graph make_graph(int n, std::vector<std::pair<int, int>> edges,
                 int num_classes = 2) {
  Matrix x = Matrix::Zero(n, 3);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    labels[i] = i % num_classes;
    x(i, i % 3) = 1.0;
  }
  return Graph(n, edges, x, labels, num_classes);
}

Graph random_graph(int n, double p, Rng& rng) {
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (rng.bernoulli(p)) edges.emplace_back(u, v);
    }
  }
  return make_graph(n, edges);
}

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("graphre_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE_BEGIN("graph");

TEST_CASE("load_graph collapses duplicates and symmetrizes") {
  auto dir = temp_dir("load_dup");
  {
    std::ofstream e(dir / "edges.txt");
    e << "0 1\n1 2\n2 1\n";
    std::ofstream f(dir / "features.csv");
    f << "1.0\n0.0\n1.0\n";
    std::ofstream l(dir / "labels.csv");
    l << "node,label\n0,0\n1,1\n2,0\n";
  }
  auto loaded = load_graph_dir(dir);
  CHECK(loaded.graph.num_nodes() == 3);
  CHECK(loaded.graph.num_edges() == 2);
  CHECK(loaded.graph.has_edge(0, 1));
  CHECK(loaded.graph.has_edge(1, 2));
  CHECK(!loaded.graph.has_edge(0, 2));
  CHECK(loaded.duplicates_dropped == 1);
}

TEST_CASE("load_graph drops self-loops with a warning count") {
  auto dir = temp_dir("load_selfloop");
  {
    std::ofstream e(dir / "edges.txt");
    e << "# comment line\n0 1\n2 2\n";
    std::ofstream f(dir / "features.csv");
    f << "1\n0\n1\n";
    std::ofstream l(dir / "labels.csv");
    l << "node,label\n0,0\n1,0\n2,1\n";
  }
  auto loaded = load_graph_dir(dir);
  CHECK(loaded.graph.num_edges() == 1);
  CHECK(!loaded.graph.has_edge(2, 2));
  CHECK(loaded.self_loops_dropped == 1);
}

TEST_CASE("load_graph error paths") {
  auto dir = temp_dir("load_err");
  {
    std::ofstream e(dir / "edges.txt");
    e << "0 7\n";
    std::ofstream f(dir / "features.csv");
    f << "1\n0\n";
    std::ofstream l(dir / "labels.csv");
    l << "node,label\n0,0\n1,1\n";
  }
  CHECK_THROWS_AS(load_graph_dir(dir), ValidationError);
  {
    std::ofstream e(dir / "edges.txt");
    e << "0 not_a_node\n";
  }
  CHECK_THROWS_AS(load_graph_dir(dir), ParseError);
  {
    std::ofstream e(dir / "edges.txt");
    e << "0 1\n";
    std::ofstream l(dir / "labels.csv");
    l << "node,label\n0,-1\n1,0\n";
  }
  CHECK_THROWS_AS(load_graph_dir(dir), ValidationError);
}

TEST_CASE("save/load round-trips exactly") {
  Matrix x(4, 2);
  x << 0.125, -3.75, 1.0 / 3.0, 2.718281828459045, -0.0, 1e-17, 7.0, 0.3;
  Graph g(4, {{0, 1}, {1, 2}, {0, 3}}, x, {0, 1, 1, 0}, 2);
  auto dir = temp_dir("roundtrip");
  save_graph(g, dir);
  auto loaded = load_graph_dir(dir);
  CHECK(loaded.graph.num_nodes() == 4);
  CHECK(loaded.graph.edge_list() == g.edge_list());
  CHECK(loaded.graph.labels() == g.labels());
  CHECK(loaded.graph.features() == g.features());
}

TEST_CASE("flip_edge toggles membership") {
  Graph p3 = make_graph(3, {{0, 1}, {1, 2}});
  Graph tri = flip_edge(p3, 0, 2);
  CHECK(tri.num_edges() == 3);
  CHECK(tri.has_edge(0, 2));
  Graph back = flip_edge(tri, 0, 2);
  CHECK(back.num_edges() == 2);
  CHECK(!back.has_edge(0, 2));
  CHECK_THROWS_AS(flip_edge(p3, 1, 1), ValidationError);
}

TEST_CASE("flip_edge is an involution on random graphs") {
  Rng rng(11);
  for (int it = 0; it < 20; ++it) {
    Graph g = random_graph(8, 0.3, rng);
    int u = static_cast<int>(rng.below(8));
    int v = static_cast<int>(rng.below(8));
    if (u == v) continue;
    Graph twice = flip_edge(flip_edge(g, u, v), u, v);
    CHECK(twice.edge_list() == g.edge_list());
  }
}

TEST_CASE("split_nodes sizes and determinism") {
  Graph g = make_graph(100, {}, 2);
  NodeSplit s1 = split_nodes(g, 0.1, 0.1, 7);
  CHECK(s1.train.size() == 10);
  CHECK(s1.val.size() == 10);
  CHECK(s1.test.size() == 80);
  NodeSplit s2 = split_nodes(g, 0.1, 0.1, 7);
  CHECK(s1.train == s2.train);
  CHECK(s1.val == s2.val);
  CHECK(s1.test == s2.test);
  NodeSplit s3 = split_nodes(g, 0.1, 0.1, 8);
  CHECK(s1.train != s3.train);
}

TEST_CASE("split_nodes is stratified") {
  // 60/40 class balance; train picks must mirror it.
  Matrix x = Matrix::Zero(100, 1);
  std::vector<int> labels(100);
  for (int i = 0; i < 100; ++i) labels[i] = i < 60 ? 0 : 1;
  Graph g(100, {}, x, labels, 2);
  NodeSplit s = split_nodes(g, 0.2, 0.1, 5);
  int c0 = 0;
  for (int i : s.train) c0 += labels[i] == 0;
  CHECK(s.train.size() == 20);
  CHECK(c0 == 12);
}

TEST_CASE("split_nodes rejects starved classes") {
  Graph g = make_graph(10, {}, 7);
  CHECK_THROWS_AS(split_nodes(g, 0.1, 0.1, 3), SplitError);
}

TEST_CASE("normalized adjacency values") {
  SUBCASE("single node") {
    Graph g = make_graph(1, {});
    auto s = normalized_adjacency(g);
    CHECK(s.dense()(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("two connected nodes") {
    Graph g = make_graph(2, {{0, 1}});
    Matrix d = normalized_adjacency(g).dense();
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        CHECK(d(i, j) == doctest::Approx(0.5).epsilon(1e-12));
      }
    }
  }
  SUBCASE("path entry") {
    Graph g = make_graph(3, {{0, 1}, {1, 2}});
    Matrix d = normalized_adjacency(g).dense();
    CHECK(d(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-12));
    CHECK(d(0, 1) == doctest::Approx(0.40825).epsilon(1e-4));
  }
}

TEST_CASE("normalized adjacency row sums on regular graphs") {
  // 4-cycle: every node degree 2, rows must sum to 1.
  Graph g = make_graph(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  Matrix d = normalized_adjacency(g).dense();
  for (int i = 0; i < 4; ++i) {
    CHECK(d.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("degree_vector") {
  CHECK(degree_vector(make_graph(3, {{0, 1}, {1, 2}})) ==
        std::vector<int>{1, 2, 1});
  CHECK(degree_vector(make_graph(4, {})) == std::vector<int>{0, 0, 0, 0});
  CHECK(degree_vector(make_graph(4, {{0, 1}, {0, 2}, {0, 3}})) ==
        std::vector<int>{3, 1, 1, 1});
}

TEST_SUITE_END();
