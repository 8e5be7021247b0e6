#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace graphre {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Unordered node pair, stored with u < v.
struct Edge {
  int u = 0;
  int v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Symmetric sparse matrix in CSR form.
struct SparseSym {
  int n = 0;
  std::vector<int> row_ptr;
  std::vector<int> col;
  std::vector<double> val;

  // this * h, single-threaded and deterministic.
  Matrix multiply(const Matrix& h) const;
  Matrix dense() const;
};

// Immutable attributed undirected simple graph. Adjacency is kept as sorted
// neighbor lists; features are dense N x D; labels are class ids in
// [0, num_classes).
class Graph {
 public:
  Graph(int num_nodes, const std::vector<std::pair<int, int>>& edges,
        Matrix features, std::vector<int> labels, int num_classes);

  int num_nodes() const { return num_nodes_; }
  int num_edges() const { return num_edges_; }
  int num_classes() const { return num_classes_; }
  int feature_dim() const { return static_cast<int>(features_.cols()); }

  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }

  bool has_edge(int u, int v) const;
  const std::vector<int>& neighbors(int u) const { return adj_[u]; }
  int degree(int u) const { return static_cast<int>(adj_[u].size()); }

  // All edges as (u, v) with u < v, in lexicographic order.
  std::vector<Edge> edge_list() const;

  // Dense 0/1 adjacency; only for small graphs and relaxed attacks.
  Matrix dense_adjacency() const;

 private:
  int num_nodes_;
  int num_edges_;
  int num_classes_;
  std::vector<std::vector<int>> adj_;
  Matrix features_;
  std::vector<int> labels_;
};

struct NodeSplit {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

struct LoadedGraph {
  Graph graph;
  std::size_t self_loops_dropped = 0;
  std::size_t duplicates_dropped = 0;
};

// Reads the three-file on-disk format: an edge list ("u v" per line, '#'
// comments), a feature CSV (row i = node i) and a label CSV with header
// "node,label". Directed input pairs are symmetrized; duplicate edges
// collapse; self-loops are dropped and counted.
LoadedGraph load_graph(const std::filesystem::path& edge_path,
                       const std::filesystem::path& feature_path,
                       const std::filesystem::path& label_path);

// Canonical file names inside a dataset directory.
LoadedGraph load_graph_dir(const std::filesystem::path& dir);

// Inverse of load_graph: writes edges.txt, features.csv, labels.csv into dir.
// Feature values are printed with enough digits to round-trip exactly.
void save_graph(const Graph& g, const std::filesystem::path& dir);

// Returns a copy of g with the membership of {u, v} toggled.
Graph flip_edge(const Graph& g, int u, int v);

// Stratified split: per-class proportional via largest remainder, total
// |train| = floor(train_frac * N), |val| = floor(val_frac * N), rest test.
// Deterministic for a fixed seed.
NodeSplit split_nodes(const Graph& g, double train_frac, double val_frac,
                      std::uint64_t seed);

// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
SparseSym normalized_adjacency(const Graph& g);

// A + I in CSR form (sum aggregation operator).
SparseSym self_loop_adjacency(const Graph& g);

std::vector<int> degree_vector(const Graph& g);

}  // namespace graphre
