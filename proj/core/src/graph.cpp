#include "graphre/graph.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "graphre/errors.hpp"
#include "graphre/rng.hpp"

namespace graphre {

Matrix SparseSym::multiply(const Matrix& h) const {
  Matrix out = Matrix::Zero(n, h.cols());
  for (int i = 0; i < n; ++i) {
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
      out.row(i) += val[k] * h.row(col[k]);
    }
  }
  return out;
}

Matrix SparseSym::dense() const {
  Matrix out = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
      out(i, col[k]) = val[k];
    }
  }
  return out;
}

Graph::Graph(int num_nodes, const std::vector<std::pair<int, int>>& edges,
             Matrix features, std::vector<int> labels, int num_classes)
    : num_nodes_(num_nodes),
      num_classes_(num_classes),
      features_(std::move(features)),
      labels_(std::move(labels)) {
  if (num_nodes < 0) throw ValidationError("num_nodes must be non-negative");
  if (features_.rows() != num_nodes) {
    throw ValidationError("feature matrix has " +
                          std::to_string(features_.rows()) + " rows for " +
                          std::to_string(num_nodes) + " nodes");
  }
  if (static_cast<int>(labels_.size()) != num_nodes) {
    throw ValidationError("label vector length does not match num_nodes");
  }
  for (int i = 0; i < num_nodes; ++i) {
    if (labels_[i] < 0 || labels_[i] >= num_classes_) {
      throw ValidationError("label " + std::to_string(labels_[i]) +
                            " of node " + std::to_string(i) +
                            " outside [0, " + std::to_string(num_classes_) +
                            ")");
    }
  }
  adj_.assign(num_nodes, {});
  std::vector<Edge> uniq;
  uniq.reserve(edges.size());
  for (auto [u, v] : edges) {
    if (u == v) throw ValidationError("self-loop on node " + std::to_string(u));
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes) {
      throw ValidationError("edge endpoint out of range: (" +
                            std::to_string(u) + ", " + std::to_string(v) + ")");
    }
    uniq.push_back({std::min(u, v), std::max(u, v)});
  }
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  for (auto e : uniq) {
    adj_[e.u].push_back(e.v);
    adj_[e.v].push_back(e.u);
  }
  for (auto& nbrs : adj_) std::sort(nbrs.begin(), nbrs.end());
  num_edges_ = static_cast<int>(uniq.size());
}

bool Graph::has_edge(int u, int v) const {
  if (u < 0 || v < 0 || u >= num_nodes_ || v >= num_nodes_) return false;
  const auto& nbrs = adj_[u];
  return std::binary_search(nbrs.begin(), nbrs.end(), v);
}

std::vector<Edge> Graph::edge_list() const {
  std::vector<Edge> edges;
  edges.reserve(num_edges_);
  for (int u = 0; u < num_nodes_; ++u) {
    for (int v : adj_[u]) {
      if (v > u) edges.push_back({u, v});
    }
  }
  return edges;
}

Matrix Graph::dense_adjacency() const {
  Matrix a = Matrix::Zero(num_nodes_, num_nodes_);
  for (int u = 0; u < num_nodes_; ++u) {
    for (int v : adj_[u]) a(u, v) = 1.0;
  }
  return a;
}

namespace {

bool is_blank_or_comment(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

std::vector<double> parse_csv_row(const std::string& line,
                                  const std::string& file, int line_no) {
  std::vector<double> row;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t comma = line.find(',', pos);
    if (comma == std::string::npos) comma = line.size();
    std::string cell = line.substr(pos, comma - pos);
    try {
      std::size_t used = 0;
      double x = std::stod(cell, &used);
      row.push_back(x);
    } catch (const std::exception&) {
      throw ParseError(file + ":" + std::to_string(line_no) +
                       ": cannot parse value '" + cell + "'");
    }
    if (comma == line.size()) break;
    pos = comma + 1;
  }
  return row;
}

}  // namespace

LoadedGraph load_graph(const std::filesystem::path& edge_path,
                       const std::filesystem::path& feature_path,
                       const std::filesystem::path& label_path) {
  // Features first: their row count defines N.
  std::ifstream ff(feature_path);
  if (!ff) throw ParseError("cannot open " + feature_path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(ff, line)) {
    ++line_no;
    if (line.empty()) continue;
    rows.push_back(parse_csv_row(line, feature_path.string(), line_no));
    if (rows.size() > 1 && rows.back().size() != rows.front().size()) {
      throw ParseError(feature_path.string() + ":" + std::to_string(line_no) +
                       ": inconsistent column count");
    }
  }
  const int n = static_cast<int>(rows.size());
  const int d = n > 0 ? static_cast<int>(rows.front().size()) : 0;
  Matrix features(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) features(i, j) = rows[i][j];
  }

  // Labels: "node,label" with header.
  std::ifstream lf(label_path);
  if (!lf) throw ParseError("cannot open " + label_path.string());
  std::vector<int> labels(n, -1);
  line_no = 0;
  bool saw_header = false;
  while (std::getline(lf, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (!saw_header) {
      saw_header = true;  // "node,label"
      continue;
    }
    std::istringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b)) {
      throw ParseError(label_path.string() + ":" + std::to_string(line_no) +
                       ": expected 'node,label'");
    }
    int node, label;
    try {
      node = std::stoi(a);
      label = std::stoi(b);
    } catch (const std::exception&) {
      throw ParseError(label_path.string() + ":" + std::to_string(line_no) +
                       ": cannot parse 'node,label' from '" + line + "'");
    }
    if (node < 0 || node >= n) {
      throw ValidationError(label_path.string() + ":" +
                            std::to_string(line_no) + ": node id " +
                            std::to_string(node) + " out of range");
    }
    if (label < 0) {
      throw ValidationError(label_path.string() + ":" +
                            std::to_string(line_no) + ": label out of range");
    }
    labels[node] = label;
  }
  int num_classes = 0;
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0) {
      throw ValidationError(label_path.string() + ": no label for node " +
                            std::to_string(i));
    }
    num_classes = std::max(num_classes, labels[i] + 1);
  }

  // Edge list.
  std::ifstream ef(edge_path);
  if (!ef) throw ParseError("cannot open " + edge_path.string());
  std::vector<std::pair<int, int>> edges;
  std::size_t self_loops = 0;
  std::set<std::pair<int, int>> seen;
  std::size_t duplicates = 0;
  line_no = 0;
  while (std::getline(ef, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    std::istringstream ss(line);
    long long u, v;
    if (!(ss >> u >> v)) {
      throw ParseError(edge_path.string() + ":" + std::to_string(line_no) +
                       ": expected 'u v'");
    }
    if (u < 0 || v < 0 || u >= n || v >= n) {
      throw ValidationError(edge_path.string() + ":" +
                            std::to_string(line_no) + ": node id out of range");
    }
    if (u == v) {
      ++self_loops;
      continue;
    }
    auto key = std::minmax(static_cast<int>(u), static_cast<int>(v));
    if (!seen.insert(key).second) {
      ++duplicates;
      continue;
    }
    edges.emplace_back(key.first, key.second);
  }

  return LoadedGraph{Graph(n, edges, std::move(features), std::move(labels),
                           std::max(num_classes, 1)),
                     self_loops, duplicates};
}

LoadedGraph load_graph_dir(const std::filesystem::path& dir) {
  return load_graph(dir / "edges.txt", dir / "features.csv",
                    dir / "labels.csv");
}

void save_graph(const Graph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "edges.txt");
    if (!out) throw Error("cannot write " + (dir / "edges.txt").string());
    for (auto e : g.edge_list()) out << e.u << ' ' << e.v << '\n';
  }
  {
    std::ofstream out(dir / "features.csv");
    if (!out) throw Error("cannot write " + (dir / "features.csv").string());
    char buf[64];
    const auto& x = g.features();
    for (int i = 0; i < x.rows(); ++i) {
      for (int j = 0; j < x.cols(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", x(i, j));
        out << (j ? "," : "") << buf;
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "labels.csv");
    if (!out) throw Error("cannot write " + (dir / "labels.csv").string());
    out << "node,label\n";
    for (int i = 0; i < g.num_nodes(); ++i) {
      out << i << ',' << g.labels()[i] << '\n';
    }
  }
}

Graph flip_edge(const Graph& g, int u, int v) {
  if (u == v) throw ValidationError("invalid flip: self-loop on node " +
                                    std::to_string(u));
  if (u < 0 || v < 0 || u >= g.num_nodes() || v >= g.num_nodes()) {
    throw ValidationError("invalid flip: node id out of range");
  }
  auto edges = g.edge_list();
  Edge e{std::min(u, v), std::max(u, v)};
  if (g.has_edge(u, v)) {
    edges.erase(std::remove(edges.begin(), edges.end(), e), edges.end());
  } else {
    edges.push_back(e);
  }
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(edges.size());
  for (auto ed : edges) pairs.emplace_back(ed.u, ed.v);
  return Graph(g.num_nodes(), pairs, g.features(), g.labels(),
               g.num_classes());
}

namespace {

// Largest-remainder apportionment of `total` across class counts.
std::vector<int> apportion(const std::vector<int>& class_sizes, double frac,
                           int total) {
  const int c = static_cast<int>(class_sizes.size());
  std::vector<int> out(c, 0);
  std::vector<std::pair<double, int>> rema;
  int assigned = 0;
  for (int k = 0; k < c; ++k) {
    double quota = frac * class_sizes[k];
    out[k] = static_cast<int>(std::floor(quota));
    out[k] = std::min(out[k], class_sizes[k]);
    assigned += out[k];
    rema.emplace_back(quota - std::floor(quota), k);
  }
  std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; assigned < total && i < rema.size(); ++i) {
    int k = rema[i].second;
    if (out[k] < class_sizes[k]) {
      ++out[k];
      ++assigned;
    }
  }
  return out;
}

}  // namespace

NodeSplit split_nodes(const Graph& g, double train_frac, double val_frac,
                      std::uint64_t seed) {
  if (train_frac <= 0 || val_frac <= 0 || train_frac + val_frac >= 1.0) {
    throw SplitError("fractions must be positive and sum below 1");
  }
  const int n = g.num_nodes();
  const int c = g.num_classes();
  std::vector<std::vector<int>> by_class(c);
  for (int i = 0; i < n; ++i) by_class[g.labels()[i]].push_back(i);

  std::vector<int> class_sizes(c);
  for (int k = 0; k < c; ++k) class_sizes[k] = static_cast<int>(by_class[k].size());

  const int total_train = static_cast<int>(std::floor(train_frac * n));
  const int total_val = static_cast<int>(std::floor(val_frac * n));
  auto train_per_class = apportion(class_sizes, train_frac, total_train);

  std::vector<int> left_sizes(c);
  for (int k = 0; k < c; ++k) left_sizes[k] = class_sizes[k] - train_per_class[k];
  const double val_quota =
      static_cast<double>(total_val) / std::max(1, n - total_train);
  auto val_per_class = apportion(left_sizes, val_quota, total_val);

  NodeSplit split;
  for (int k = 0; k < c; ++k) {
    if (class_sizes[k] > 0 && train_per_class[k] == 0) {
      throw SplitError("class " + std::to_string(k) +
                       " has zero training nodes after stratification");
    }
    auto nodes = by_class[k];
    Rng rng = Rng::fork(seed, 0x517ull + k);
    rng.shuffle(nodes);
    int t = train_per_class[k];
    int v = std::min(val_per_class[k], left_sizes[k]);
    split.train.insert(split.train.end(), nodes.begin(), nodes.begin() + t);
    split.val.insert(split.val.end(), nodes.begin() + t, nodes.begin() + t + v);
    split.test.insert(split.test.end(), nodes.begin() + t + v, nodes.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

namespace {

SparseSym adjacency_csr(const Graph& g, bool normalized) {
  const int n = g.num_nodes();
  SparseSym s;
  s.n = n;
  s.row_ptr.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) s.row_ptr[i + 1] = s.row_ptr[i] + g.degree(i) + 1;
  s.col.resize(s.row_ptr[n]);
  s.val.resize(s.row_ptr[n]);
  std::vector<double> dinv;
  if (normalized) {
    dinv.resize(n);
    for (int i = 0; i < n; ++i) dinv[i] = 1.0 / std::sqrt(g.degree(i) + 1.0);
  }
  for (int i = 0; i < n; ++i) {
    int k = s.row_ptr[i];
    bool placed_self = false;
    auto put = [&](int j) {
      s.col[k] = j;
      s.val[k] = normalized ? dinv[i] * dinv[j] : 1.0;
      ++k;
    };
    for (int j : g.neighbors(i)) {
      if (!placed_self && j > i) {
        put(i);
        placed_self = true;
      }
      put(j);
    }
    if (!placed_self) put(i);
  }
  return s;
}

}  // namespace

SparseSym normalized_adjacency(const Graph& g) { return adjacency_csr(g, true); }

SparseSym self_loop_adjacency(const Graph& g) { return adjacency_csr(g, false); }

std::vector<int> degree_vector(const Graph& g) {
  std::vector<int> d(g.num_nodes());
  for (int i = 0; i < g.num_nodes(); ++i) d[i] = g.degree(i);
  return d;
}

}  // namespace graphre
