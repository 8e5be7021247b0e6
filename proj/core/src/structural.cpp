#include "graphre/structural.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>

#include "graphre/errors.hpp"

namespace graphre {

const std::vector<std::string> kNodeMeasures = {"D",  "C",  "DC", "BC",
                                                "CC", "EC", "KC", "ND"};
const std::vector<std::string> kEdgeMeasures = {"EBC", "ELC"};

namespace {

struct BfsState {
  std::vector<int> dist;
  std::vector<double> sigma;          // shortest-path counts from the source
  std::vector<std::vector<int>> pred;  // DAG predecessors
  std::vector<int> order;              // nodes in nondecreasing distance
};

BfsState bfs_dag(const Graph& g, int s) {
  const int n = g.num_nodes();
  BfsState st;
  st.dist.assign(n, -1);
  st.sigma.assign(n, 0.0);
  st.pred.assign(n, {});
  st.order.reserve(n);
  std::queue<int> q;
  st.dist[s] = 0;
  st.sigma[s] = 1.0;
  q.push(s);
  while (!q.empty()) {
    int v = q.front();
    q.pop();
    st.order.push_back(v);
    for (int w : g.neighbors(v)) {
      if (st.dist[w] < 0) {
        st.dist[w] = st.dist[v] + 1;
        q.push(w);
      }
      if (st.dist[w] == st.dist[v] + 1) {
        st.sigma[w] += st.sigma[v];
        st.pred[w].push_back(v);
      }
    }
  }
  return st;
}

std::vector<double> betweenness(const Graph& g) {
  const int n = g.num_nodes();
  std::vector<double> bc(n, 0.0);
  for (int s = 0; s < n; ++s) {
    BfsState st = bfs_dag(g, s);
    std::vector<double> delta(n, 0.0);
    for (auto it = st.order.rbegin(); it != st.order.rend(); ++it) {
      int w = *it;
      for (int v : st.pred[w]) {
        delta[v] += st.sigma[v] / st.sigma[w] * (1.0 + delta[w]);
      }
      if (w != s) bc[w] += delta[w];
    }
  }
  // Each unordered pair was counted from both endpoints.
  const double pairs = (n - 1.0) * (n - 2.0) / 2.0;
  for (auto& x : bc) x = pairs > 0 ? x / 2.0 / pairs : 0.0;
  return bc;
}

std::map<Edge, double> edge_betweenness(const Graph& g) {
  const int n = g.num_nodes();
  std::map<Edge, double> ebc;
  for (auto e : g.edge_list()) ebc[e] = 0.0;
  for (int s = 0; s < n; ++s) {
    BfsState st = bfs_dag(g, s);
    std::vector<double> delta(n, 0.0);
    for (auto it = st.order.rbegin(); it != st.order.rend(); ++it) {
      int w = *it;
      for (int v : st.pred[w]) {
        double c = st.sigma[v] / st.sigma[w] * (1.0 + delta[w]);
        ebc[{std::min(v, w), std::max(v, w)}] += c;
        delta[v] += c;
      }
    }
  }
  const double pairs = n * (n - 1.0) / 2.0;
  for (auto& [e, x] : ebc) x = pairs > 0 ? x / 2.0 / pairs : 0.0;
  return ebc;
}

// Unnormalized full path counts: for every unordered pair (s, t), the number
// of shortest s-t paths traversing the edge.
std::map<Edge, double> edge_load(const Graph& g) {
  const int n = g.num_nodes();
  std::map<Edge, double> load;
  for (auto e : g.edge_list()) load[e] = 0.0;
  for (int s = 0; s < n; ++s) {
    BfsState st = bfs_dag(g, s);
    // paths(v) = number of DAG paths starting at v (empty path included).
    std::vector<double> paths(n, 0.0);
    for (auto it = st.order.rbegin(); it != st.order.rend(); ++it) {
      int v = *it;
      paths[v] = 1.0;
      for (int w : g.neighbors(v)) {
        if (st.dist[w] == st.dist[v] + 1) paths[v] += paths[w];
      }
    }
    for (int w : st.order) {
      for (int v : st.pred[w]) {
        load[{std::min(v, w), std::max(v, w)}] += st.sigma[v] * paths[w];
      }
    }
  }
  for (auto& [e, x] : load) x /= 2.0;
  return load;
}

std::vector<double> clustering(const Graph& g) {
  std::vector<double> c(g.num_nodes(), 0.0);
  for (int u = 0; u < g.num_nodes(); ++u) {
    const int d = g.degree(u);
    if (d < 2) continue;
    int tri = 0;
    const auto& nbrs = g.neighbors(u);
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      for (std::size_t j = i + 1; j < nbrs.size(); ++j) {
        tri += g.has_edge(nbrs[i], nbrs[j]);
      }
    }
    c[u] = 2.0 * tri / (static_cast<double>(d) * (d - 1));
  }
  return c;
}

std::vector<double> closeness(const Graph& g) {
  const int n = g.num_nodes();
  std::vector<double> cc(n, 0.0);
  for (int s = 0; s < n; ++s) {
    BfsState st = bfs_dag(g, s);
    long long total = 0;
    int reach = 0;
    for (int v = 0; v < n; ++v) {
      if (v != s && st.dist[v] > 0) {
        total += st.dist[v];
        ++reach;
      }
    }
    cc[s] = total > 0 ? static_cast<double>(reach) / total : 0.0;
  }
  return cc;
}

double spectral_radius_estimate(const Graph& g) {
  const int n = g.num_nodes();
  Vector x = Vector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    Vector y = Vector::Zero(n);
    for (int u = 0; u < n; ++u) {
      for (int v : g.neighbors(u)) y[u] += x[v];
    }
    double norm = y.norm();
    if (norm == 0.0) return 0.0;
    lambda = norm;
    x = y / norm;
  }
  return lambda;
}

std::vector<double> eigenvector_centrality(const Graph& g) {
  const int n = g.num_nodes();
  std::vector<double> out(n, 0.0);
  if (g.num_edges() == 0) return out;
  // Power iteration on A + I; the shift suppresses bipartite oscillation and
  // leaves the principal eigenvector unchanged.
  Vector x = Vector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  for (int it = 0; it < 1000; ++it) {
    Vector y = x;
    for (int u = 0; u < n; ++u) {
      for (int v : g.neighbors(u)) y[u] += x[v];
    }
    y /= y.norm();
    const double diff = (y - x).cwiseAbs().maxCoeff();
    x = y;
    if (diff < 1e-10) break;
  }
  // Deterministic sign: first nonzero entry positive.
  for (int i = 0; i < n; ++i) {
    if (x[i] != 0.0) {
      if (x[i] < 0.0) x = -x;
      break;
    }
  }
  for (int i = 0; i < n; ++i) out[i] = x[i];
  return out;
}

constexpr double kKatzAttenuation = 0.005;

std::vector<double> katz_centrality(const Graph& g) {
  const int n = g.num_nodes();
  const double radius = spectral_radius_estimate(g);
  if (kKatzAttenuation * radius >= 1.0) {
    throw MetricError("katz attenuation too large for spectral radius " +
                      std::to_string(radius));
  }
  // Fixpoint of x = alpha A x + 1.
  Vector x = Vector::Ones(n);
  for (int it = 0; it < 1000; ++it) {
    Vector y = Vector::Ones(n);
    for (int u = 0; u < n; ++u) {
      for (int v : g.neighbors(u)) y[u] += kKatzAttenuation * x[v];
    }
    const double diff = (y - x).cwiseAbs().maxCoeff();
    x = y;
    if (diff < 1e-12) break;
  }
  x /= x.norm();
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = x[i];
  return out;
}

std::vector<double> neighbor_degree(const Graph& g) {
  std::vector<double> nd(g.num_nodes(), 0.0);
  for (int u = 0; u < g.num_nodes(); ++u) {
    if (g.degree(u) == 0) continue;
    double sum = 0.0;
    for (int v : g.neighbors(u)) sum += g.degree(v);
    nd[u] = sum / g.degree(u);
  }
  return nd;
}

}  // namespace

std::vector<double> node_measures(const Graph& g, const std::string& measure) {
  const int n = g.num_nodes();
  if (measure == "D") {
    std::vector<double> d(n);
    for (int i = 0; i < n; ++i) d[i] = g.degree(i);
    return d;
  }
  if (measure == "C") return clustering(g);
  if (measure == "DC") {
    std::vector<double> dc(n, 0.0);
    if (n > 1) {
      for (int i = 0; i < n; ++i) {
        dc[i] = static_cast<double>(g.degree(i)) / (n - 1);
      }
    }
    return dc;
  }
  if (measure == "BC") return betweenness(g);
  if (measure == "CC") return closeness(g);
  if (measure == "EC") return eigenvector_centrality(g);
  if (measure == "KC") return katz_centrality(g);
  if (measure == "ND") return neighbor_degree(g);
  throw MetricError("unknown node measure '" + measure + "'");
}

std::map<Edge, double> edge_measures(const Graph& g,
                                     const std::string& measure) {
  if (measure == "EBC") return edge_betweenness(g);
  if (measure == "ELC") return edge_load(g);
  throw MetricError("unknown edge measure '" + measure + "'");
}

EdgeProfile edge_profile(const Graph& g_clean, const Perturbation& p) {
  if (p.flips.empty()) throw MetricError("edge_profile of an empty perturbation");

  Graph poisoned = apply_perturbation(g_clean, p);

  std::set<int> perturbed_nodes;
  std::set<Edge> added, removed;
  for (const auto& f : p.flips) {
    perturbed_nodes.insert(f.u);
    perturbed_nodes.insert(f.v);
    Edge e{std::min(f.u, f.v), std::max(f.u, f.v)};
    if (f.dir == FlipDir::add) {
      added.insert(e);
    } else {
      removed.insert(e);
    }
  }
  // A pair flipped twice netted out; profile it by its final state.
  for (auto it = added.begin(); it != added.end();) {
    if (!poisoned.has_edge(it->u, it->v)) {
      it = added.erase(it);
    } else {
      ++it;
    }
  }
  for (auto it = removed.begin(); it != removed.end();) {
    if (poisoned.has_edge(it->u, it->v)) {
      it = removed.erase(it);
    } else {
      ++it;
    }
  }

  EdgeProfile prof;
  prof.measures = kNodeMeasures;
  prof.measures.insert(prof.measures.end(), kEdgeMeasures.begin(),
                       kEdgeMeasures.end());

  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& m : kNodeMeasures) {
    auto vals = node_measures(poisoned, m);
    double psum = 0.0, csum = 0.0;
    int pcount = 0, ccount = 0;
    for (int i = 0; i < poisoned.num_nodes(); ++i) {
      if (perturbed_nodes.count(i)) {
        psum += vals[i];
        ++pcount;
      } else {
        csum += vals[i];
        ++ccount;
      }
    }
    prof.perturbed_mean[m] = pcount ? psum / pcount : nan;
    prof.clean_mean[m] = ccount ? csum / ccount : nan;
    if (!ccount) prof.clean_nodes_empty = true;
  }

  for (const auto& m : kEdgeMeasures) {
    auto vals = edge_measures(poisoned, m);
    // Removed edges only exist pre-removal; measure them there.
    std::map<Edge, double> pre;
    if (!removed.empty()) pre = edge_measures(g_clean, m);
    double psum = 0.0, csum = 0.0;
    int pcount = 0, ccount = 0;
    for (const auto& [e, x] : vals) {
      if (added.count(e)) {
        psum += x;
        ++pcount;
      } else {
        csum += x;
        ++ccount;
      }
    }
    for (const auto& e : removed) {
      auto it = pre.find(e);
      if (it != pre.end()) {
        psum += it->second;
        ++pcount;
      }
    }
    prof.perturbed_mean[m] = pcount ? psum / pcount : nan;
    prof.clean_mean[m] = ccount ? csum / ccount : nan;
    if (!ccount) prof.clean_edges_empty = true;
  }
  return prof;
}

}  // namespace graphre
