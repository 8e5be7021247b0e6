#include "graphre/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "graphre/errors.hpp"
#include "graphre/rng.hpp"

namespace graphre {

namespace {

constexpr double kFeatureNoiseRate = 0.05;

// Pareto-sampled expected degrees rescaled to hit avg_degree; exponent 0
// yields a homogeneous sequence.
std::vector<double> expected_degrees(const SyntheticSpec& spec, Rng& rng) {
  std::vector<double> w(spec.num_nodes, spec.avg_degree);
  if (spec.degree_exponent <= 0.0) return w;
  const double gamma = spec.degree_exponent;
  const double cap = std::sqrt(spec.avg_degree * spec.num_nodes);
  double sum = 0.0;
  for (auto& wi : w) {
    double u = rng.uniform();
    wi = std::pow(1.0 - u, -1.0 / (gamma - 1.0));
    wi = std::min(wi, cap);
    sum += wi;
  }
  const double rescale = spec.avg_degree * spec.num_nodes / sum;
  for (auto& wi : w) wi *= rescale;
  return w;
}

}  // namespace

SyntheticGraph generate(const SyntheticSpec& spec) {
  if (spec.num_nodes < 2) throw GenerationError("num_nodes must be >= 2");
  if (spec.mu < 0.0 || spec.mu > 1.0) {
    throw GenerationError("mu must lie in [0, 1]");
  }
  if (spec.mu > 0.0 && spec.num_communities < 2) {
    throw GenerationError("mu > 0 requires at least 2 communities");
  }
  if (spec.num_communities < 1 || spec.num_communities > spec.num_nodes) {
    throw GenerationError("num_communities out of range");
  }
  if (spec.avg_degree < 1.0) {
    throw GenerationError("expected per-node degree must be >= 1");
  }
  if (spec.avg_degree >= spec.num_nodes) {
    throw GenerationError("avg_degree must be below num_nodes");
  }
  if (spec.degree_exponent != 0.0 && spec.degree_exponent <= 1.0) {
    throw GenerationError("degree_exponent must exceed 1 (or be 0)");
  }

  const int n = spec.num_nodes;
  const int c = spec.num_communities;
  Rng rng(spec.seed);

  // Contiguous near-equal blocks.
  std::vector<int> community(n);
  std::vector<double> block_weight(c, 0.0);
  for (int i = 0; i < n; ++i) {
    community[i] = static_cast<int>((static_cast<long long>(i) * c) / n);
  }

  std::vector<double> w = expected_degrees(spec, rng);
  double total_weight = 0.0;
  for (int i = 0; i < n; ++i) {
    block_weight[community[i]] += w[i];
    total_weight += w[i];
  }

  // Degree-corrected planted partition: intra-pair rate (1-mu) w_u w_v / W_c,
  // inter-pair rate mu w_u w_v / (W - (W_cu + W_cv)/2), so expected intra and
  // inter degrees come out at (1-mu) w_u and mu w_u.
  std::vector<std::pair<int, int>> edges;
  const double mu = spec.mu;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      double p;
      if (community[u] == community[v]) {
        p = (1.0 - mu) * w[u] * w[v] / block_weight[community[u]];
      } else if (mu > 0.0) {
        const double denom =
            total_weight -
            0.5 * (block_weight[community[u]] + block_weight[community[v]]);
        p = mu * w[u] * w[v] / denom;
      } else {
        continue;
      }
      if (rng.uniform() < std::min(p, 1.0)) edges.emplace_back(u, v);
    }
  }

  // One-hot community features with entry flips at a fixed noise rate.
  Matrix x = Matrix::Zero(n, c);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) {
      bool bit = j == community[i];
      if (rng.uniform() < kFeatureNoiseRate) bit = !bit;
      x(i, j) = bit ? 1.0 : 0.0;
    }
  }

  Graph g(n, edges, std::move(x), community, c);
  return SyntheticGraph{std::move(g), std::move(community)};
}

double mixing_fraction(const Graph& g, const std::vector<int>& communities) {
  if (static_cast<int>(communities.size()) != g.num_nodes()) {
    throw ValidationError("community assignment does not cover all nodes");
  }
  double sum = 0.0;
  int counted = 0;
  for (int u = 0; u < g.num_nodes(); ++u) {
    const int deg = g.degree(u);
    if (deg == 0) continue;
    int inter = 0;
    for (int v : g.neighbors(u)) inter += communities[v] != communities[u];
    sum += static_cast<double>(inter) / deg;
    ++counted;
  }
  return counted == 0 ? 0.0 : sum / counted;
}

std::vector<ScoredPair> link_prediction_scores(const Graph& g) {
  const int n = g.num_nodes();
  // Resource allocation: accumulate 1/deg(w) over wedges centered at w.
  std::map<std::pair<int, int>, double> acc;
  for (int w = 0; w < n; ++w) {
    const auto& nbrs = g.neighbors(w);
    if (nbrs.size() < 2) continue;
    const double inv = 1.0 / static_cast<double>(nbrs.size());
    for (std::size_t i = 0; i < nbrs.size(); ++i) {
      for (std::size_t j = i + 1; j < nbrs.size(); ++j) {
        int u = nbrs[i], v = nbrs[j];
        if (g.has_edge(u, v)) continue;
        acc[{u, v}] += inv;
      }
    }
  }
  std::vector<ScoredPair> scored;
  scored.reserve(acc.size() + n);
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (g.has_edge(u, v)) continue;
      auto it = acc.find({u, v});
      scored.push_back({u, v, it == acc.end() ? 0.0 : it->second});
    }
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredPair& a, const ScoredPair& b) {
                     if (a.score != b.score) return a.score > b.score;
                     if (a.u != b.u) return a.u < b.u;
                     return a.v < b.v;
                   });
  return scored;
}

RegularityResult structural_regularity(const Graph& g, double removal_fraction,
                                       std::uint64_t seed) {
  if (removal_fraction <= 0.0 || removal_fraction >= 1.0) {
    throw ValidationError("removal_fraction must lie in (0, 1)");
  }
  if (g.num_edges() < 10) {
    throw ValidationError("structural_regularity needs at least 10 edges");
  }
  auto edges = g.edge_list();
  const int remove_count = static_cast<int>(
      std::ceil(removal_fraction * static_cast<double>(edges.size())));

  Rng rng(seed);
  rng.shuffle(edges);
  std::vector<Edge> removed(edges.begin(), edges.begin() + remove_count);
  std::vector<std::pair<int, int>> kept;
  for (std::size_t i = remove_count; i < edges.size(); ++i) {
    kept.emplace_back(edges[i].u, edges[i].v);
  }
  Graph residual(g.num_nodes(), kept, g.features(), g.labels(),
                 g.num_classes());

  auto scored = link_prediction_scores(residual);
  std::vector<Edge> top;
  for (int i = 0; i < remove_count && i < static_cast<int>(scored.size());
       ++i) {
    top.push_back({scored[i].u, scored[i].v});
  }

  std::vector<Edge> sorted_removed = removed;
  std::sort(sorted_removed.begin(), sorted_removed.end());
  int hits = 0;
  for (auto e : top) {
    hits += std::binary_search(sorted_removed.begin(), sorted_removed.end(), e);
  }

  RegularityResult r;
  r.sigma_c = static_cast<double>(hits) / static_cast<double>(remove_count);
  r.removed_edges = std::move(removed);
  r.predicted_top = std::move(top);
  r.removal_fraction = removal_fraction;
  r.seed = seed;
  return r;
}

}  // namespace graphre
