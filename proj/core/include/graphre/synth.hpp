#pragma once

#include <cstdint>
#include <vector>

#include "graphre/graph.hpp"

namespace graphre {

// Community graph generator controlled by the mixing parameter mu: each node
// directs an expected fraction mu of its links outside its community.
struct SyntheticSpec {
  int num_nodes = 500;
  int num_communities = 2;
  double mu = 0.05;
  double avg_degree = 10.0;
  // Power-law exponent for the expected degree sequence; 0 disables degree
  // heterogeneity.
  double degree_exponent = 0.0;
  std::uint64_t seed = 0;
};

struct SyntheticGraph {
  Graph graph;
  std::vector<int> communities;
};

SyntheticGraph generate(const SyntheticSpec& spec);

// Mean over nodes of (inter-community incident edges) / degree; degree-0
// nodes are skipped.
double mixing_fraction(const Graph& g, const std::vector<int>& communities);

struct ScoredPair {
  int u = 0;
  int v = 0;
  double score = 0.0;
};

// Resource-allocation index for every non-edge, sorted by descending score
// with lexicographic (u, v) tie-break.
std::vector<ScoredPair> link_prediction_scores(const Graph& g);

struct RegularityResult {
  double sigma_c = 0.0;
  std::vector<Edge> removed_edges;
  std::vector<Edge> predicted_top;
  double removal_fraction = 0.0;
  std::uint64_t seed = 0;
};

// Removes ceil(removal_fraction * K) random edges, ranks the residual graph's
// non-edges by the link predictor, and reports the fraction of removed edges
// recovered in the top-L (L = number removed).
RegularityResult structural_regularity(const Graph& g, double removal_fraction,
                                       std::uint64_t seed);

}  // namespace graphre
