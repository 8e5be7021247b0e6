#pragma once

#include <map>
#include <string>
#include <vector>

#include "graphre/attacks.hpp"
#include "graphre/graph.hpp"

namespace graphre {

// Table of supported measures:
//   node: D, C, DC, BC, CC, EC, KC, ND
//   edge: EBC, ELC
extern const std::vector<std::string> kNodeMeasures;
extern const std::vector<std::string> kEdgeMeasures;

// Standard definitions; see each implementation for the exact convention.
// BC is normalized by (N-1)(N-2)/2, EBC by N(N-1)/2; ELC is the unnormalized
// full shortest-path count through the edge.
std::vector<double> node_measures(const Graph& g, const std::string& measure);
std::map<Edge, double> edge_measures(const Graph& g,
                                     const std::string& measure);

struct EdgeProfile {
  std::vector<std::string> measures;  // kNodeMeasures + kEdgeMeasures order
  std::map<std::string, double> clean_mean;
  std::map<std::string, double> perturbed_mean;
  bool clean_nodes_empty = false;
  bool clean_edges_empty = false;
};

// Means of all ten measures over the perturbed population (flip endpoints for
// node measures, flipped pairs for edge measures) versus everything else.
// Measures are computed on the post-attack graph; edge measures for removed
// edges come from the pre-removal graph, where they still exist.
EdgeProfile edge_profile(const Graph& g_clean, const Perturbation& p);

}  // namespace graphre
