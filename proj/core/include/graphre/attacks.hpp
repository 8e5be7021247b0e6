#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "graphre/graph.hpp"
#include "graphre/nn.hpp"

namespace graphre {

enum class FlipDir { add, remove };

struct Flip {
  int u = 0;
  int v = 0;
  FlipDir dir = FlipDir::add;
  friend bool operator==(const Flip&, const Flip&) = default;
};

// Ordered edge flips produced by an attack. Each flip is consistent with the
// graph state at its turn; unordered pairs never repeat.
struct Perturbation {
  std::vector<Flip> flips;
  std::size_t budget = 0;
  std::string attack_name;
  std::optional<std::vector<int>> target_nodes;
  std::uint64_t seed = 0;
  // Set when the attack stopped before exhausting the budget.
  std::string stop_reason;
};

void save_perturbation(const Perturbation& p, const std::filesystem::path&);
Perturbation load_perturbation(const std::filesystem::path&);

// Applies the flips in order; throws AttackError naming the first
// inconsistent flip index.
Graph apply_perturbation(const Graph& g, const Perturbation& p);

// budget = ceil(rate * |E|) flips; each step inserts a uniform non-edge or
// removes a uniform edge with probability 1/2 each.
Perturbation random_attack(const Graph& g, double rate, std::uint64_t seed);

// Linearized two-hop surrogate: class scores are (norm_adj^2 X W).
struct SurrogateModel {
  Matrix weight;  // D x C
};

SurrogateModel surrogate_fit(const Graph& g, const NodeSplit& split,
                             const TrainHyper& hyper);

// Greedy target attack scoring candidate flips by the surrogate margin loss
// with the normalized adjacency recomputed per candidate. Candidates are all
// pairs (target, v) plus pairs among the target's current neighbors.
Perturbation nettack(const Graph& g, const SurrogateModel& s, int target,
                     int budget);

// Candidate universe of the greedy step: pairs (target, v) and pairs among
// the target's current neighbors, minus pairs already flipped.
std::vector<Flip> nettack_candidates(const Graph& g, int target,
                                     const std::vector<Flip>& already_flipped);

// Surrogate margin loss of a single flip applied to g; the exhaustive oracle
// in the tests reranks every candidate through this.
double nettack_flip_score(const Graph& g, const SurrogateModel& s, int target,
                          int u, int v);

struct MettackParams {
  ModelSpec inner;  // unrolled victim; defaults to a 2-layer gcn
  int inner_epochs = 100;
  double inner_lr = 0.1;
  double momentum = 0.9;
  bool self_training = true;
  // Dense relaxation guard: graphs larger than this are refused.
  int dense_limit = 5000;

  MettackParams() {
    inner.architecture = Arch::gcn;
    inner.num_layers = 2;
    inner.hidden_dim = 16;
    inner.dropout = 0.0;
  }
};

// Bilevel poisoning: trains the inner model by unrolled momentum descent on a
// relaxed dense adjacency, backpropagates the attacker loss through the whole
// trajectory, and greedily flips the feasible entry with the best
// gradient-agreeing score. The attacker loss is the post-training
// cross-entropy on unlabeled nodes under self-training pseudo-labels, or on
// the training split itself when self_training is off.
Perturbation mettack(const Graph& g, const NodeSplit& split, double rate,
                     const MettackParams& params, std::uint64_t seed);

// Pieces exposed for finite-difference verification and reuse.
struct UnrolledResult {
  double loss = 0.0;
  Matrix adjacency_grad;  // d loss / d A, raw (not symmetrized)
};

// Attacker loss of the unrolled inner training as a function of the relaxed
// dense adjacency; gradient computation is optional.
UnrolledResult mettack_unrolled(const Matrix& relaxed_adjacency,
                                const Matrix& features,
                                const std::vector<int>& attack_labels,
                                const std::vector<int>& attack_nodes,
                                const std::vector<int>& train_labels_all,
                                const std::vector<int>& train_nodes,
                                const std::vector<Matrix>& init,
                                const MettackParams& params, bool with_grad);

// Self-training pseudo-labels: ground truth on train nodes, argmax prediction
// of a clean-graph model elsewhere.
std::vector<int> self_training_labels(const Graph& g, const NodeSplit& split,
                                      std::uint64_t seed);

// Poisons a copy of the graph with mettack at rate `proportion`, with the
// attacker loss restricted to the training split.
Graph adversarial_augment(const Graph& g, const NodeSplit& split,
                          double proportion, const MettackParams& params,
                          std::uint64_t seed);

}  // namespace graphre
