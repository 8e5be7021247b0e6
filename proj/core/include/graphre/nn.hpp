#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "graphre/autodiff.hpp"
#include "graphre/graph.hpp"
#include "graphre/rng.hpp"

namespace graphre {

enum class Arch { gcn, sgc, appnp, gin };

std::string to_string(Arch a);
Arch arch_from_string(const std::string& s);

struct ModelSpec {
  Arch architecture = Arch::gcn;
  int num_layers = 2;
  int hidden_dim = 16;
  double dropout = 0.5;
  int sgc_hops = 2;       // sgc
  double teleport = 0.1;  // appnp
  int prop_steps = 10;    // appnp

  void validate() const;
};

struct TrainHyper {
  double lr = 0.01;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  int epochs = 200;
  std::uint64_t seed = 0;
};

struct TrainMeta {
  int epochs = 0;
  std::uint64_t seed = 0;
  double final_train_loss = 0.0;
  double final_val_accuracy = 0.0;
};

struct TrainedModel {
  ModelSpec spec;
  std::vector<Matrix> weights;
  TrainMeta meta;
};

// Symmetric-uniform (Glorot) initialization; consumes rng sequentially, so a
// fixed seed yields bit-identical weights.
std::vector<Matrix> init_weights(const ModelSpec& spec, int feature_dim,
                                 int num_classes, Rng& rng);

// Full-batch cross-entropy training with momentum and weight decay over the
// train split. Deterministic per hyper.seed. Throws TrainingError if the loss
// leaves the finite range, naming the epoch.
TrainedModel train(const ModelSpec& spec, const Graph& g,
                   const NodeSplit& split, const TrainHyper& hyper,
                   std::vector<double>* loss_trace = nullptr);

// Eval-mode logits (dropout off).
Matrix predict_logits(const TrainedModel& m, const Graph& g);

// Post-activation outputs of each hidden stage, eval mode. SGC has no
// nonlinear stage; its propagated features are returned instead.
std::vector<Matrix> hidden_activations(const TrainedModel& m, const Graph& g);

// Fraction of `nodes` whose argmax logit (ties to the lowest class id)
// matches the label.
double accuracy(const TrainedModel& m, const Graph& g,
                const std::vector<int>& nodes);

// Checkpoint file: magic, little-endian header length, JSON header, raw
// row-major 64-bit weight blob.
void save_checkpoint(const TrainedModel& m, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);

// Graph propagation supplied to the shared forward builder. `norm` applies
// the degree-normalized operator, `sum` the self-loop sum aggregator; either
// may be backed by a constant CSR matrix or by a dense tape value.
struct Propagation {
  std::function<ad::Value(ad::Value)> norm;
  std::function<ad::Value(ad::Value)> sum;
};

Propagation csr_propagation(ad::Tape& tape, const Graph& g);
Propagation dense_propagation(ad::Value relaxed_adjacency);

// Builds the architecture forward pass on the tape. `rng` is only consulted
// when training is true and dropout > 0.
ad::Value model_forward(ad::Tape& tape, const ModelSpec& spec,
                        const Propagation& prop, ad::Value x,
                        const std::vector<ad::Value>& weights, bool training,
                        Rng* rng);

}  // namespace graphre
