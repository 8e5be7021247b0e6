#include "graphre/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "graphre/errors.hpp"
#include "graphre/rng.hpp"
#include "json.hpp"

namespace graphre {

using ad::Value;
using nlohmann::json;

namespace {

std::pair<int, int> ordered(int u, int v) { return std::minmax(u, v); }

}  // namespace

void save_perturbation(const Perturbation& p,
                       const std::filesystem::path& path) {
  json j;
  j["attack"] = p.attack_name;
  j["seed"] = p.seed;
  j["budget"] = p.budget;
  if (!p.stop_reason.empty()) j["stop_reason"] = p.stop_reason;
  if (p.target_nodes) j["target_nodes"] = *p.target_nodes;
  json flips = json::array();
  for (const auto& f : p.flips) {
    flips.push_back({{"u", f.u},
                     {"v", f.v},
                     {"direction", f.dir == FlipDir::add ? "add" : "remove"}});
  }
  j["flips"] = std::move(flips);
  std::ofstream out(path);
  if (!out) throw Error("cannot write perturbation " + path.string());
  out << j.dump(2) << '\n';
}

Perturbation load_perturbation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open perturbation " + path.string());
  json j = json::parse(in);
  Perturbation p;
  p.attack_name = j.at("attack").get<std::string>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.budget = j.at("budget").get<std::size_t>();
  if (j.contains("stop_reason")) {
    p.stop_reason = j.at("stop_reason").get<std::string>();
  }
  if (j.contains("target_nodes")) {
    p.target_nodes = j.at("target_nodes").get<std::vector<int>>();
  }
  for (const auto& f : j.at("flips")) {
    FlipDir dir = f.at("direction").get<std::string>() == "add"
                      ? FlipDir::add
                      : FlipDir::remove;
    p.flips.push_back({f.at("u").get<int>(), f.at("v").get<int>(), dir});
  }
  return p;
}

Graph apply_perturbation(const Graph& g, const Perturbation& p) {
  std::set<std::pair<int, int>> edges;
  for (auto e : g.edge_list()) edges.insert({e.u, e.v});
  for (std::size_t i = 0; i < p.flips.size(); ++i) {
    const auto& f = p.flips[i];
    if (f.u == f.v || f.u < 0 || f.v < 0 || f.u >= g.num_nodes() ||
        f.v >= g.num_nodes()) {
      throw AttackError("flip " + std::to_string(i) + " is invalid: (" +
                        std::to_string(f.u) + ", " + std::to_string(f.v) + ")");
    }
    auto key = ordered(f.u, f.v);
    const bool present = edges.count(key) > 0;
    if (f.dir == FlipDir::add) {
      if (present) {
        throw AttackError("flip " + std::to_string(i) +
                          " adds an existing edge");
      }
      edges.insert(key);
    } else {
      if (!present) {
        throw AttackError("flip " + std::to_string(i) +
                          " removes a missing edge");
      }
      edges.erase(key);
    }
  }
  std::vector<std::pair<int, int>> pairs(edges.begin(), edges.end());
  return Graph(g.num_nodes(), pairs, g.features(), g.labels(),
               g.num_classes());
}

Perturbation random_attack(const Graph& g, double rate, std::uint64_t seed) {
  if (rate < 0.0) throw AttackError("rate must be non-negative");
  const int n = g.num_nodes();
  const long long total_pairs = static_cast<long long>(n) * (n - 1) / 2;
  Perturbation p;
  p.attack_name = "random";
  p.seed = seed;
  p.budget = static_cast<std::size_t>(
      std::ceil(rate * static_cast<double>(g.num_edges())));
  if (p.budget == 0) return p;
  if (g.num_edges() == 0 && total_pairs == 0) {
    throw AttackError("graph offers no candidate flips");
  }

  Rng rng(seed);
  std::set<std::pair<int, int>> edges;
  for (auto e : g.edge_list()) edges.insert({e.u, e.v});
  std::set<std::pair<int, int>> flipped;

  auto sample_addition = [&]() -> std::optional<std::pair<int, int>> {
    const long long candidates =
        total_pairs - static_cast<long long>(edges.size());
    if (candidates <= static_cast<long long>(flipped.size())) {
      // Possibly exhausted; verify by scan.
      for (int u = 0; u < n; ++u) {
        for (int v = u + 1; v < n; ++v) {
          if (!edges.count({u, v}) && !flipped.count({u, v})) goto feasible;
        }
      }
      return std::nullopt;
    }
  feasible:
    for (;;) {
      int u = static_cast<int>(rng.below(n));
      int v = static_cast<int>(rng.below(n));
      if (u == v) continue;
      auto key = ordered(u, v);
      if (edges.count(key) || flipped.count(key)) continue;
      return key;
    }
  };
  auto sample_removal = [&]() -> std::optional<std::pair<int, int>> {
    std::vector<std::pair<int, int>> candidates;
    for (const auto& e : edges) {
      if (!flipped.count(e)) candidates.push_back(e);
    }
    if (candidates.empty()) return std::nullopt;
    return candidates[rng.below(candidates.size())];
  };

  while (p.flips.size() < p.budget) {
    const bool try_add = rng.bernoulli(0.5);
    std::optional<std::pair<int, int>> pick;
    FlipDir dir;
    if (try_add) {
      pick = sample_addition();
      dir = FlipDir::add;
      if (!pick) {
        pick = sample_removal();
        dir = FlipDir::remove;
      }
    } else {
      pick = sample_removal();
      dir = FlipDir::remove;
      if (!pick) {
        pick = sample_addition();
        dir = FlipDir::add;
      }
    }
    if (!pick) {
      if (p.flips.empty()) throw AttackError("graph offers no candidate flips");
      p.stop_reason = "no unflipped candidate pairs left";
      break;
    }
    auto [u, v] = *pick;
    if (dir == FlipDir::add) {
      edges.insert({u, v});
    } else {
      edges.erase({u, v});
    }
    flipped.insert({u, v});
    p.flips.push_back({u, v, dir});
  }
  return p;
}

// ---------------------------------------------------------------------------
// surrogate + nettack
// ---------------------------------------------------------------------------

SurrogateModel surrogate_fit(const Graph& g, const NodeSplit& split,
                             const TrainHyper& hyper) {
  if (split.train.empty()) throw TrainingError("empty training split");
  SparseSym ahat = normalized_adjacency(g);
  const Matrix propagated = ahat.multiply(ahat.multiply(g.features()));

  Rng rng(hyper.seed);
  Matrix w;
  {
    const double a =
        std::sqrt(6.0 / (g.feature_dim() + g.num_classes()));
    w.resize(g.feature_dim(), g.num_classes());
    for (int i = 0; i < w.rows(); ++i) {
      for (int j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-a, a);
    }
  }
  Matrix velocity = Matrix::Zero(w.rows(), w.cols());
  ad::Tape tape;
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    tape.clear();
    Value wv = tape.var(w);
    Value logits = ad::matmul(tape.constant(propagated), wv);
    Value loss = ad::masked_cross_entropy(logits, g.labels(), split.train);
    if (!std::isfinite(tape.value(loss)(0, 0))) {
      throw TrainingError("surrogate training diverged at epoch " +
                          std::to_string(epoch));
    }
    tape.backward(loss);
    Matrix grad = tape.grad(wv) + hyper.weight_decay * w;
    velocity = hyper.momentum * velocity + grad;
    w -= hyper.lr * velocity;
  }
  return SurrogateModel{std::move(w)};
}

namespace {

// Mutable adjacency view for candidate scoring.
struct WorkingAdj {
  std::vector<std::set<int>> nbrs;

  explicit WorkingAdj(const Graph& g) : nbrs(g.num_nodes()) {
    for (int u = 0; u < g.num_nodes(); ++u) {
      nbrs[u].insert(g.neighbors(u).begin(), g.neighbors(u).end());
    }
  }
  bool has(int u, int v) const { return nbrs[u].count(v) > 0; }
  void toggle(int u, int v) {
    if (has(u, v)) {
      nbrs[u].erase(v);
      nbrs[v].erase(u);
    } else {
      nbrs[u].insert(v);
      nbrs[v].insert(u);
    }
  }
  double norm_deg(int u) const { return static_cast<double>(nbrs[u].size()) + 1.0; }
};

// Margin of the two-hop linear surrogate at the target: best wrong-class
// score minus true-class score, from the target's row of (norm_adj^2 X W).
double surrogate_margin(const WorkingAdj& adj, const Matrix& xw, int target,
                        int true_class) {
  const auto row_coeff = [&](int w0) {
    return 1.0 / std::sqrt(adj.norm_deg(w0));
  };
  const double st = row_coeff(target);
  Eigen::RowVectorXd logits = Eigen::RowVectorXd::Zero(xw.cols());
  auto visit_second = [&](int w, double a) {
    const double sw = row_coeff(w);
    // Self-loop entry of row w.
    logits += a * (sw * sw) * xw.row(w);
    for (int y : adj.nbrs[w]) {
      logits += a * (sw * row_coeff(y)) * xw.row(y);
    }
  };
  visit_second(target, st * st);
  for (int w : adj.nbrs[target]) {
    visit_second(w, st * row_coeff(w));
  }
  double best_other = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < logits.cols(); ++c) {
    if (c != true_class) best_other = std::max(best_other, logits(c));
  }
  return best_other - logits(true_class);
}

}  // namespace

std::vector<Flip> nettack_candidates(const Graph& g, int target,
                                     const std::vector<Flip>& already) {
  std::set<std::pair<int, int>> used;
  for (const auto& f : already) used.insert(ordered(f.u, f.v));
  std::vector<Flip> out;
  auto consider = [&](int u, int v) {
    if (u == v) return;
    auto key = ordered(u, v);
    if (used.count(key)) return;
    used.insert(key);
    out.push_back({key.first, key.second,
                   g.has_edge(u, v) ? FlipDir::remove : FlipDir::add});
  };
  for (int v = 0; v < g.num_nodes(); ++v) consider(target, v);
  const auto& nb = g.neighbors(target);
  for (std::size_t i = 0; i < nb.size(); ++i) {
    for (std::size_t j = i + 1; j < nb.size(); ++j) consider(nb[i], nb[j]);
  }
  return out;
}

double nettack_flip_score(const Graph& g, const SurrogateModel& s, int target,
                          int u, int v) {
  WorkingAdj adj(g);
  const Matrix xw = g.features() * s.weight;
  adj.toggle(u, v);
  return surrogate_margin(adj, xw, target, g.labels()[target]);
}

Perturbation nettack(const Graph& g, const SurrogateModel& s, int target,
                     int budget) {
  if (target < 0 || target >= g.num_nodes()) {
    throw AttackError("nettack: target out of range");
  }
  if (budget < 0) throw AttackError("nettack: negative budget");
  Perturbation p;
  p.attack_name = "nettack";
  p.budget = static_cast<std::size_t>(budget);
  p.target_nodes = std::vector<int>{target};

  WorkingAdj adj(g);
  const Matrix xw = g.features() * s.weight;
  const int true_class = g.labels()[target];
  Graph working = g;

  for (int step = 0; step < budget; ++step) {
    auto candidates = nettack_candidates(working, target, p.flips);
    if (candidates.empty()) {
      p.stop_reason = "no candidate flips remaining";
      break;
    }
    bool have_best = false;
    Flip best{};
    double best_score = 0.0;
    for (const auto& f : candidates) {
      adj.toggle(f.u, f.v);
      const double score = surrogate_margin(adj, xw, target, true_class);
      adj.toggle(f.u, f.v);
      const bool better =
          !have_best || score > best_score ||
          (score == best_score &&
           (std::pair{f.u, f.v} < std::pair{best.u, best.v} ||
            (f.u == best.u && f.v == best.v && f.dir == FlipDir::add)));
      if (better) {
        have_best = true;
        best = f;
        best_score = score;
      }
    }
    adj.toggle(best.u, best.v);
    working = flip_edge(working, best.u, best.v);
    p.flips.push_back(best);
  }
  return p;
}

// ---------------------------------------------------------------------------
// mettack
// ---------------------------------------------------------------------------

namespace {

// Gradient of the mean train cross-entropy w.r.t. the logits, written with
// differentiable ops so unrolled updates stay on the tape:
// (softmax(Z) - Y) .* train_mask / |train|.
Value ce_logit_grad(Value logits, const Matrix& onehot, const Matrix& mask,
                    int count) {
  ad::Tape& t = *logits.tape;
  Value s = ad::softmax_rows(logits);
  Value diff = ad::sub(s, t.constant(onehot));
  return ad::scale(ad::hadamard(diff, t.constant(mask)),
                   1.0 / static_cast<double>(count));
}

struct InnerState {
  std::vector<Value> weights;
  std::vector<Value> velocity;
};

void apply_momentum_update(InnerState& st, const std::vector<Value>& grads,
                           double lr, double momentum) {
  for (std::size_t i = 0; i < st.weights.size(); ++i) {
    st.velocity[i] = ad::add(ad::scale(st.velocity[i], momentum), grads[i]);
    st.weights[i] = ad::sub(st.weights[i], ad::scale(st.velocity[i], lr));
  }
}

// One unrolled epoch per architecture: forward, hand-derived weight
// gradients, momentum update. `prop` must be the architecture's propagation
// operator (normalized for gcn/sgc/appnp, self-loop sum for gin).
Value unrolled_forward(const ModelSpec& spec, Value prop, Value x,
                       const std::vector<Value>& w,
                       std::vector<Value>* stash) {
  switch (spec.architecture) {
    case Arch::gcn: {
      Value h = x;
      for (int l = 0; l < spec.num_layers; ++l) {
        Value m = ad::matmul(prop, h);
        Value pre = ad::matmul(m, w[l]);
        if (stash) {
          stash->push_back(m);
          stash->push_back(pre);
        }
        h = (l + 1 < spec.num_layers) ? ad::relu(pre) : pre;
      }
      return h;
    }
    case Arch::sgc: {
      // Propagated features are hoisted by the caller into x.
      return ad::matmul(x, w[0]);
    }
    case Arch::appnp: {
      Value pre1 = ad::matmul(x, w[0]);
      Value h1 = ad::relu(pre1);
      Value h = ad::matmul(h1, w[1]);
      if (stash) {
        stash->push_back(pre1);
        stash->push_back(h1);
      }
      Value z = h;
      const double a = spec.teleport;
      for (int sstep = 0; sstep < spec.prop_steps; ++sstep) {
        z = ad::add(ad::scale(ad::matmul(prop, z), 1.0 - a), ad::scale(h, a));
      }
      return z;
    }
    case Arch::gin: {
      Value h = x;
      for (int l = 0; l < spec.num_layers; ++l) {
        Value agg = ad::matmul(prop, h);
        Value preq = ad::matmul(agg, w[2 * l]);
        Value q = ad::relu(preq);
        Value prer = ad::matmul(q, w[2 * l + 1]);
        if (stash) {
          stash->push_back(agg);
          stash->push_back(preq);
          stash->push_back(q);
          stash->push_back(prer);
        }
        h = (l + 1 < spec.num_layers) ? ad::relu(prer) : prer;
      }
      return h;
    }
  }
  throw Error("unrolled_forward: unreachable");
}

std::vector<Value> unrolled_weight_grads(const ModelSpec& spec, Value prop,
                                         Value x, const std::vector<Value>& w,
                                         const std::vector<Value>& stash,
                                         Value gz) {
  switch (spec.architecture) {
    case Arch::gcn: {
      const int L = spec.num_layers;
      std::vector<Value> grads(L);
      Value u = gz;
      for (int l = L - 1; l >= 0; --l) {
        Value m = stash[2 * l];
        Value pre = stash[2 * l + 1];
        Value gpre = (l == L - 1) ? u : ad::hadamard(u, ad::step_const(pre));
        grads[l] = ad::matmul(ad::transpose(m), gpre);
        if (l > 0) {
          u = ad::matmul(prop, ad::matmul(gpre, ad::transpose(w[l])));
        }
      }
      return grads;
    }
    case Arch::sgc:
      return {ad::matmul(ad::transpose(x), gz)};
    case Arch::appnp: {
      Value pre1 = stash[0];
      Value h1 = stash[1];
      const double a = spec.teleport;
      Value u = gz;
      Value gh = ad::scale(u, a);
      for (int sstep = 1; sstep < spec.prop_steps; ++sstep) {
        u = ad::scale(ad::matmul(prop, u), 1.0 - a);
        gh = ad::add(gh, ad::scale(u, a));
      }
      u = ad::scale(ad::matmul(prop, u), 1.0 - a);
      gh = ad::add(gh, u);
      Value gw2 = ad::matmul(ad::transpose(h1), gh);
      Value gpre1 = ad::hadamard(ad::matmul(gh, ad::transpose(w[1])),
                                 ad::step_const(pre1));
      Value gw1 = ad::matmul(ad::transpose(x), gpre1);
      return {gw1, gw2};
    }
    case Arch::gin: {
      const int L = spec.num_layers;
      std::vector<Value> grads(2 * L);
      Value u = gz;
      for (int l = L - 1; l >= 0; --l) {
        Value agg = stash[4 * l];
        Value preq = stash[4 * l + 1];
        Value q = stash[4 * l + 2];
        Value prer = stash[4 * l + 3];
        Value gr = (l == L - 1) ? u : ad::hadamard(u, ad::step_const(prer));
        grads[2 * l + 1] = ad::matmul(ad::transpose(q), gr);
        Value gq = ad::hadamard(ad::matmul(gr, ad::transpose(w[2 * l + 1])),
                                ad::step_const(preq));
        grads[2 * l] = ad::matmul(ad::transpose(agg), gq);
        if (l > 0) {
          u = ad::matmul(prop, ad::matmul(gq, ad::transpose(w[2 * l])));
        }
      }
      return grads;
    }
  }
  throw Error("unrolled_weight_grads: unreachable");
}

}  // namespace

UnrolledResult mettack_unrolled(const Matrix& relaxed_adjacency,
                                const Matrix& features,
                                const std::vector<int>& attack_labels,
                                const std::vector<int>& attack_nodes,
                                const std::vector<int>& train_labels_all,
                                const std::vector<int>& train_nodes,
                                const std::vector<Matrix>& init,
                                const MettackParams& params, bool with_grad) {
  const int n = static_cast<int>(relaxed_adjacency.rows());
  const int c = static_cast<int>(init.back().cols());
  if (train_nodes.empty()) throw AttackError("mettack: empty training split");

  ad::Tape tape;
  Value a_var = with_grad ? tape.var(relaxed_adjacency)
                          : tape.constant(relaxed_adjacency);
  Value prop = params.inner.architecture == Arch::gin
                   ? ad::add(a_var, tape.constant(Matrix::Identity(n, n)))
                   : ad::normalize_adjacency(a_var);

  Value x = tape.constant(features);
  // SGC consumes pre-propagated features; hoist the hops out of the epochs.
  if (params.inner.architecture == Arch::sgc) {
    for (int k = 0; k < params.inner.sgc_hops; ++k) x = ad::matmul(prop, x);
  }

  Matrix onehot = Matrix::Zero(n, c);
  Matrix mask = Matrix::Zero(n, c);
  for (int i : train_nodes) {
    onehot(i, train_labels_all[i]) = 1.0;
    mask.row(i).setOnes();
  }

  InnerState st;
  for (const auto& w0 : init) {
    st.weights.push_back(tape.constant(w0));
    st.velocity.push_back(tape.constant(Matrix::Zero(w0.rows(), w0.cols())));
  }

  for (int epoch = 0; epoch < params.inner_epochs; ++epoch) {
    std::vector<Value> stash;
    Value logits = unrolled_forward(params.inner, prop, x, st.weights, &stash);
    Value gz = ce_logit_grad(logits, onehot, mask,
                             static_cast<int>(train_nodes.size()));
    auto grads = unrolled_weight_grads(params.inner, prop, x, st.weights,
                                       stash, gz);
    apply_momentum_update(st, grads, params.inner_lr, params.momentum);
  }

  Value final_logits =
      unrolled_forward(params.inner, prop, x, st.weights, nullptr);
  Value loss =
      ad::masked_cross_entropy(final_logits, attack_labels, attack_nodes);

  UnrolledResult res;
  res.loss = tape.value(loss)(0, 0);
  if (!std::isfinite(res.loss)) {
    throw AttackError("mettack inner training diverged");
  }
  if (with_grad) {
    tape.backward(loss);
    res.adjacency_grad = tape.grad(a_var);
  }
  return res;
}

std::vector<int> self_training_labels(const Graph& g, const NodeSplit& split,
                                      std::uint64_t seed) {
  ModelSpec spec;  // 2-layer gcn defaults
  TrainHyper hyper;
  hyper.seed = seed;
  TrainedModel m = train(spec, g, split, hyper);
  Matrix logits = predict_logits(m, g);
  std::vector<int> labels = g.labels();
  std::set<int> train(split.train.begin(), split.train.end());
  for (int i = 0; i < g.num_nodes(); ++i) {
    if (train.count(i)) continue;
    int best = 0;
    for (int c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    labels[i] = best;
  }
  return labels;
}

Perturbation mettack(const Graph& g, const NodeSplit& split, double rate,
                     const MettackParams& params, std::uint64_t seed) {
  if (rate < 0.0) throw AttackError("rate must be non-negative");
  const int n = g.num_nodes();
  if (n > params.dense_limit) {
    throw AttackError("mettack dense relaxation refused: " +
                      std::to_string(n) + " nodes exceeds the limit of " +
                      std::to_string(params.dense_limit));
  }

  Perturbation p;
  p.attack_name = "mettack";
  p.seed = seed;
  p.budget = static_cast<std::size_t>(
      std::ceil(rate * static_cast<double>(g.num_edges())));
  if (p.budget == 0) return p;

  std::vector<int> attack_labels;
  std::vector<int> attack_nodes;
  if (params.self_training) {
    attack_labels = self_training_labels(g, split, Rng::mix(seed, 0x5e1f));
    std::set<int> train(split.train.begin(), split.train.end());
    for (int i = 0; i < n; ++i) {
      if (!train.count(i)) attack_nodes.push_back(i);
    }
  } else {
    attack_labels = g.labels();
    attack_nodes = split.train;
  }

  Rng wr = Rng::fork(seed, 0x11);
  const std::vector<Matrix> init =
      init_weights(params.inner, g.feature_dim(), g.num_classes(), wr);

  Matrix a = g.dense_adjacency();
  std::set<std::pair<int, int>> flipped;

  while (p.flips.size() < p.budget) {
    UnrolledResult res =
        mettack_unrolled(a, g.features(), attack_labels, attack_nodes,
                         g.labels(), split.train, init, params, true);
    const Matrix score =
        res.adjacency_grad + res.adjacency_grad.transpose();
    bool have_best = false;
    int bu = -1, bv = -1;
    double best = 0.0;
    for (int u = 0; u < n; ++u) {
      for (int v = u + 1; v < n; ++v) {
        if (flipped.count({u, v})) continue;
        // Positive gradient favors adding, negative favors removing.
        const double s = score(u, v) * (1.0 - 2.0 * a(u, v));
        if (s > 0.0 && (!have_best || s > best)) {
          have_best = true;
          best = s;
          bu = u;
          bv = v;
        }
      }
    }
    if (!have_best) {
      p.stop_reason = "no gradient-agreeing flip left";
      break;
    }
    const bool was_edge = a(bu, bv) > 0.5;
    a(bu, bv) = a(bv, bu) = was_edge ? 0.0 : 1.0;
    flipped.insert({bu, bv});
    p.flips.push_back({bu, bv, was_edge ? FlipDir::remove : FlipDir::add});
  }
  return p;
}

Graph adversarial_augment(const Graph& g, const NodeSplit& split,
                          double proportion, const MettackParams& params,
                          std::uint64_t seed) {
  if (proportion < 0.0 || proportion > 0.5) {
    throw AttackError("proportion must lie in [0, 0.5]");
  }
  if (proportion == 0.0) return g;
  MettackParams train_loss_params = params;
  train_loss_params.self_training = false;
  Perturbation p = mettack(g, split, proportion, train_loss_params, seed);
  return apply_perturbation(g, p);
}

}  // namespace graphre
