#include "graphre/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "graphre/errors.hpp"
#include "json.hpp"

namespace graphre {

using ad::Value;

std::string to_string(Arch a) {
  switch (a) {
    case Arch::gcn: return "gcn";
    case Arch::sgc: return "sgc";
    case Arch::appnp: return "appnp";
    case Arch::gin: return "gin";
  }
  return "?";
}

Arch arch_from_string(const std::string& s) {
  if (s == "gcn") return Arch::gcn;
  if (s == "sgc") return Arch::sgc;
  if (s == "appnp") return Arch::appnp;
  if (s == "gin") return Arch::gin;
  throw ValidationError("unknown architecture '" + s + "'");
}

void ModelSpec::validate() const {
  if (num_layers < 1 || num_layers > 4) {
    throw ValidationError("num_layers must be in 1..4");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ValidationError("dropout must be in [0, 1)");
  }
  bool needs_hidden = (architecture == Arch::gcn && num_layers >= 2) ||
                      architecture == Arch::appnp ||
                      architecture == Arch::gin;
  if (needs_hidden && hidden_dim < 1) {
    throw ValidationError("hidden_dim must be >= 1");
  }
  if (architecture == Arch::sgc && sgc_hops < 1) {
    throw ValidationError("sgc_hops must be >= 1");
  }
  if (architecture == Arch::appnp) {
    if (teleport <= 0.0 || teleport > 1.0) {
      throw ValidationError("teleport must be in (0, 1]");
    }
    if (prop_steps < 1) throw ValidationError("prop_steps must be >= 1");
  }
}

namespace {

Matrix glorot(int rows, int cols, Rng& rng) {
  const double a = std::sqrt(6.0 / (rows + cols));
  Matrix w(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) w(i, j) = rng.uniform(-a, a);
  }
  return w;
}

std::vector<std::pair<int, int>> weight_shapes(const ModelSpec& spec, int d,
                                               int c) {
  std::vector<std::pair<int, int>> shapes;
  switch (spec.architecture) {
    case Arch::gcn: {
      int in = d;
      for (int l = 1; l <= spec.num_layers; ++l) {
        int out = l == spec.num_layers ? c : spec.hidden_dim;
        shapes.push_back({in, out});
        in = out;
      }
      break;
    }
    case Arch::sgc:
      shapes.push_back({d, c});
      break;
    case Arch::appnp:
      shapes.push_back({d, spec.hidden_dim});
      shapes.push_back({spec.hidden_dim, c});
      break;
    case Arch::gin: {
      int in = d;
      for (int l = 1; l <= spec.num_layers; ++l) {
        int out = l == spec.num_layers ? c : spec.hidden_dim;
        shapes.push_back({in, spec.hidden_dim});
        shapes.push_back({spec.hidden_dim, out});
        in = out;
      }
      break;
    }
  }
  return shapes;
}

}  // namespace

std::vector<Matrix> init_weights(const ModelSpec& spec, int feature_dim,
                                 int num_classes, Rng& rng) {
  std::vector<Matrix> weights;
  for (auto [r, c] : weight_shapes(spec, feature_dim, num_classes)) {
    weights.push_back(glorot(r, c, rng));
  }
  return weights;
}

Propagation csr_propagation(ad::Tape& tape, const Graph& g) {
  (void)tape;
  auto norm = std::make_shared<SparseSym>(normalized_adjacency(g));
  auto sum = std::make_shared<SparseSym>(self_loop_adjacency(g));
  Propagation p;
  p.norm = [norm](Value h) { return ad::spmm(norm, h); };
  p.sum = [sum](Value h) { return ad::spmm(sum, h); };
  return p;
}

Propagation dense_propagation(ad::Value relaxed_adjacency) {
  ad::Tape& t = *relaxed_adjacency.tape;
  Value ahat = ad::normalize_adjacency(relaxed_adjacency);
  const auto n = t.value(relaxed_adjacency).rows();
  Value aloop = ad::add(relaxed_adjacency, t.constant(Matrix::Identity(n, n)));
  Propagation p;
  p.norm = [ahat](Value h) { return ad::matmul(ahat, h); };
  p.sum = [aloop](Value h) { return ad::matmul(aloop, h); };
  return p;
}

Value model_forward(ad::Tape& tape, const ModelSpec& spec,
                    const Propagation& prop, Value x,
                    const std::vector<Value>& weights, bool training,
                    Rng* rng) {
  (void)tape;
  auto drop = [&](Value h) {
    if (!training || spec.dropout <= 0.0) return h;
    return ad::dropout(h, spec.dropout, *rng, true);
  };
  switch (spec.architecture) {
    case Arch::gcn: {
      Value h = x;
      for (int l = 0; l < spec.num_layers; ++l) {
        h = prop.norm(ad::matmul(drop(h), weights[l]));
        if (l + 1 < spec.num_layers) h = ad::relu(h);
      }
      return h;
    }
    case Arch::sgc: {
      Value h = x;
      for (int k = 0; k < spec.sgc_hops; ++k) h = prop.norm(h);
      return ad::matmul(drop(h), weights[0]);
    }
    case Arch::appnp: {
      Value h = ad::relu(ad::matmul(drop(x), weights[0]));
      h = ad::matmul(drop(h), weights[1]);
      Value z = h;
      const double a = spec.teleport;
      for (int s = 0; s < spec.prop_steps; ++s) {
        z = ad::add(ad::scale(prop.norm(z), 1.0 - a), ad::scale(h, a));
      }
      return z;
    }
    case Arch::gin: {
      Value h = x;
      for (int l = 0; l < spec.num_layers; ++l) {
        Value agg = prop.sum(drop(h));
        Value q = ad::relu(ad::matmul(agg, weights[2 * l]));
        h = ad::matmul(q, weights[2 * l + 1]);
        if (l + 1 < spec.num_layers) h = ad::relu(h);
      }
      return h;
    }
  }
  throw Error("model_forward: unreachable");
}

TrainedModel train(const ModelSpec& spec, const Graph& g,
                   const NodeSplit& split, const TrainHyper& hyper,
                   std::vector<double>* loss_trace) {
  spec.validate();
  if (split.train.empty()) throw TrainingError("empty training split");
  if (hyper.epochs < 0) throw TrainingError("epochs must be >= 0");

  Rng rng(hyper.seed);
  std::vector<Matrix> weights =
      init_weights(spec, g.feature_dim(), g.num_classes(), rng);
  std::vector<Matrix> velocity;
  for (const auto& w : weights) {
    velocity.push_back(Matrix::Zero(w.rows(), w.cols()));
  }

  ad::Tape tape;
  Propagation prop = csr_propagation(tape, g);
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    tape.clear();
    Value x = tape.constant(g.features());
    std::vector<Value> wv;
    for (const auto& w : weights) wv.push_back(tape.var(w));
    Value logits = model_forward(tape, spec, prop, x, wv, true, &rng);
    Value loss = ad::masked_cross_entropy(logits, g.labels(), split.train);
    const double loss_val = tape.value(loss)(0, 0);
    if (!std::isfinite(loss_val)) {
      throw TrainingError("training diverged at epoch " +
                          std::to_string(epoch));
    }
    if (loss_trace) loss_trace->push_back(loss_val);
    tape.backward(loss);
    for (std::size_t i = 0; i < weights.size(); ++i) {
      Matrix grad = tape.grad(wv[i]) + hyper.weight_decay * weights[i];
      velocity[i] = hyper.momentum * velocity[i] + grad;
      weights[i] -= hyper.lr * velocity[i];
    }
  }

  TrainedModel model{spec, std::move(weights), {}};
  model.meta.epochs = hyper.epochs;
  model.meta.seed = hyper.seed;

  {
    ad::Tape t2;
    Propagation p2 = csr_propagation(t2, g);
    std::vector<Value> wv;
    for (const auto& w : model.weights) wv.push_back(t2.constant(w));
    Value logits = model_forward(t2, spec, p2, t2.constant(g.features()), wv,
                                 false, nullptr);
    Value loss = ad::masked_cross_entropy(logits, g.labels(), split.train);
    model.meta.final_train_loss = t2.value(loss)(0, 0);
  }
  model.meta.final_val_accuracy =
      split.val.empty() ? std::nan("") : accuracy(model, g, split.val);
  return model;
}

Matrix predict_logits(const TrainedModel& m, const Graph& g) {
  if (m.weights.empty()) throw ValidationError("model has no weights");
  if (g.feature_dim() != m.weights[0].rows()) {
    throw ValidationError(
        "feature dimension " + std::to_string(g.feature_dim()) +
        " does not match model input " + std::to_string(m.weights[0].rows()));
  }
  ad::Tape tape;
  Propagation prop = csr_propagation(tape, g);
  std::vector<Value> wv;
  for (const auto& w : m.weights) wv.push_back(tape.constant(w));
  Value logits = model_forward(tape, m.spec, prop, tape.constant(g.features()),
                               wv, false, nullptr);
  return tape.value(logits);
}

std::vector<Matrix> hidden_activations(const TrainedModel& m, const Graph& g) {
  ad::Tape tape;
  Propagation prop = csr_propagation(tape, g);
  Value x = tape.constant(g.features());
  std::vector<Value> wv;
  for (const auto& w : m.weights) wv.push_back(tape.constant(w));
  std::vector<Matrix> hidden;
  const ModelSpec& spec = m.spec;
  switch (spec.architecture) {
    case Arch::gcn: {
      Value h = x;
      for (int l = 0; l < spec.num_layers; ++l) {
        h = prop.norm(ad::matmul(h, wv[l]));
        if (l + 1 < spec.num_layers) {
          h = ad::relu(h);
          hidden.push_back(tape.value(h));
        }
      }
      break;
    }
    case Arch::sgc: {
      Value h = x;
      for (int k = 0; k < spec.sgc_hops; ++k) h = prop.norm(h);
      hidden.push_back(tape.value(h));
      break;
    }
    case Arch::appnp: {
      Value h = ad::relu(ad::matmul(x, wv[0]));
      hidden.push_back(tape.value(h));
      break;
    }
    case Arch::gin: {
      Value h = x;
      for (int l = 0; l < spec.num_layers; ++l) {
        Value agg = prop.sum(h);
        Value q = ad::relu(ad::matmul(agg, wv[2 * l]));
        hidden.push_back(tape.value(q));
        h = ad::matmul(q, wv[2 * l + 1]);
        if (l + 1 < spec.num_layers) {
          h = ad::relu(h);
          hidden.push_back(tape.value(h));
        }
      }
      break;
    }
  }
  return hidden;
}

double accuracy(const TrainedModel& m, const Graph& g,
                const std::vector<int>& nodes) {
  if (nodes.empty()) throw MetricError("accuracy over an empty node set");
  Matrix logits = predict_logits(m, g);
  int correct = 0;
  for (int i : nodes) {
    int best = 0;
    for (int c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;  // ties keep lowest id
    }
    correct += best == g.labels()[i];
  }
  return static_cast<double>(correct) / static_cast<double>(nodes.size());
}

namespace {

using nlohmann::json;

json spec_to_json(const ModelSpec& s) {
  return json{{"architecture", to_string(s.architecture)},
              {"num_layers", s.num_layers},
              {"hidden_dim", s.hidden_dim},
              {"dropout", s.dropout},
              {"sgc_hops", s.sgc_hops},
              {"teleport", s.teleport},
              {"prop_steps", s.prop_steps}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.architecture = arch_from_string(j.at("architecture").get<std::string>());
  s.num_layers = j.at("num_layers").get<int>();
  s.hidden_dim = j.at("hidden_dim").get<int>();
  s.dropout = j.at("dropout").get<double>();
  if (j.contains("sgc_hops")) s.sgc_hops = j.at("sgc_hops").get<int>();
  if (j.contains("teleport")) s.teleport = j.at("teleport").get<double>();
  if (j.contains("prop_steps")) s.prop_steps = j.at("prop_steps").get<int>();
  return s;
}

constexpr char kCkptMagic[8] = {'G', 'R', 'E', 'C', 'K', 'P', 'T', '1'};
static_assert(std::endian::native == std::endian::little,
              "checkpoint blob assumes a little-endian host");

}  // namespace

void save_checkpoint(const TrainedModel& m,
                     const std::filesystem::path& path) {
  json header;
  header["spec"] = spec_to_json(m.spec);
  header["meta"] = {{"epochs", m.meta.epochs},
                    {"seed", m.meta.seed},
                    {"final_train_loss", m.meta.final_train_loss},
                    {"final_val_accuracy", m.meta.final_val_accuracy}};
  json shapes = json::array();
  for (const auto& w : m.weights) {
    shapes.push_back({w.rows(), w.cols()});
  }
  header["shapes"] = shapes;
  const std::string head = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kCkptMagic, sizeof(kCkptMagic));
  const std::uint64_t len = head.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto& w : m.weights) {
    for (int i = 0; i < w.rows(); ++i) {
      for (int j = 0; j < w.cols(); ++j) {
        double v = w(i, j);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
    }
  }
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0) {
    throw ParseError("not a checkpoint file: " + path.string());
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string head(len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError("truncated checkpoint header");
  json header = json::parse(head);

  TrainedModel m;
  m.spec = spec_from_json(header.at("spec"));
  m.meta.epochs = header.at("meta").at("epochs").get<int>();
  m.meta.seed = header.at("meta").at("seed").get<std::uint64_t>();
  m.meta.final_train_loss =
      header.at("meta").at("final_train_loss").get<double>();
  const auto& val_acc = header.at("meta").at("final_val_accuracy");
  // NaN (no validation split) serializes as null.
  m.meta.final_val_accuracy =
      val_acc.is_number() ? val_acc.get<double>() : std::nan("");
  for (const auto& sh : header.at("shapes")) {
    Matrix w(sh.at(0).get<int>(), sh.at(1).get<int>());
    for (int i = 0; i < w.rows(); ++i) {
      for (int j = 0; j < w.cols(); ++j) {
        double v;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        w(i, j) = v;
      }
    }
    m.weights.push_back(std::move(w));
  }
  if (!in) throw ParseError("truncated checkpoint blob");
  return m;
}

}  // namespace graphre
