#include "graphre/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "graphre/errors.hpp"

namespace graphre::ad {

Value Tape::var(Matrix v) { return make(std::move(v), true, {}); }

Value Tape::constant(Matrix v) { return make(std::move(v), false, {}); }

Value Tape::make(Matrix val, bool requires_grad,
                 std::function<void(Tape&, const Matrix&)> back) {
  Node node;
  node.val = std::move(val);
  node.requires_grad = requires_grad;
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return Value{static_cast<int>(nodes_.size()) - 1, this};
}

Matrix Tape::grad(Value v) const {
  const auto& node = nodes_[v.id];
  if (node.grad.size() == 0) {
    return Matrix::Zero(node.val.rows(), node.val.cols());
  }
  return node.grad;
}

void Tape::accumulate(Value v, const Matrix& g) {
  auto& node = nodes_[v.id];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void Tape::backward(Value root) {
  if (root.tape != this) throw Error("backward: value from another tape");
  auto& r = nodes_[root.id];
  if (r.val.rows() != 1 || r.val.cols() != 1) {
    throw Error("backward: root must be a 1x1 scalar");
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  accumulate(root, Matrix::Ones(1, 1));
  for (int i = root.id; i >= 0; --i) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0 || !n.back) continue;
    n.back(*this, n.grad);
  }
}

namespace {

Tape& tape_of(Value a, Value b) {
  if (a.tape != b.tape) throw Error("op: values from different tapes");
  return *a.tape;
}

}  // namespace

Value matmul(Value a, Value b) {
  Tape& t = tape_of(a, b);
  Matrix out = t.value(a) * t.value(b);
  bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.make(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

Value spmm(std::shared_ptr<const SparseSym> s, Value h) {
  Tape& t = *h.tape;
  Matrix out = s->multiply(t.value(h));
  bool rg = t.requires_grad(h);
  return t.make(std::move(out), rg, [s, h](Tape& t, const Matrix& g) {
    // s is symmetric, so s^T g == s g.
    t.accumulate(h, s->multiply(g));
  });
}

Value add(Value a, Value b) {
  Tape& t = tape_of(a, b);
  Matrix out = t.value(a) + t.value(b);
  bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.make(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Value sub(Value a, Value b) {
  Tape& t = tape_of(a, b);
  Matrix out = t.value(a) - t.value(b);
  bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.make(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Value hadamard(Value a, Value b) {
  Tape& t = tape_of(a, b);
  Matrix out = t.value(a).cwiseProduct(t.value(b));
  bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.make(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

Value scale(Value a, double s) {
  Tape& t = *a.tape;
  return t.make(t.value(a) * s, t.requires_grad(a),
                [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Value add_scalar(Value a, double s) {
  Tape& t = *a.tape;
  return t.make(t.value(a).array() + s, t.requires_grad(a),
                [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Value transpose(Value a) {
  Tape& t = *a.tape;
  return t.make(t.value(a).transpose(), t.requires_grad(a),
                [a](Tape& t, const Matrix& g) {
                  t.accumulate(a, g.transpose());
                });
}

Value relu(Value a) {
  Tape& t = *a.tape;
  return t.make(t.value(a).cwiseMax(0.0), t.requires_grad(a),
                [a](Tape& t, const Matrix& g) {
                  Matrix mask =
                      (t.value(a).array() > 0.0).cast<double>().matrix();
                  t.accumulate(a, g.cwiseProduct(mask));
                });
}

Value step_const(Value a) {
  Tape& t = *a.tape;
  return t.constant((t.value(a).array() > 0.0).cast<double>().matrix());
}

Value row_sum(Value a) {
  Tape& t = *a.tape;
  Matrix out = t.value(a).rowwise().sum();
  const int cols = static_cast<int>(t.value(a).cols());
  return t.make(std::move(out), t.requires_grad(a),
                [a, cols](Tape& t, const Matrix& g) {
                  t.accumulate(a, g * Matrix::Ones(1, cols));
                });
}

Value sum_all(Value a) {
  Tape& t = *a.tape;
  Matrix out(1, 1);
  out(0, 0) = t.value(a).sum();
  return t.make(std::move(out), t.requires_grad(a),
                [a](Tape& t, const Matrix& g) {
                  t.accumulate(a, Matrix::Constant(t.value(a).rows(),
                                                   t.value(a).cols(),
                                                   g(0, 0)));
                });
}

namespace {

// Handle of the node that the next make() call will create; used by ops whose
// backward pass reads their own output.
Value next_value(Tape& t) { return Value{static_cast<int>(t.size()), &t}; }

}  // namespace

Value exp(Value a) {
  Tape& t = *a.tape;
  Value out = next_value(t);
  return t.make(t.value(a).array().exp().matrix(), t.requires_grad(a),
                [a, out](Tape& t, const Matrix& g) {
                  t.accumulate(a, g.cwiseProduct(t.value(out)));
                });
}

Value log(Value a) {
  Tape& t = *a.tape;
  return t.make(t.value(a).array().log().matrix(), t.requires_grad(a),
                [a](Tape& t, const Matrix& g) {
                  t.accumulate(a, g.cwiseQuotient(t.value(a)));
                });
}

Value rsqrt(Value a) {
  Tape& t = *a.tape;
  Value out = next_value(t);
  return t.make(t.value(a).array().rsqrt().matrix(), t.requires_grad(a),
                [a, out](Tape& t, const Matrix& g) {
                  // d/dx x^{-1/2} = -1/2 x^{-3/2} = -1/2 y^3
                  const Matrix& y = t.value(out);
                  t.accumulate(
                      a, -0.5 * g.cwiseProduct(y.array().cube().matrix()));
                });
}

Value softmax_rows(Value a) {
  Tape& t = *a.tape;
  const Matrix& x = t.value(a);
  Matrix s(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    Eigen::RowVectorXd row = x.row(i).array() - x.row(i).maxCoeff();
    row = row.array().exp();
    s.row(i) = row / row.sum();
  }
  Value out = next_value(t);
  return t.make(std::move(s), t.requires_grad(a),
                [a, out](Tape& t, const Matrix& g) {
                  const Matrix& s = t.value(out);
                  Matrix gs = g.cwiseProduct(s);
                  Vector dot = gs.rowwise().sum();
                  t.accumulate(a, gs - s.cwiseProduct(dot * Eigen::RowVectorXd::Ones(s.cols())));
                });
}

Value dropout(Value a, double rate, Rng& rng, bool training) {
  Tape& t = *a.tape;
  if (!training || rate <= 0.0) {
    return t.make(t.value(a), t.requires_grad(a),
                  [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
  }
  const Matrix& x = t.value(a);
  Matrix mask(x.rows(), x.cols());
  const double keep = 1.0 - rate;
  for (int i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < x.cols(); ++j) {
      mask(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
    }
  }
  auto mask_v = t.constant(std::move(mask));
  return hadamard(a, mask_v);
}

Value masked_cross_entropy(Value logits, const std::vector<int>& labels,
                           const std::vector<int>& rows) {
  Tape& t = *logits.tape;
  if (rows.empty()) throw Error("masked_cross_entropy: empty row set");
  const Matrix& z = t.value(logits);
  double loss = 0.0;
  for (int i : rows) {
    Eigen::RowVectorXd shifted = z.row(i).array() - z.row(i).maxCoeff();
    double lse = std::log(shifted.array().exp().sum());
    loss += lse - shifted(labels[i]);
  }
  Matrix out(1, 1);
  out(0, 0) = loss / static_cast<double>(rows.size());
  return t.make(std::move(out), t.requires_grad(logits),
                [logits, labels, rows](Tape& t, const Matrix& g) {
                  const Matrix& z = t.value(logits);
                  Matrix dz = Matrix::Zero(z.rows(), z.cols());
                  const double w = g(0, 0) / static_cast<double>(rows.size());
                  for (int i : rows) {
                    Eigen::RowVectorXd row =
                        z.row(i).array() - z.row(i).maxCoeff();
                    row = row.array().exp();
                    row /= row.sum();
                    dz.row(i) = w * row;
                    dz(i, labels[i]) -= w;
                  }
                  t.accumulate(logits, dz);
                });
}

Value normalize_adjacency(Value a_dense) {
  Tape& t = *a_dense.tape;
  const auto n = t.value(a_dense).rows();
  Value a_loop = add(a_dense, t.constant(Matrix::Identity(n, n)));
  Value deg = add_scalar(row_sum(a_dense), 1.0);  // n x 1
  Value s = rsqrt(deg);
  Value outer = matmul(s, transpose(s));
  return hadamard(a_loop, outer);
}

// ---------------------------------------------------------------------------
// gradient_check
// ---------------------------------------------------------------------------

namespace {

struct OpCase {
  std::vector<std::pair<int, int>> shapes;
  // Samples input #idx; default is uniform(-1, 1).
  std::function<double(int idx, Rng&)> sample;
  std::function<Value(Tape&, const std::vector<Value>&)> build;
};

double sample_default(int, Rng& rng) { return rng.uniform(-1.0, 1.0); }

// Strictly away from the relu kink so central differences are valid.
double sample_off_zero(int, Rng& rng) {
  double m = rng.uniform(0.1, 1.1);
  return rng.bernoulli(0.5) ? m : -m;
}

double sample_positive(int, Rng& rng) { return rng.uniform(0.1, 1.2); }

std::shared_ptr<const SparseSym> test_sparse5() {
  // Normalized adjacency of the 5-node path.
  auto s = std::make_shared<SparseSym>();
  s->n = 5;
  std::vector<std::vector<std::pair<int, double>>> rows(5);
  auto deg = [](int i) { return (i == 0 || i == 4) ? 2.0 : 3.0; };
  for (int i = 0; i < 5; ++i) {
    rows[i].push_back({i, 1.0 / deg(i)});
    if (i > 0) rows[i].push_back({i - 1, 1.0 / std::sqrt(deg(i) * deg(i - 1))});
    if (i < 4) rows[i].push_back({i + 1, 1.0 / std::sqrt(deg(i) * deg(i + 1))});
  }
  s->row_ptr.push_back(0);
  for (auto& r : rows) {
    std::sort(r.begin(), r.end());
    for (auto [j, v] : r) {
      s->col.push_back(j);
      s->val.push_back(v);
    }
    s->row_ptr.push_back(static_cast<int>(s->col.size()));
  }
  return s;
}

const std::map<std::string, OpCase>& registry() {
  static const std::map<std::string, OpCase> reg = [] {
    std::map<std::string, OpCase> r;
    r["matmul"] = {{{4, 4}, {4, 4}},
                   sample_default,
                   [](Tape&, const std::vector<Value>& in) {
                     return matmul(in[0], in[1]);
                   }};
    r["spmm"] = {{{5, 3}},
                 sample_default,
                 [](Tape&, const std::vector<Value>& in) {
                   return spmm(test_sparse5(), in[0]);
                 }};
    r["add"] = {{{3, 4}, {3, 4}},
                sample_default,
                [](Tape&, const std::vector<Value>& in) {
                  return add(in[0], in[1]);
                }};
    r["sub"] = {{{3, 4}, {3, 4}},
                sample_default,
                [](Tape&, const std::vector<Value>& in) {
                  return sub(in[0], in[1]);
                }};
    r["hadamard"] = {{{3, 4}, {3, 4}},
                     sample_default,
                     [](Tape&, const std::vector<Value>& in) {
                       return hadamard(in[0], in[1]);
                     }};
    r["scale"] = {{{3, 4}},
                  sample_default,
                  [](Tape&, const std::vector<Value>& in) {
                    return scale(in[0], -1.7);
                  }};
    r["add_scalar"] = {{{3, 4}},
                       sample_default,
                       [](Tape&, const std::vector<Value>& in) {
                         return add_scalar(in[0], 0.31);
                       }};
    r["transpose"] = {{{3, 4}},
                      sample_default,
                      [](Tape&, const std::vector<Value>& in) {
                        return transpose(in[0]);
                      }};
    r["relu"] = {{{4, 4}},
                 sample_off_zero,
                 [](Tape&, const std::vector<Value>& in) {
                   return relu(in[0]);
                 }};
    r["row_sum"] = {{{4, 3}},
                    sample_default,
                    [](Tape&, const std::vector<Value>& in) {
                      return row_sum(in[0]);
                    }};
    r["sum_all"] = {{{4, 3}},
                    sample_default,
                    [](Tape&, const std::vector<Value>& in) {
                      return sum_all(in[0]);
                    }};
    r["exp"] = {{{3, 3}},
                sample_default,
                [](Tape&, const std::vector<Value>& in) { return exp(in[0]); }};
    r["log"] = {{{3, 3}},
                sample_positive,
                [](Tape&, const std::vector<Value>& in) { return log(in[0]); }};
    r["rsqrt"] = {{{3, 3}},
                  sample_positive,
                  [](Tape&, const std::vector<Value>& in) {
                    return rsqrt(in[0]);
                  }};
    r["softmax"] = {{{4, 5}},
                    sample_default,
                    [](Tape&, const std::vector<Value>& in) {
                      return softmax_rows(in[0]);
                    }};
    r["softmax_cross_entropy"] = {
        {{5, 4}},
        sample_default,
        [](Tape&, const std::vector<Value>& in) {
          return masked_cross_entropy(in[0], {0, 3, 1, 2, 0}, {0, 1, 3, 4});
        }};
    r["dropout_eval"] = {{{4, 4}},
                         sample_default,
                         [](Tape&, const std::vector<Value>& in) {
                           Rng rng(7);
                           return dropout(in[0], 0.5, rng, false);
                         }};
    r["normalize_adjacency"] = {{{5, 5}},
                                sample_positive,
                                [](Tape&, const std::vector<Value>& in) {
                                  return normalize_adjacency(in[0]);
                                }};
    return r;
  }();
  return reg;
}

double rel_error(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1.0);
}

}  // namespace

std::vector<std::string> gradient_check_ops() {
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

GradCheckReport gradient_check(const std::string& op_name, std::uint64_t seed,
                               double tolerance) {
  auto it = registry().find(op_name);
  if (it == registry().end()) {
    throw Error("gradient_check: unknown op '" + op_name + "'");
  }
  const OpCase& oc = it->second;

  Rng rng(seed);
  std::vector<Matrix> inputs;
  for (auto [r, c] : oc.shapes) {
    Matrix m(r, c);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) m(i, j) = oc.sample(static_cast<int>(inputs.size()), rng);
    }
    inputs.push_back(std::move(m));
  }

  // Scalarize through a fixed random projection of the op output.
  Matrix projection;
  auto eval = [&](const std::vector<Matrix>& xs, Tape& t,
                  std::vector<Value>* vars_out) -> Value {
    std::vector<Value> vars;
    for (const auto& x : xs) vars.push_back(t.var(x));
    Value out = oc.build(t, vars);
    if (projection.size() == 0) {
      Rng prj = Rng::fork(seed, 0xabcdef);
      projection.resize(t.value(out).rows(), t.value(out).cols());
      for (int i = 0; i < projection.rows(); ++i) {
        for (int j = 0; j < projection.cols(); ++j) {
          projection(i, j) = prj.uniform(-1.0, 1.0);
        }
      }
    }
    if (vars_out) *vars_out = vars;
    return sum_all(hadamard(out, t.constant(projection)));
  };

  Tape t;
  std::vector<Value> vars;
  Value loss = eval(inputs, t, &vars);
  t.backward(loss);
  std::vector<Matrix> grads;
  for (auto v : vars) grads.push_back(t.grad(v));

  const double h = 1e-5;
  GradCheckReport report{op_name, 0.0, false};
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (int i = 0; i < inputs[k].rows(); ++i) {
      for (int j = 0; j < inputs[k].cols(); ++j) {
        auto perturbed = inputs;
        perturbed[k](i, j) += h;
        Tape tp;
        double up = tp.value(eval(perturbed, tp, nullptr))(0, 0);
        perturbed[k](i, j) -= 2 * h;
        Tape tm;
        double dn = tm.value(eval(perturbed, tm, nullptr))(0, 0);
        double fd = (up - dn) / (2 * h);
        report.max_rel_error =
            std::max(report.max_rel_error, rel_error(grads[k](i, j), fd));
      }
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace graphre::ad
