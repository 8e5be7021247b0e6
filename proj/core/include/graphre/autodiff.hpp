#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "graphre/graph.hpp"
#include "graphre/rng.hpp"

namespace graphre::ad {

class Tape;

// Lightweight handle into a tape. Values are created by ops and stay valid
// until the tape is cleared.
struct Value {
  int id = -1;
  Tape* tape = nullptr;
  bool valid() const { return id >= 0; }
};

// Define-by-run reverse-mode tape over dense 64-bit matrices. Creation order
// is a topological order, so backward() is a single reverse sweep with
// in-place gradient accumulation.
class Tape {
 public:
  Value var(Matrix v);       // gradient tracked
  Value constant(Matrix v);  // gradient blocked

  Value make(Matrix val, bool requires_grad,
             std::function<void(Tape&, const Matrix&)> back);

  void backward(Value root);  // root must be 1x1

  const Matrix& value(Value v) const { return nodes_[v.id].val; }
  bool requires_grad(Value v) const { return nodes_[v.id].requires_grad; }

  // Gradient of the last backward() root w.r.t. v; zeros if v was not reached.
  Matrix grad(Value v) const;

  // Accumulates into v's gradient buffer, allocating it on first touch.
  void accumulate(Value v, const Matrix& g);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Matrix val;
    Matrix grad;  // empty until touched by backward
    bool requires_grad = false;
    std::function<void(Tape&, const Matrix&)> back;  // upstream grad -> parents
  };
  std::vector<Node> nodes_;
};

// ---- primitives ----
Value matmul(Value a, Value b);
Value spmm(std::shared_ptr<const SparseSym> s, Value h);  // s is constant
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value hadamard(Value a, Value b);
Value scale(Value a, double s);
Value add_scalar(Value a, double s);
Value transpose(Value a);
Value relu(Value a);
Value step_const(Value a);  // 1[x > 0], gradient blocked
Value row_sum(Value a);     // n x m -> n x 1
Value sum_all(Value a);     // -> 1 x 1
Value exp(Value a);
Value log(Value a);
Value rsqrt(Value a);
Value softmax_rows(Value a);
// Inverted dropout; identity when training is false.
Value dropout(Value a, double rate, Rng& rng, bool training);
// Mean cross-entropy of row-wise softmax over the given rows.
Value masked_cross_entropy(Value logits, const std::vector<int>& labels,
                           const std::vector<int>& rows);

// ---- composites ----
// D^{-1/2} (A + I) D^{-1/2} built from primitives, so gradients flow into A.
Value normalize_adjacency(Value a_dense);

// ---- verification ----
struct GradCheckReport {
  std::string op;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Compares reverse-mode gradients of a named primitive against central finite
// differences (h = 1e-5) at seeded random inputs. Relative error uses
// |a - b| / max(|a| + |b|, 1).
GradCheckReport gradient_check(const std::string& op_name, std::uint64_t seed,
                               double tolerance);
std::vector<std::string> gradient_check_ops();

}  // namespace graphre::ad
