#pragma once

#include "sseg/nn/tensor.hpp"

#include <functional>
#include <vector>

namespace sseg::nn {

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  double item() const { return value()[0]; }
  bool valid() const { return tape != nullptr; }
};

/// Reverse-mode record. Nodes are appended in evaluation order, which is a
/// topological order, so the backward sweep walks the node list in reverse.
class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  Var constant(Tensor value);
  /// Leaf bound to an external tensor; its gradient is added into `sink`
  /// (when non-null) by backward().
  Var parameter(const Tensor& value, Tensor* sink);
  /// Leaf bound to an external tensor that takes no gradient.
  Var reference(const Tensor& value);
  /// Records an operation. Gradients reach `parents` only through `backward`.
  Var record(Tensor value, std::vector<int> parents, Backward backward);

  const Tensor& value(int id) const;
  const Tensor& value(Var v) const { return value(v.id); }
  /// Gradient slot, allocated on first use.
  Tensor& grad(int id);
  const Tensor* grad_if_any(int id) const;
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  /// Seeds d(loss)/d(loss) = 1 for a single-element loss and sweeps back.
  void backward(Var loss);
  std::size_t size() const { return nodes_.size(); }
  /// Number of nodes whose backward closure ran during the last sweep.
  std::size_t visited() const { return visited_; }

 private:
  struct Node {
    Tensor value;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Tensor* sink = nullptr;
    std::vector<int> parents;
    Backward backward;
  };
  std::vector<Node> nodes_;
  std::size_t visited_ = 0;
};

// --- Operations ---------------------------------------------------------------
// Rank-1 values act as 1 x n rows wherever a matrix is expected.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Adds a length-m vector to every row of an n x m value.
Var add_row(Var a, Var row);
/// Multiplies every row of an n x m value by a length-m vector.
Var mul_row(Var a, Var row);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var softplus(Var a);
Var log(Var a);
Var square(Var a);
Var abs(Var a);
Var pow(Var a, double exponent);
/// Values outside [lo, hi] are clamped and receive no gradient.
Var clamp(Var a, double lo, double hi);
Var sum(Var a);
Var mean(Var a);
/// Column-wise maximum over rows: n x m -> m. Ties go to the lowest row.
Var max_rows(Var a);
/// Element-wise maximum over same-shaped vectors.
Var max_of(const std::vector<Var>& items);
Var concat(const std::vector<Var>& parts);
Var stack_rows(const std::vector<Var>& rows);
Var slice(Var a, std::size_t begin, std::size_t length);
/// L2-normalizes a vector; norms below `eps` yield `fallback` as a constant.
Var normalize(Var a, const Tensor& fallback, double eps = 1e-8);
/// Unit quaternion (w, x, y, z) to a 3 x 3 rotation matrix.
Var quat_to_matrix(Var q);
/// x W + b for x of shape n x in (or a vector), W in x out, b out.
Var linear(Var x, Var w, Var b);

}  // namespace sseg::nn
