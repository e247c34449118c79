#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "pcb/parameters.hpp"
#include "pcb/rng.hpp"
#include "pcb/tensor.hpp"

namespace pcb {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid as long as its tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }
  // Shorthand for a 1x1 node.
  double item() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

// Records a computation graph for reverse-mode differentiation. Nodes are
// appended in evaluation order, so reverse insertion order is a reverse
// topological order and backward() visits each node exactly once.
//
// A tape is confined to a single thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  // With record_gradients off, parameters enter as constants and no backward
  // closures are kept (inference).
  explicit Tape(bool record_gradients) : record_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf that receives a gradient (used for tests and ad-hoc inputs).
  Var variable(Tensor value);
  // Leaf bound to a stored parameter; repeated calls reuse one node.
  Var parameter(const ParameterStore& store, ParamId id);

  // Seeds d(loss)/d(loss) = 1 and propagates. loss must be 1x1.
  void backward(Var loss);

  // Gradient of the last backward() w.r.t. a node (zeros if it got none).
  Tensor grad(Var v) const;
  // Adds scale * gradient of every parameter leaf into grads.
  void accumulate_parameter_grads(Gradients& grads, double scale = 1.0) const;

  std::size_t size() const { return nodes_.size(); }

  // --- for operation implementations ---
  const Tensor& value(std::size_t index) const { return nodes_[index].value; }
  bool requires_grad(std::size_t index) const { return nodes_[index].requires_grad; }
  // Upstream gradient of a node during backward (may be absent -> nullptr).
  const Tensor* grad_of(std::size_t index) const;
  // Mutable gradient buffer, allocated (zero) on first use.
  Tensor& grad_buffer(std::size_t index);
  Var push(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  Var push(Tensor value, std::span<const Var> parents, BackwardFn fn);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push_node(Tensor value, bool requires_grad, BackwardFn fn);

  std::deque<Node> nodes_;
  std::vector<std::pair<ParamId, std::size_t>> parameter_nodes_;
  bool record_ = true;
};

// ---- operations --------------------------------------------------------
// All operations treat their inputs as matrices (rank 1 == one row) and
// produce rank-2 results. Shape mismatches raise DimensionError with both
// shapes in the message.

Var matmul(Var a, Var b);                 // (m x k)(k x n)
Var matmul_transposed(Var a, Var b);      // (m x k)(n x k)^T
Var add(Var a, Var b);                    // same shape, or b a 1 x n row broadcast
Var sub(Var a, Var b);                    // same shape
Var mul(Var a, Var b);                    // elementwise, same shape
Var scale(Var a, double factor);
Var concat(std::span<const Var> parts, int axis);  // axis 0 rows, 1 cols
Var concat(std::initializer_list<Var> parts, int axis);
Var slice(Var a, int axis, std::size_t begin, std::size_t count);
Var embedding_lookup(Var table, std::span<const std::int32_t> ids);
// Row-wise softmax over the last axis.
Var softmax(Var a);
// Row-wise softmax restricted to columns with key_mask != 0; excluded
// columns get exactly zero weight, fully excluded rows are all zero.
Var masked_softmax(Var a, std::span<const std::uint8_t> key_mask);
// Row-wise normalisation with learned 1 x n scale and shift.
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-6);
Var relu(Var a);
Var sigmoid(Var a);
// Inverted dropout: identity when !train, else zero with probability p and
// scale survivors by 1/(1-p).
Var dropout(Var a, double p, bool train, Rng& rng);
Var sum(Var a);
Var mean(Var a);
// Forward value `hard`, gradient routed unchanged to `soft`.
Var straight_through(const Tensor& hard, Var soft);

// Numerically stable losses on logits; return 1 x 1 nodes.
Var bce_with_logits(Var logit, double target);
Var ce_with_logits(Var logits, std::size_t target_class);

// Plain-value helpers shared with non-differentiable code paths.
double stable_sigmoid(double x);
double bce_with_logits_value(double logit, double target);

}  // namespace pcb
