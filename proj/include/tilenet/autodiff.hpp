#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tilenet/tensor.hpp"

namespace tilenet {

// A named trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad = Tensor(value.shape()); }
};

using ParameterList = std::vector<Parameter*>;

void zero_grads(const ParameterList& params);

class Tape;

// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  // Convenience for 1x1 results.
  double item() const { return value()[0]; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records primitive operations in order and replays them in exact reverse
// order to propagate gradients. One tape per episode; never shared across
// threads.
class Tape {
 public:
  using BackwardFn =
      std::function<void(Tape&, const Tensor& out_value, const Tensor& out_grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value);
  // Leaf bound to a parameter; repeated calls for the same parameter reuse one leaf.
  Var param(Parameter& p);

  // Propagates d(root)/d(.) scaled by seed into every reachable parameter's grad.
  // Root must hold a single value.
  void backward(Var root, double seed = 1.0);

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.borrowed ? *n.borrowed : n.value;
  }
  // Gradient of the last backward pass w.r.t. an intermediate; empty if unreachable.
  const Tensor& grad(Var v) const { return nodes_[v.id()].grad; }
  std::size_t size() const { return nodes_.size(); }

  // Builder interface used by the op library.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  // Zero-initialized on first use.
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_ids_;
  bool grad_enabled_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

// Differentiable primitives. Matrices are row-major; a 1xC operand in add()
// broadcasts across rows.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var tanh(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var softmax_rows(Var a);
// masked[i] == true removes entry i from the support; its probability is exactly 0.
Var softmax_masked(Var logits, const std::vector<bool>& masked);
// log softmax_masked(logits)[index] as a 1x1 value.
Var log_softmax_masked_at(Var logits, const std::vector<bool>& masked, std::size_t index);
// Shannon entropy (nats) of softmax_masked(logits) as a 1x1 value.
Var entropy_masked(Var logits, const std::vector<bool>& masked);
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
Var concat_cols(std::span<const Var> parts);
inline Var concat_cols(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat_cols(parts);
}
Var slice_cols(Var a, std::size_t start, std::size_t len);
Var row(Var a, std::size_t r);
Var reshape(Var a, Shape shape);
Var sum(Var a);
// Mean binary cross-entropy between sigmoid(logits) and labels in [0,1].
Var bce_with_logits(Var logits, const Tensor& labels);

}  // namespace tilenet
