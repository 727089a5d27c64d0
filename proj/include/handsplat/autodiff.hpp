#pragma once

#include "handsplat/tensor.hpp"

#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace handsplat::ad {

/// A learnable tensor that outlives tapes. Gradients accumulate into `grad`
/// until the optimizer consumes and clears them.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() {
    if (!grad.same_shape(value)) grad = Tensor(value.shape());
    grad.fill(0.0);
  }
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
  bool requires_grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Backward closure: receives the output gradient and one slot per input. A slot
/// is null when that input does not require a gradient; otherwise the closure
/// must add (never assign) its contribution.
using BackwardFn = std::function<void(const Tensor& out_grad, std::span<Tensor* const> in_grads)>;

class Tape {
 public:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor v) { return push("constant", std::move(v), false, {}, {}); }
  /// Leaf that receives a gradient but is not tied to a Parameter.
  Var variable(Tensor v) { return push("variable", std::move(v), true, {}, {}); }
  Var param(Parameter& p) {
    Var v = push("param:" + p.name, p.value, !p.frozen, {}, {});
    nodes_[v.id].param = &p;
    return v;
  }

  /// Records an operation. Values are checked for finiteness; the op name shows
  /// up in every error message.
  Var record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    bool rg = false;
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const Var& in : inputs) {
      if (in.tape != this) throw std::logic_error(op + ": input belongs to a different tape");
      ids.push_back(in.id);
      rg = rg || nodes_[in.id].requires_grad;
    }
    if (!value.all_finite()) throw NonFiniteError(op + ": non-finite forward value");
    return push(std::move(op), std::move(value), rg, std::move(ids), rg ? std::move(backward) : BackwardFn{});
  }

  /// Installs the backward closure after the fact, for ops whose closure needs
  /// the address of their own output value.
  void set_backward(Var v, BackwardFn fn) {
    Node& n = nodes_.at(v.id);
    if (n.requires_grad) n.backward = std::move(fn);
  }

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

  /// Reverse sweep from a scalar loss. Parameter-backed leaves add their
  /// gradient into Parameter::grad.
  void backward(Var loss) {
    if (loss.tape != this) throw std::logic_error("backward: loss belongs to a different tape");
    if (backward_done_) throw std::logic_error("backward: tape already consumed; record a new forward pass");
    const Node& ln = nodes_[loss.id];
    if (ln.value.size() != 1)
      throw ShapeError("backward: loss must be a scalar, got shape " + ln.value.shape_str());
    backward_done_ = true;
    if (!ln.requires_grad) return;
    nodes_[loss.id].grad = Tensor(ln.value.shape(), 1.0);

    std::vector<Tensor*> slots;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (!n.grad.all_finite()) throw NonFiniteError(n.op + ": non-finite gradient");
      if (n.backward) {
        slots.assign(n.inputs.size(), nullptr);
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const std::size_t in = n.inputs[k];
          if (in >= i) throw std::logic_error("backward: tape is not topologically ordered");
          Node& src = nodes_[in];
          if (!src.requires_grad) continue;
          if (src.grad.empty()) src.grad = Tensor(src.value.shape());
          slots[k] = &src.grad;
        }
        n.backward(n.grad, slots);
      }
      if (n.param) {
        if (!n.param->grad.same_shape(n.param->value)) n.param->zero_grad();
        n.param->grad += n.grad;
      }
      // Free intermediate gradients once propagated.
      if (!n.param && !n.inputs.empty()) n.grad = Tensor();
    }
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  Var push(std::string op, Tensor value, bool rg, std::vector<std::size_t> inputs, BackwardFn bw) {
    nodes_.push_back(Node{std::move(op), std::move(value), Tensor(), rg, std::move(inputs), std::move(bw), nullptr});
    return Var{this, nodes_.size() - 1};
  }

  // deque keeps node addresses stable so closures may hold pointers to values.
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape->value(id); }
inline const Tensor& Var::grad() const { return tape->grad(id); }
inline bool Var::requires_grad() const { return tape->requires_grad(id); }

}  // namespace handsplat::ad
