#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <utility>
#include <vector>

#include "gpgraph/array.hpp"
#include "gpgraph/errors.hpp"

namespace gpgraph {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

  inline const Array& value() const;
  inline const Shape& shape() const;
  // Adjoint after Tape::backward. An all-zero array when nothing flowed here.
  inline Array grad() const;
  inline bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Dynamic reverse-mode record. Nodes are appended in evaluation order, so
// every node's inputs precede it and a single reverse sweep is a valid
// topological traversal.
//
// A tape is single-threaded. Build one per forward pass.
class Tape {
 public:
  // Receives the adjoint of the node's output and accumulates into inputs.
  using Backward = std::function<void(Tape&, const Array&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Array value, bool requires_grad = true) {
    return push(std::move(value), requires_grad, nullptr);
  }

  Var constant(Array value) { return leaf(std::move(value), false); }

  // Appends an op output. The backward closure is dropped when no input
  // requires a gradient.
  Var record(Array value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
  }

  Var record(Array value, const std::vector<Var>& inputs, Backward backward) {
    bool needs = false;
    for (const Var& v : inputs) {
      if (v.tape_ != this) throw Error("op mixes vars from different tapes");
      needs = needs || nodes_[v.id_].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  // Forward identity whose adjoint is exactly zero. In replay mode the value
  // comes from the replay log instead of the input, which lets finite
  // differences hold detached terms fixed.
  Var stop_gradient(Var x) {
    Array v = x.value();
    if (replaying_) {
      if (replay_pos_ >= replay_.size()) {
        throw Error("stop_gradient replay log exhausted");
      }
      const Array& frozen = replay_[replay_pos_++];
      require_same_shape(frozen, v, "stop_gradient replay");
      v = frozen;
    }
    frozen_log_.push_back(v);
    return push(std::move(v), false, nullptr);
  }

  void replay_frozen(std::vector<Array> values) {
    replay_ = std::move(values);
    replay_pos_ = 0;
    replaying_ = true;
  }

  const std::vector<Array>& frozen_log() const noexcept { return frozen_log_; }

  // Every recorded value is checked for finiteness when enabled.
  void set_check_finite(bool on) noexcept { check_finite_ = on; }

  // Seeds the root with ones (the gradient of sum(root)) and sweeps back.
  void backward(Var root) {
    if (root.tape_ != this) throw Error("backward on a var from another tape");
    for (auto& n : nodes_) n.grad = Array();
    Node& r = nodes_[root.id_];
    if (!r.requires_grad) return;
    r.grad = Array(r.value.shape(), 1.0);
    for (std::size_t i = root.id_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      const Array g = n.grad;
      if (check_finite_ && !g.all_finite()) {
        throw NumericError("non-finite adjoint during backward", i);
      }
      n.backward(*this, g);
    }
  }

  // Adjoint buffer of a node, allocated on first touch. For use by ops.
  Array& grad_buffer(Var v) {
    Node& n = nodes_[v.id_];
    if (n.grad.empty() && !n.value.empty()) n.grad = Array(n.value.shape());
    return n.grad;
  }

  void accumulate(Var v, const Array& g) {
    if (!nodes_[v.id_].requires_grad) return;
    Array& buf = grad_buffer(v);
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  friend class Var;

  struct Node {
    Array value;
    Array grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Array value, bool requires_grad, Backward backward) {
    const std::size_t id = nodes_.size();
    if (check_finite_ && !value.all_finite()) {
      throw NumericError("non-finite value in forward pass", id);
    }
    nodes_.push_back(Node{std::move(value), Array(), requires_grad, std::move(backward)});
    return Var(this, id);
  }

  std::vector<Node> nodes_;
  std::vector<Array> frozen_log_;
  std::vector<Array> replay_;
  std::size_t replay_pos_ = 0;
  bool replaying_ = false;
  bool check_finite_ = false;
};

inline const Array& Var::value() const { return tape_->nodes_[id_].value; }
inline const Shape& Var::shape() const { return value().shape(); }
inline bool Var::requires_grad() const { return tape_->nodes_[id_].requires_grad; }
inline Array Var::grad() const {
  const auto& n = tape_->nodes_[id_];
  return n.grad.empty() ? Array(n.value.shape()) : n.grad;
}

inline Var stop_gradient(Var x) { return x.tape().stop_gradient(x); }

}  // namespace gpgraph
