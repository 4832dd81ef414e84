// Copyright 2026 The sqsm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>

#include "sqsm/tensor.hpp"

namespace sqsm {

/// Learnable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, BasicTensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  std::int64_t numel() const noexcept { return value.size(); }
  void zero_grad() {
    if (grad.shape() != value.shape()) {
      grad = BasicTensor<T>(value.shape());
    } else {
      grad.fill(T(0));
    }
  }
};

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape<T>& tape() const { return *tape_; }
  int id() const noexcept { return id_; }

  const BasicTensor<T>& value() const { return tape_->value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::int64_t dim(int axis) const { return value().dim(axis); }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

/// Explicit reverse-mode tape.
///
/// Every op appends one node holding its value and, when any input needs a
/// gradient, a closure that pushes the node's gradient to its inputs.
/// backward() replays closures in reverse recording order. Parameter nodes
/// reference the Parameter's storage and accumulate into Parameter::grad.
/// A tape built with grad_enabled == false records values only.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const BasicTensor<T>& grad_out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var<T> constant(BasicTensor<T> value) {
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    return {this, static_cast<int>(nodes_.size() - 1)};
  }

  Var<T> leaf(BasicTensor<T> value) {
    Var<T> v = constant(std::move(value));
    nodes_.back().requires_grad = grad_enabled_;
    return v;
  }

  /// The parameter must outlive the tape.
  Var<T> param(Parameter<T>& p) {
    Node& n = nodes_.emplace_back();
    n.external = &p.value;
    n.param = &p;
    n.requires_grad = grad_enabled_;
    return {this, static_cast<int>(nodes_.size() - 1)};
  }

  /// Appends an op output. The closure is kept only if some parent needs a
  /// gradient.
  Var<T> record(BasicTensor<T> value, std::initializer_list<Var<T>> parents, Backward backward) {
    bool needs = false;
    for (const Var<T>& p : parents) {
      if (p.valid()) {
        check_owned(p);
        needs = needs || nodes_[static_cast<std::size_t>(p.id())].requires_grad;
      }
    }
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    n.requires_grad = needs;
    if (needs) n.backward = std::move(backward);
    return {this, static_cast<int>(nodes_.size() - 1)};
  }

  /// Variant for ops with a runtime-sized input list.
  template <typename Range>
  Var<T> record_many(BasicTensor<T> value, const Range& parents, Backward backward) {
    bool needs = false;
    for (const Var<T>& p : parents) {
      check_owned(p);
      needs = needs || nodes_[static_cast<std::size_t>(p.id())].requires_grad;
    }
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    n.requires_grad = needs;
    if (needs) n.backward = std::move(backward);
    return {this, static_cast<int>(nodes_.size() - 1)};
  }

  const BasicTensor<T>& value(Var<T> v) const {
    const Node& n = node(v);
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(Var<T> v) const { return v.valid() && node(v).requires_grad; }

  /// Gradient buffer of `v`, zero-initialised on first access.
  BasicTensor<T>& grad(Var<T> v) {
    Node& n = node(v);
    if (n.grad.shape() != value(v).shape()) n.grad = BasicTensor<T>(value(v).shape());
    return n.grad;
  }

  /// Backpropagates from a single-element root with seed 1.
  void backward(Var<T> root) {
    if (value(root).size() != 1) {
      throw ShapeError("backward(root) needs a scalar root, got " +
                       shape_string(value(root).shape()));
    }
    backward(root, BasicTensor<T>(value(root).shape(), T(1)));
  }

  void backward(Var<T> root, const BasicTensor<T>& seed) {
    if (seed.shape() != value(root).shape()) {
      throw ShapeError("backward seed " + shape_string(seed.shape()) + " does not match root " +
                       shape_string(value(root).shape()));
    }
    if (!node(root).requires_grad) return;
    grad(root) = seed;
    for (int i = root.id(); i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param) {
        BasicTensor<T>& pg = n.param->grad;
        if (pg.shape() != n.param->value.shape()) pg = BasicTensor<T>(n.param->value.shape());
        for (std::int64_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
      }
      // Leaves keep their gradient for the caller; op outputs release theirs.
      if (n.backward || n.param) n.grad = BasicTensor<T>();
    }
  }

 private:
  struct Node {
    BasicTensor<T> value;
    const BasicTensor<T>* external = nullptr;
    BasicTensor<T> grad;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    Backward backward;
  };

  void check_owned(Var<T> v) const {
    if (&v.tape() != this) throw std::invalid_argument("Var belongs to a different tape");
  }
  const Node& node(Var<T> v) const {
    check_owned(v);
    return nodes_.at(static_cast<std::size_t>(v.id()));
  }
  Node& node(Var<T> v) {
    check_owned(v);
    return nodes_.at(static_cast<std::size_t>(v.id()));
  }

  bool grad_enabled_;
  std::deque<Node> nodes_;
};

}  // namespace sqsm
