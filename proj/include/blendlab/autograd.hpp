/* Copyright 2026 The BlendLab Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Reverse-mode automatic differentiation over Tensor<T>.
//
// Every backward rule is written in terms of differentiable ops, so running
// grad() with create_graph=true records the backward pass itself and the
// result can be differentiated again (needed for gradient penalties).

#ifndef BLENDLAB_AUTOGRAD_HPP_
#define BLENDLAB_AUTOGRAD_HPP_

#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "blendlab/tensor.hpp"

namespace blendlab::ag {

class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool on = true;
    return on;
  }
};

// Scoped override of the recording flag.
class GradModeGuard {
 public:
  explicit GradModeGuard(bool on) : prev_(GradMode::enabled()) { GradMode::set(on); }
  ~GradModeGuard() { GradMode::set(prev_); }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool prev_;
};

class NoGradGuard : public GradModeGuard {
 public:
  NoGradGuard() : GradModeGuard(false) {}
};

template <class T>
class Var;

// backward(out, grad_out, needs) returns one gradient per input; entries whose
// `needs` flag is false may be left undefined.
template <class T>
using BackwardFn =
    std::function<std::vector<Var<T>>(const Var<T>& out, const Var<T>& grad_out, const std::vector<bool>& needs)>;

template <class T>
struct Node {
  Tensor<T> value;
  bool requires_grad = false;
  std::vector<Var<T>> inputs;
  BackwardFn<T> backward;
  const char* op = "leaf";
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  // Direct access for optimizer updates; only valid on leaves.
  Tensor<T>& mutable_value() {
    if (!node_->inputs.empty()) throw StateError("mutable_value() on a non-leaf variable");
    return node_->value;
  }
  const Shape& shape() const { return node_->value.shape(); }
  std::int64_t dim(int i) const { return node_->value.dim(i); }
  std::int64_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const char* op() const { return node_->op; }
  T item() const { return node_->value.item(); }

  Var detach() const { return Var(node_->value, false); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
Var<T> constant(Tensor<T> value) {
  return Var<T>(std::move(value), false);
}

template <class T>
Var<T> parameter(Tensor<T> value) {
  return Var<T>(std::move(value), true);
}

// Wraps a freshly computed value; records the graph edge when any input needs
// gradients and recording is on.
template <class T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn<T> backward, const char* op) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  if (GradMode::enabled()) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->inputs = std::move(inputs);
      node->backward = std::move(backward);
    }
  }
  return Var<T>(std::move(node));
}

namespace detail {

template <class T>
Var<T> accumulate(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    throw ArgumentError(std::string("gradient shape mismatch in accumulation: ") + shape_str(a.shape()) +
                        " vs " + shape_str(b.shape()));
  }
  Tensor<T> out = a.value();
  const T* bp = b.value().data();
  T* op = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) op[i] += bp[i];
  return make_result<T>(
      std::move(out), {a, b},
      [](const Var<T>&, const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{g, g}; },
      "accumulate");
}

}  // namespace detail

// Gradients of `output` with respect to each entry of `wrt`. `grad_output`
// defaults to ones. Unreachable inputs get zero gradients. With create_graph
// the returned gradients are themselves differentiable.
template <class T>
std::vector<Var<T>> grad(const Var<T>& output, const std::vector<Var<T>>& wrt, const Var<T>& grad_output = {},
                         bool create_graph = false) {
  std::vector<Var<T>> result(wrt.size());
  auto zeros_for = [&](std::size_t k) { return constant(Tensor<T>::zeros(wrt[k].shape())); };
  if (!output.requires_grad()) {
    for (std::size_t k = 0; k < wrt.size(); ++k) result[k] = zeros_for(k);
    return result;
  }

  std::unordered_set<Node<T>*> targets;
  for (const auto& w : wrt) targets.insert(w.node());

  // Post-order DFS; inputs precede consumers in `topo`.
  std::vector<Var<T>> topo;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Var<T>, std::size_t>> stack;
  stack.emplace_back(output, 0);
  visited.insert(output.node());
  while (!stack.empty()) {
    auto& [v, next] = stack.back();
    const auto& ins = v.node()->inputs;
    if (next < ins.size()) {
      const Var<T> child = ins[next++];
      if (child.requires_grad() && !visited.count(child.node())) {
        visited.insert(child.node());
        stack.emplace_back(child, 0);
      }
    } else {
      topo.push_back(v);
      stack.pop_back();
    }
  }

  // A node is needed when some target is reachable through it.
  std::unordered_map<Node<T>*, bool> needed;
  needed.reserve(topo.size());
  for (const auto& v : topo) {
    bool need = targets.count(v.node()) > 0;
    for (const auto& in : v.node()->inputs) {
      if (!need && in.requires_grad()) {
        auto it = needed.find(in.node());
        need = it != needed.end() && it->second;
      }
    }
    needed[v.node()] = need;
  }

  std::unordered_map<Node<T>*, Var<T>> grads;
  grads[output.node()] = grad_output.defined() ? grad_output : constant(Tensor<T>::ones(output.shape()));
  if (grads[output.node()].shape() != output.shape()) throw ArgumentError("grad_output shape mismatch");

  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const Var<T>& v = *it;
    Node<T>* node = v.node();
    if (!needed[node]) continue;
    auto git = grads.find(node);
    if (git == grads.end()) continue;
    Var<T> g = git->second;
    if (!targets.count(node)) grads.erase(git);
    if (!node->backward) continue;

    std::vector<bool> needs(node->inputs.size());
    bool any = false;
    for (std::size_t k = 0; k < node->inputs.size(); ++k) {
      const auto& in = node->inputs[k];
      needs[k] = in.requires_grad() && needed[in.node()];
      any = any || needs[k];
    }
    if (!any) continue;

    std::vector<Var<T>> in_grads;
    {
      GradModeGuard mode(create_graph);
      in_grads = node->backward(v, g, needs);
    }
    for (std::size_t k = 0; k < node->inputs.size(); ++k) {
      if (!needs[k] || !in_grads[k].defined()) continue;
      Node<T>* in = node->inputs[k].node();
      auto slot = grads.find(in);
      if (slot == grads.end()) {
        grads.emplace(in, in_grads[k]);
      } else {
        GradModeGuard mode(create_graph);
        slot->second = detail::accumulate(slot->second, in_grads[k]);
      }
    }
  }

  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto it = grads.find(wrt[k].node());
    result[k] = it != grads.end() ? it->second : zeros_for(k);
    if (!create_graph && result[k].requires_grad()) result[k] = result[k].detach();
  }
  return result;
}

}  // namespace blendlab::ag

#endif  // BLENDLAB_AUTOGRAD_HPP_
