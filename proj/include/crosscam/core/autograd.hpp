// Copyright 2026 The crosscam Authors. All Rights Reserved.
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

#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "crosscam/core/tensor.hpp"

/// Minimal tape-free reverse-mode automatic differentiation.
///
/// Every operation returns a Var that owns its value and, when any input
/// requires a gradient, a closure that pushes the output gradient back into
/// its parents. The graph lives exactly as long as the Vars that reference it.
namespace crosscam::ag {

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    Tensor& grad_buffer() {
        if (grad.empty() && !value.empty()) grad = Tensor::zeros_like(value);
        return grad;
    }
    void zero_grad() {
        if (!grad.empty()) grad.fill(0.0);
    }
};

using NodePtr = std::shared_ptr<Node>;

class Var {
public:
    Var() = default;
    explicit Var(NodePtr node) : node_(std::move(node)) {}

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    Tensor& grad_buffer() { return node_->grad_buffer(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
    std::size_t numel() const { return node_->value.numel(); }
    double item() const {
        if (numel() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape()));
        return node_->value[0];
    }
    void zero_grad() { node_->zero_grad(); }
    bool defined() const { return static_cast<bool>(node_); }
    const NodePtr& node() const { return node_; }

private:
    NodePtr node_;
};

namespace detail {
inline int& no_grad_depth() {
    thread_local int depth = 0;
    return depth;
}
}  // namespace detail

/// While alive, newly created ops record no graph (used for target branches
/// and inference).
class NoGradGuard {
public:
    NoGradGuard() { ++detail::no_grad_depth(); }
    ~NoGradGuard() { --detail::no_grad_depth(); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth() == 0; }

inline Var leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
}

inline Var parameter(Tensor value) { return leaf(std::move(value), true); }
inline Var constant(Tensor value) { return leaf(std::move(value), false); }

/// Stop-gradient: a new leaf holding a copy of the value and no history.
inline Var detach(const Var& v) { return constant(v.value()); }

/// Creates an op result. `backward` is only kept when a parent needs a
/// gradient and recording is enabled.
inline Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool needs = false;
    if (grad_enabled())
        for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backward = std::move(backward);
    }
    return Var(std::move(n));
}

/// Runs reverse accumulation from a scalar root. Gradients accumulate into
/// every reachable node that requires them; call zero_grad on leaves between
/// steps.
inline void backward(const Var& root) {
    if (root.numel() != 1) throw ShapeError("backward() requires a scalar root, got " + shape_str(root.shape()));
    if (!root.requires_grad()) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

/// Gradient buffer of parent `i` if it participates in differentiation.
inline Tensor* parent_grad(Node& self, std::size_t i) {
    Node& p = *self.parents[i];
    return p.requires_grad ? &p.grad_buffer() : nullptr;
}

inline const Tensor& parent_value(const Node& self, std::size_t i) { return self.parents[i]->value; }

}  // namespace crosscam::ag
