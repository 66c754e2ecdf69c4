#pragma once

// Tape-free reverse-mode differentiation over Tensor values. Every op
// produces a node that keeps its parents alive; backward() walks the graph
// in reverse topological order. Parameters are long-lived leaf nodes whose
// gradients accumulate until zero_grad().

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "drsc/tensor.hpp"

namespace drsc {

namespace detail {
inline thread_local bool grad_enabled = true;
}

inline bool grad_enabled() noexcept { return detail::grad_enabled; }

/// Disables graph construction for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
    ~NoGradGuard() { detail::grad_enabled = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    bool has_grad() const noexcept { return grad.size() == value.size() && !value.empty(); }

    Tensor<T>& grad_ref() {
        if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
        return grad;
    }
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

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
    std::size_t size() const { return node_->value.size(); }
    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    T item() const { return node_->value.item(); }

    /// Gradient accumulated by backward(); zeros when nothing flowed in.
    Tensor<T> grad() const {
        if (node_->has_grad()) return node_->grad;
        return Tensor<T>(node_->value.shape());
    }
    void zero_grad() {
        if (node_->has_grad()) node_->grad.fill(T{0});
    }

    const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

template <class T>
Var<T> constant(Tensor<T> value) {
    return Var<T>(std::move(value), false);
}

/// Same value, cut from the graph.
template <class T>
Var<T> detach(const Var<T>& x) {
    return Var<T>(x.value(), false);
}

/// Builds an op result. The backward closure receives the result node and
/// accumulates into the parents that require gradients.
template <class T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> backward_fn) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& p : parents) needs = needs || p.requires_grad();
    }
    if (needs) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (auto& p : parents) node->parents.push_back(p.node());
        node->backward_fn = std::move(backward_fn);
    }
    return Var<T>(std::move(node));
}

/// Reverse pass from a scalar root (seed gradient 1).
template <class T>
void backward(const Var<T>& root) {
    if (root.size() != 1) throw std::invalid_argument("backward() needs a scalar root, got " + shape_str(root.shape()));
    if (!root.requires_grad()) return;

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_ref()[0] += T{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backward_fn && node->has_grad()) node->backward_fn(*node);
    }
}

}  // namespace drsc
