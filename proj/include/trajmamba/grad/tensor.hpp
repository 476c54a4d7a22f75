#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "trajmamba/grad/error.hpp"

namespace trajmamba {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace grad_mode {

inline std::atomic<bool>& check_finite_flag() {
    static std::atomic<bool> flag{false};
    return flag;
}

inline bool& enabled_flag() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace grad_mode

/// When set, every operation output is scanned for NaN/Inf and a NumericError
/// is raised at the first offending primitive.
inline void set_check_finite(bool on) { grad_mode::check_finite_flag() = on; }
inline bool check_finite() { return grad_mode::check_finite_flag(); }

/// Disables graph construction on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(grad_mode::enabled_flag()) { grad_mode::enabled_flag() = false; }
    ~NoGradGuard() { grad_mode::enabled_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

inline bool grad_enabled() { return grad_mode::enabled_flag(); }

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until touched by backward or zero_grad
    bool requires_grad = false;
    bool released = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    bool is_leaf() const { return parents.empty() && !backward_fn; }

    std::span<T> grad_buffer() {
        if (grad.empty()) grad.assign(data.size(), T(0));
        return grad;
    }
};

/// Dense row-major tensor handle. Copies share the underlying node; a tensor
/// produced by an operation records its parents so backward() can walk the
/// graph.
template <typename T>
class Tensor {
public:
    using value_type = T;
    using NodePtr = std::shared_ptr<Node<T>>;

    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (numel_of(shape) != data.size()) {
            throw ShapeError("tensor: shape " + shape_str(shape) + " needs " +
                             std::to_string(numel_of(shape)) + " values, got " +
                             std::to_string(data.size()));
        }
        for (auto d : shape) {
            if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_str(shape));
        }
        auto node = std::make_shared<Node<T>>();
        node->shape = std::move(shape);
        node->data = std::move(data);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto n = numel_of(shape);
        return from(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
    }

    static Tensor full(Shape shape, T value, bool requires_grad = false) {
        auto n = numel_of(shape);
        return from(std::move(shape), std::vector<T>(n, value), requires_grad);
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return from({1}, {value}, requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<const T> data() const { return node_->data; }
    /// Writable view; only valid on tensors that are not part of a live graph.
    std::span<T> mutable_data() { return node_->data; }
    T operator[](std::size_t i) const { return node_->data[i]; }
    T at(std::size_t r, std::size_t c) const { return node_->data[r * node_->shape[1] + c]; }

    T item() const {
        if (numel() != 1) throw ShapeError("item: tensor " + shape_str(shape()) + " is not a scalar");
        return node_->data[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const T> grad() const { return node_->grad; }
    void zero_grad() { node_->grad.assign(node_->data.size(), T(0)); }
    void clear_grad() { node_->grad.clear(); }

    /// Same data, no graph history.
    Tensor detach() const { return from(shape(), node_->data, false); }

    Node<T>* node() const { return node_.get(); }
    const NodePtr& node_ptr() const { return node_; }

private:
    NodePtr node_;
};

namespace detail {

template <typename T>
void check_output_finite(const Node<T>& node) {
    for (T v : node.data) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite value produced by ") + node.op + " " +
                               shape_str(node.shape));
        }
    }
}

/// Builds the result node of a primitive. The backward closure is attached
/// only when grad mode is on and some parent requires a gradient.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::vector<Tensor<T>> parents, std::function<void(Node<T>&)> backward) {
    auto node = std::make_shared<Node<T>>();
    node->op = op;
    node->shape = std::move(shape);
    node->data = std::move(data);
    if (check_finite()) check_output_finite(*node);
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& p : parents) needs = needs || p.requires_grad();
    }
    if (needs) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (const auto& p : parents) {
            if (p.node()->released) {
                throw UsageError(std::string(op) +
                                 ": input belongs to a graph already consumed by backward");
            }
            node->parents.push_back(p.node_ptr());
        }
        node->backward_fn = std::move(backward);
    }
    return Tensor<T>(std::move(node));
}

/// Gradient buffer of parent i, or empty span when it does not need one.
template <typename T>
std::span<T> parent_grad(Node<T>& self, std::size_t i) {
    auto& p = *self.parents[i];
    if (!p.requires_grad) return {};
    return p.grad_buffer();
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Every reachable tensor with
/// requires_grad accumulates into its grad buffer. Interior nodes are freed
/// afterwards; a second call on the same graph raises UsageError.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    }
    Node<T>* root = loss.node();
    if (root->released) throw UsageError("backward: graph already consumed (no retention)");
    if (!root->requires_grad) return;

    // Iterative post-order DFS for the topological order.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->released) throw UsageError("backward: graph already consumed (no retention)");
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->grad_buffer()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
    for (Node<T>* node : order) {
        if (!node->is_leaf()) {
            node->backward_fn = nullptr;
            node->parents.clear();
            node->grad.clear();
            node->released = true;
        }
    }
}

}  // namespace trajmamba
