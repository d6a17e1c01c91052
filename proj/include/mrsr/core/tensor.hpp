#pragma once

// Reverse-mode differentiable tensor.
//
// A Tensor is a shared handle to a node holding row-major float64 values, an
// optional gradient accumulator and, for op results, the closure that pushes
// the node's gradient into its parents. Ops only record a closure when at
// least one input requires a gradient, so inference on frozen weights builds
// no graph at all.

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mrsr/core/error.hpp"

namespace mrsr {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, std::size_t b) { return a * b; });
}

inline std::string shape_str(const Shape& shape) {
    if (shape.empty()) return "[]";
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    bool is_leaf = true;
    bool consumed = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(const std::vector<double>&)> backward;

    std::vector<double>& grad_buffer() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
        return grad;
    }
};

using NodePtr = std::shared_ptr<Node>;

// Gradient slot of a parent, or nullptr when the parent does not take gradients.
inline double* grad_slot(const NodePtr& node) {
    if (!node || !node->requires_grad) return nullptr;
    return node->grad_buffer().data();
}

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
        : node_(std::make_shared<detail::Node>()) {
        for (std::size_t extent : shape) {
            if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
        }
        if (shape_numel(shape) != values.size()) {
            throw DimensionError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                                 " values, got " + std::to_string(values.size()));
        }
        node_->shape = std::move(shape);
        node_->values = std::move(values);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(const Shape& shape, bool requires_grad = false) {
        return Tensor(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad);
    }

    static Tensor full(const Shape& shape, double value, bool requires_grad = false) {
        return Tensor(shape, std::vector<double>(shape_numel(shape), value), requires_grad);
    }

    static Tensor scalar(double value, bool requires_grad = false) { return Tensor({1}, {value}, requires_grad); }

    bool defined() const { return static_cast<bool>(node_); }

    const Shape& shape() const { return checked().shape; }
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const {
        if (axis >= rank()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
        return shape()[axis];
    }
    std::size_t numel() const { return checked().values.size(); }

    std::span<const double> values() const { return checked().values; }

    /// Mutable storage for leaves (parameter initialisation and optimiser updates).
    std::span<double> data() {
        if (!checked().is_leaf) throw UsageError("in-place writes are only allowed on leaf tensors");
        return node_->values;
    }

    double item() const {
        if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
        return node_->values[0];
    }

    double at(std::size_t flat) const { return checked().values.at(flat); }

    bool has_grad() const { return checked().grad.size() == node_->values.size(); }

    /// Accumulated gradient; all zeros when nothing has been accumulated yet.
    std::vector<double> grad() const {
        if (has_grad()) return node_->grad;
        return std::vector<double>(numel(), 0.0);
    }

    bool requires_grad() const { return checked().requires_grad; }

    void set_requires_grad(bool flag) {
        if (!checked().is_leaf) throw UsageError("requires_grad can only be toggled on leaf tensors");
        node_->requires_grad = flag;
        if (!flag) node_->grad.clear();
    }

    void zero_grad() {
        if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    bool is_leaf() const { return checked().is_leaf; }

    /// Same values, cut from the graph: no gradient flows through the result.
    Tensor detach() const { return Tensor(shape(), checked().values, false); }

    /// Deep copy of a leaf (values only).
    Tensor clone(bool requires_grad = false) const { return Tensor(shape(), checked().values, requires_grad); }

    /// Reverse-mode sweep from a scalar. Each graph may be swept once.
    void backward() const;

    const detail::NodePtr& node() const { return node_; }

    /// Builds an op result; the closure is only recorded when some input needs a gradient.
    static Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                              const std::function<std::function<void(const std::vector<double>&)>()>& make_backward) {
        Tensor out(std::move(shape), std::move(values));
        bool any = false;
        for (const Tensor& t : inputs) any = any || (t.defined() && t.requires_grad());
        if (any) {
            out.node_->requires_grad = true;
            out.node_->is_leaf = false;
            for (const Tensor& t : inputs) {
                if (t.defined() && t.requires_grad()) out.node_->parents.push_back(t.node_);
            }
            out.node_->backward = make_backward();
        }
        return out;
    }

private:
    const detail::Node& checked() const {
        if (!node_) throw UsageError("use of an undefined tensor");
        return *node_;
    }

    detail::NodePtr node_;
};

inline void Tensor::backward() const {
    const detail::Node& root = checked();
    if (root.values.size() != 1) {
        throw UsageError("backward() needs a scalar loss, got shape " + shape_str(root.shape));
    }
    if (root.consumed) throw UsageError("backward() called twice on the same graph");
    if (!root.requires_grad) return;

    // Iterative post-order DFS gives a topological order (parents before children).
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (node->consumed) throw UsageError("graph reached a node whose graph was already swept by backward()");
        if (next < node->parents.size()) {
            detail::Node* parent = node->parents[next++].get();
            if (seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (node->backward && node->grad.size() == node->values.size()) node->backward(node->grad);
    }
    for (detail::Node* node : order) {
        if (node->is_leaf) continue;
        node->consumed = true;
        node->backward = nullptr;
        node->parents.clear();
        node->grad.clear();
        node->grad.shrink_to_fit();
    }
}

}  // namespace mrsr
