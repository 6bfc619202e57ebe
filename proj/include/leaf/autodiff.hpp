#pragma once

#include "leaf/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace leaf {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the define-by-run graph. `backward` reads `grad` and
/// accumulates into `parents`.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward;

    void accumulate(const Tensor& g);
};

/// Handle to a graph node. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);
    explicit Var(NodePtr node) : node_(std::move(node)) {}

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    Index size() const { return node_->value.size(); }
    Index dim(Index axis) const { return node_->value.dim(axis); }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    /// Accumulated gradient, or zeros of the value's shape if none flowed here.
    Tensor grad() const;
    void zero_grad() { node_->grad = Tensor{}; }

    const NodePtr& node() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

private:
    NodePtr node_;
};

inline Var constant(Tensor t) { return Var(std::move(t), false); }

/// Reverse sweep from a single-element root. Gradients accumulate into
/// every reachable node that requires grad.
void backward(const Var& root);

bool grad_enabled();

/// Disables graph recording for its lifetime (inference, evaluation).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Builds an op result. The backward closure is dropped when no parent
/// requires grad or recording is disabled.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

}  // namespace leaf
