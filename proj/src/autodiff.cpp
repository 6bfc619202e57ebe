#include "leaf/autodiff.hpp"

#include <unordered_set>

namespace leaf {

namespace {
thread_local bool g_grad_enabled = true;
}

void Node::accumulate(const Tensor& g) {
    if (!requires_grad) return;
    if (g.shape() != value.shape()) {
        throw ShapeError("gradient shape " + shape_str(g.shape()) + " does not match value shape " +
                         shape_str(value.shape()));
    }
    if (grad.empty()) {
        grad = g;
        return;
    }
    auto dst = grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
    if (!node_->grad.empty()) return node_->grad;
    return Tensor::zeros(node_->value.shape());
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any && g_grad_enabled) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (auto& p : parents) node->parents.push_back(p.node());
        node->backward = std::move(backward);
    }
    return Var(std::move(node));
}

void backward(const Var& root) {
    if (!root) throw ContractError("backward called on an empty Var");
    if (root.size() != 1) {
        throw ContractError("backward root must be scalar-valued, got shape " + shape_str(root.shape()));
    }
    if (!root.requires_grad()) return;

    // Iterative post-order DFS; parents are visited in construction order so
    // the sweep order depends only on how the graph was built.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Interior gradients are per-sweep; only leaves accumulate across sweeps.
    for (Node* node : order) {
        if (node->backward) node->grad = Tensor{};
    }
    root.node()->accumulate(Tensor::ones(root.shape()));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward && !node->grad.empty()) node->backward(*node);
    }
}

}  // namespace leaf
