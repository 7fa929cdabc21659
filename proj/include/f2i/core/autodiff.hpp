#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "f2i/core/tensor.hpp"

namespace f2i {

template <class T>
struct NodeT;

template <class T>
using VarT = std::shared_ptr<NodeT<T>>;

/// One value in a computation. Leaves are parameters (needs_grad) or inputs;
/// interior nodes carry a pull-style backward closure.
template <class T>
struct NodeT {
    TensorT<T> val;
    TensorT<T> grad;  // lazily allocated; zeros
    bool needs_grad = false;
    std::vector<VarT<T>> parents;
    std::function<void(NodeT<T>&)> back;

    TensorT<T>& g() {
        if (grad.numel() == 0) grad = TensorT<T>::zeros(val.shape());
        return grad;
    }
    bool has_grad() const { return grad.numel() != 0; }
    void zero_grad() { grad = TensorT<T>(); }
};

/// Reverse-mode tape. Nodes are recorded in creation order; backward walks
/// the tape in reverse, so every consumer has already deposited its
/// contribution before a node propagates to its parents. Single-threaded by
/// construction: reduction order is fixed and runs are bit-reproducible.
template <class T>
class GraphT {
  public:
    VarT<T> node(TensorT<T> val, std::vector<VarT<T>> parents,
                 std::function<void(NodeT<T>&)> back) {
        auto n = std::make_shared<NodeT<T>>();
        n->val = std::move(val);
        for (const auto& p : parents)
            if (p && p->needs_grad) n->needs_grad = true;
        if (n->needs_grad) {
            n->parents = std::move(parents);
            n->back = std::move(back);
            tape_.push_back(n);
        }
        return n;
    }

    static VarT<T> leaf(TensorT<T> val, bool needs_grad = false) {
        auto n = std::make_shared<NodeT<T>>();
        n->val = std::move(val);
        n->needs_grad = needs_grad;
        return n;
    }

    /// Backpropagate from a scalar root. Parameter leaves accumulate into
    /// their grad buffers (the optimizer consumes and clears them).
    void backward(const VarT<T>& root) {
        if (root->val.numel() != 1) throw ShapeError("backward: root must be scalar");
        if (!root->needs_grad) return;
        root->g()[0] = T(1);
        for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
            NodeT<T>& n = **it;
            if (!n.has_grad() || !n.back) continue;
            n.back(n);
        }
    }

    size_t size() const { return tape_.size(); }

  private:
    std::vector<VarT<T>> tape_;
};

using Var = VarT<float>;
using Graph = GraphT<float>;

}  // namespace f2i
