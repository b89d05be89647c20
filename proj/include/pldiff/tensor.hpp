#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pldiff/rng.hpp"

namespace pldiff {

// Dense row-major tensor with reverse-mode autodiff on a dynamic tape.
// Every primitive op checks its output for NaN/Inf and throws. Shapes are
// explicit; the only broadcasting anywhere is row-vector bias against the
// leading (row) dimension, done by dedicated ops.

template <typename T>
struct Node {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;  // lazily sized; accumulates until zeroed
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void()> backprop;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
    void acc_grad(std::size_t i, T g) { grad[i] += g; }
};

template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape) {
        return filled(std::move(shape), T(0));
    }

    static Tensor filled(std::vector<int> shape, T v) {
        Tensor t = raw(std::move(shape));
        std::fill(t.data().begin(), t.data().end(), v);
        return t;
    }

    static Tensor from(std::vector<int> shape, std::vector<T> values) {
        Tensor t = raw(std::move(shape));
        if (values.size() != t.size())
            throw std::invalid_argument("Tensor::from: data length does not match shape");
        t.node_->value = std::move(values);
        return t;
    }

    static Tensor scalar(T v) { return from({1}, {v}); }

    static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
        Tensor t = raw(std::move(shape));
        for (auto& v : t.data()) v = static_cast<T>(rng.normal() * stddev);
        return t;
    }

    // uninitialized storage, internal use by ops
    static Tensor raw(std::vector<int> shape) {
        Tensor t;
        t.node_ = std::make_shared<Node<T>>();
        std::size_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension");
            n *= static_cast<std::size_t>(d);
        }
        t.node_->shape = std::move(shape);
        t.node_->value.resize(n);
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    int rows() const { return node_->shape[0]; }
    int cols() const { return node_->shape.size() > 1 ? node_->shape[1] : 1; }
    std::size_t size() const { return node_->value.size(); }

    std::vector<T>& data() { return node_->value; }
    const std::vector<T>& data() const { return node_->value; }
    T operator[](std::size_t i) const { return node_->value[i]; }

    T item() const {
        if (size() != 1) throw std::runtime_error("item(): tensor is not scalar");
        return node_->value[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool rg) {
        node_->requires_grad = rg;
        return *this;
    }

    std::vector<T>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }

    // Fresh leaf carrying a copy of the values, cut off from the tape.
    Tensor detach() const {
        Tensor t = raw(node_->shape);
        t.node_->value = node_->value;
        return t;
    }

    // Reverse pass from a scalar. Visits each node exactly once.
    void backward() {
        if (size() != 1) throw std::runtime_error("backward(): loss must be scalar");
        if (!node_->requires_grad)
            throw std::runtime_error("backward(): loss does not require grad (no parameters reached)");
        std::vector<Node<T>*> order = topo_order();
        node_->ensure_grad();
        node_->grad[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if ((*it)->backprop) (*it)->backprop();
        }
    }

    std::shared_ptr<Node<T>>& node() { return node_; }
    const std::shared_ptr<Node<T>>& node() const { return node_; }

private:
    std::vector<Node<T>*> topo_order() const {
        std::vector<Node<T>*> order;
        std::unordered_set<Node<T>*> done;
        // iterative postorder; second element is next-parent index
        std::vector<std::pair<Node<T>*, std::size_t>> stack;
        stack.emplace_back(node_.get(), 0);
        while (!stack.empty()) {
            auto& [n, idx] = stack.back();
            if (done.count(n)) {
                stack.pop_back();
                continue;
            }
            if (idx < n->parents.size()) {
                Node<T>* p = n->parents[idx].get();
                ++idx;
                if (!done.count(p) && p->requires_grad) stack.emplace_back(p, 0);
            } else {
                done.insert(n);
                n->ensure_grad();
                order.push_back(n);
                stack.pop_back();
            }
        }
        return order;
    }

    std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
inline void finite_check(const Tensor<T>& t, const char* op) {
    for (T v : t.data()) {
        if (!std::isfinite(static_cast<double>(v)))
            throw std::runtime_error(std::string("non-finite output in op '") + op + "'");
    }
}

template <typename T>
inline void attach(Tensor<T>& out, const char* op, std::vector<Tensor<T>> parents,
                   std::function<void()> backprop) {
    auto& n = *out.node();
    n.op = op;
    bool rg = false;
    for (auto& p : parents) {
        rg = rg || p.requires_grad();
        n.parents.push_back(p.node());
    }
    n.requires_grad = rg;
    if (rg) n.backprop = std::move(backprop);
    finite_check(out, op);
}

template <typename T>
inline void same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace detail

}  // namespace pldiff
