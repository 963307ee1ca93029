#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "greenup/rng.hpp"

namespace greenup {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> values;
    // Empty until something writes a gradient into it.
    std::vector<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(TensorNode&)> backward;

    std::vector<T>& ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), T(0));
        return grad;
    }
};

}  // namespace detail

// Dense row-major tensor with a handle to its node in the reverse-mode graph.
// Copies share the node; values are treated as immutable once an op has
// consumed them, except through mutable_values() on leaves (optimizer steps,
// finite-difference probes).
template <typename T>
class BasicTensor {
public:
    using value_type = T;
    using Node = detail::TensorNode<T>;

    BasicTensor() = default;

    static BasicTensor zeros(const Shape& shape, bool requires_grad = false);
    static BasicTensor constant(const Shape& shape, T value, bool requires_grad = false);
    static BasicTensor uniform(const Shape& shape, Rng& rng, double lo, double hi, bool requires_grad = false);
    static BasicTensor normal(const Shape& shape, Rng& rng, double mean, double stddev,
                              bool requires_grad = false);
    static BasicTensor from_values(const Shape& shape, std::vector<T> values, bool requires_grad = false);
    static BasicTensor scalar(T value, bool requires_grad = false) {
        return from_values({1}, {value}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node().shape; }
    std::size_t rank() const { return node().shape.size(); }
    std::size_t dim(std::size_t axis) const { return node().shape.at(axis); }
    std::size_t numel() const { return node().values.size(); }

    std::span<const T> values() const { return node().values; }
    std::span<T> mutable_values() { return node().values; }
    T item() const;

    bool requires_grad() const { return node().requires_grad; }
    void set_requires_grad(bool flag) { node().requires_grad = flag; }
    bool has_grad() const { return !node().grad.empty(); }
    std::span<const T> grad() const;
    void zero_grad() { node().grad.clear(); }

    // New leaf holding a copy of the values, cut from the graph.
    BasicTensor detach() const;

    template <typename U>
    BasicTensor<U> cast() const {
        std::vector<U> out(values().begin(), values().end());
        return BasicTensor<U>::from_values(shape(), std::move(out), requires_grad());
    }

    // Reverse-mode pass from this scalar. Leaf gradients accumulate across
    // calls; intermediate gradients are recomputed.
    void backward() const;

    // Internal: builds an op result and wires it into the graph when any
    // parent requires a gradient.
    static BasicTensor make_result(Shape shape, std::vector<T> values, std::vector<BasicTensor> parents,
                                   std::function<void(Node&)> backward_fn);

    const std::shared_ptr<Node>& node_ptr() const { return node_; }

private:
    explicit BasicTensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    Node& node() const;

    std::shared_ptr<Node> node_;
};

// While alive, ops on this thread record no graph (inference only).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool grad_enabled();

private:
    bool previous_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Forward ops. Every op validates shapes and throws ShapeError naming both
// operands' shapes on mismatch.

// A[..., m, k] x B[k, n] (B broadcast over A's leading dims) or
// A[..., m, k] x B[..., k, n] with identical leading dims.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Elementwise; B may equal A's shape or a trailing suffix of it (bias broadcast).
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor);

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& a);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& a);
// Normalizes the last axis to zero mean and unit variance (no affine part).
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& a, T eps);

// Joins along `axis`; all other dims must agree. Default is the last axis.
template <typename T>
BasicTensor<T> concat(std::span<const BasicTensor<T>> parts, int axis = -1);
template <typename T>
BasicTensor<T> concat(std::initializer_list<BasicTensor<T>> parts, int axis = -1) {
    std::vector<BasicTensor<T>> v(parts);
    return concat(std::span<const BasicTensor<T>>(v), axis);
}

template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& a, int axis, std::size_t begin, std::size_t end);
template <typename T>
BasicTensor<T> slice_last(const BasicTensor<T>& a, std::size_t begin, std::size_t end) {
    return slice(a, -1, begin, end);
}

template <typename T>
BasicTensor<T> transpose_last_two(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, const Shape& shape);

template <typename T>
BasicTensor<T> mean_all(const BasicTensor<T>& a);

// Mean binary cross-entropy over the batch, computed from logits as
// max(z, 0) - z*y + log(1 + exp(-|z|)). `labels` must be 0 or 1.
template <typename T>
BasicTensor<T> bce_with_logits(const BasicTensor<T>& logits, std::span<const T> labels);

}  // namespace greenup
