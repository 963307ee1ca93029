#include "greenup/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "greenup/errors.hpp"

namespace greenup {

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

namespace {

void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("invalid shape: rank must be at least 1");
    for (auto d : shape) {
        if (d == 0) throw ShapeError("invalid shape " + shape_to_string(shape) + ": dimensions must be >= 1");
    }
}

std::string pair_message(const char* op, const Shape& a, const Shape& b) {
    return std::string(op) + ": incompatible shapes " + shape_to_string(a) + " and " + shape_to_string(b);
}

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
    const int r = static_cast<int>(rank);
    const int resolved = axis < 0 ? axis + r : axis;
    if (resolved < 0 || resolved >= r) {
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
    }
    return static_cast<std::size_t>(resolved);
}

// Outer/inner extents when viewing a tensor as [outer, axis, inner].
struct AxisView {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
    AxisView v;
    for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
    v.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
    return v;
}

// True when `b` equals `a` or a trailing suffix of it.
bool is_suffix_shape(const Shape& a, const Shape& b) {
    if (b.size() > a.size()) return false;
    return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    // c[m,n] += a[m,k] * b[k,n]
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        const T* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void gemm_acc_bt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
    // c[m,k] += a[m,n] * b[k,n]^T
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * n;
        T* crow = c + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T* brow = b + p * n;
            T acc = T(0);
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

template <typename T>
void gemm_acc_at(const T* a, const T* g, T* c, std::size_t m, std::size_t k, std::size_t n) {
    // c[k,n] += a[m,k]^T * g[m,n]
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        const T* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            T* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
        }
    }
}

template <typename T>
using NodeT = detail::TensorNode<T>;

// dydx(x, y) is the local derivative given input x and output y.
template <typename T, typename Fwd, typename Deriv>
BasicTensor<T> unary_op(const BasicTensor<T>& a, Fwd fwd, Deriv dydx) {
    std::vector<T> out(a.numel());
    auto in = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
    return BasicTensor<T>::make_result(a.shape(), std::move(out), {a}, [dydx](NodeT<T>& self) {
        auto& parent = *self.parents[0];
        auto& pg = parent.ensure_grad();
        for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i] * dydx(parent.values[i], self.values[i]);
    });
}

}  // namespace

// ---------------------------------------------------------------------------
// Grad mode

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// BasicTensor

template <typename T>
typename BasicTensor<T>::Node& BasicTensor<T>::node() const {
    if (!node_) throw ContractError("use of undefined tensor");
    return *node_;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_values(const Shape& shape, std::vector<T> values, bool requires_grad) {
    validate_shape(shape);
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("invalid shape " + shape_to_string(shape) + " for " + std::to_string(values.size()) +
                         " values");
    }
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    return BasicTensor(std::move(node));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(const Shape& shape, bool requires_grad) {
    return constant(shape, T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::constant(const Shape& shape, T value, bool requires_grad) {
    validate_shape(shape);
    return from_values(shape, std::vector<T>(shape_numel(shape), value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::uniform(const Shape& shape, Rng& rng, double lo, double hi, bool requires_grad) {
    validate_shape(shape);
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
    return from_values(shape, std::move(v), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::normal(const Shape& shape, Rng& rng, double mean, double stddev,
                                      bool requires_grad) {
    validate_shape(shape);
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.normal(mean, stddev));
    return from_values(shape, std::move(v), requires_grad);
}

template <typename T>
T BasicTensor<T>::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
    return node().values[0];
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
    if (node().grad.empty()) throw ContractError("tensor has no gradient");
    return node().grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
    return from_values(shape(), node().values, false);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::make_result(Shape shape, std::vector<T> values, std::vector<BasicTensor> parents,
                                           std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    const bool needs = g_grad_enabled && std::any_of(parents.begin(), parents.end(), [](const BasicTensor& p) {
                                             return p.requires_grad();
                                         });
    if (needs) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (auto& p : parents) node->parents.push_back(p.node_);
        node->backward = std::move(backward_fn);
    }
    return BasicTensor(std::move(node));
}

template <typename T>
void BasicTensor<T>::backward() const {
    if (numel() != 1) {
        throw ContractError("backward() requires a scalar loss, got shape " + shape_to_string(shape()));
    }
    if (!requires_grad()) throw ContractError("backward() on a tensor that does not require grad");

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (Node* n : order) {
        if (n->backward) {
            n->grad.assign(n->values.size(), T(0));
        } else {
            n->ensure_grad();
        }
    }
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) (*it)->backward(**it);
    }
}

// ---------------------------------------------------------------------------
// Ops

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as.size() < 2 || bs.size() < 2) throw ShapeError(pair_message("matmul", as, bs));
    const std::size_t m = as[as.size() - 2];
    const std::size_t k = as.back();
    const std::size_t n = bs.back();
    if (bs[bs.size() - 2] != k) throw ShapeError(pair_message("matmul", as, bs));
    const bool broadcast_b = bs.size() == 2;
    if (!broadcast_b && (bs.size() != as.size() || !std::equal(as.begin(), as.end() - 2, bs.begin()))) {
        throw ShapeError(pair_message("matmul", as, bs));
    }
    std::size_t batch = 1;
    for (std::size_t i = 0; i + 2 < as.size(); ++i) batch *= as[i];

    Shape out_shape(as.begin(), as.end() - 2);
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<T> out(batch * m * n, T(0));
    const T* ap = a.values().data();
    const T* bp = b.values().data();
    if (broadcast_b) {
        gemm_acc(ap, bp, out.data(), batch * m, k, n);
    } else {
        for (std::size_t s = 0; s < batch; ++s) {
            gemm_acc(ap + s * m * k, bp + s * k * n, out.data() + s * m * n, m, k, n);
        }
    }
    return BasicTensor<T>::make_result(std::move(out_shape), std::move(out), {a, b},
                                       [batch, m, k, n, broadcast_b](NodeT<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const T* g = self.grad.data();
        if (pa.requires_grad) {
            T* ga = pa.ensure_grad().data();
            if (broadcast_b) {
                gemm_acc_bt(g, pb.values.data(), ga, batch * m, n, k);
            } else {
                for (std::size_t s = 0; s < batch; ++s) {
                    gemm_acc_bt(g + s * m * n, pb.values.data() + s * k * n, ga + s * m * k, m, n, k);
                }
            }
        }
        if (pb.requires_grad) {
            T* gb = pb.ensure_grad().data();
            if (broadcast_b) {
                gemm_acc_at(pa.values.data(), g, gb, batch * m, k, n);
            } else {
                for (std::size_t s = 0; s < batch; ++s) {
                    gemm_acc_at(pa.values.data() + s * m * k, g + s * m * n, gb + s * k * n, m, k, n);
                }
            }
        }
    });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (!is_suffix_shape(a.shape(), b.shape())) throw ShapeError(pair_message("add", a.shape(), b.shape()));
    const std::size_t nb = b.numel();
    std::vector<T> out(a.values().begin(), a.values().end());
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % nb];
    return BasicTensor<T>::make_result(a.shape(), std::move(out), {a, b}, [nb](NodeT<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& ga = pa.ensure_grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            auto& gb = pb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % nb] += self.grad[i];
        }
    });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (!is_suffix_shape(a.shape(), b.shape())) throw ShapeError(pair_message("mul", a.shape(), b.shape()));
    const std::size_t nb = b.numel();
    std::vector<T> out(a.numel());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i % nb];
    return BasicTensor<T>::make_result(a.shape(), std::move(out), {a, b}, [nb](NodeT<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& ga = pa.ensure_grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * pb.values[i % nb];
        }
        if (pb.requires_grad) {
            auto& gb = pb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % nb] += self.grad[i] * pa.values[i];
        }
    });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
    std::vector<T> out(a.values().begin(), a.values().end());
    for (auto& x : out) x *= factor;
    return BasicTensor<T>::make_result(a.shape(), std::move(out), {a}, [factor](NodeT<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
    });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& a) {
    return unary_op<T>(
        a,
        [](T x) {
            // Branch keeps exp() from overflowing for large |x|.
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            const T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& a) {
    return unary_op<T>(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& a) {
    return unary_op<T>(a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& a) {
    const std::size_t cols = a.shape().back();
    const std::size_t rows = a.numel() / cols;
    std::vector<T> out(a.numel());
    auto in = a.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = in.data() + r * cols;
        T* y = out.data() + r * cols;
        const T mx = *std::max_element(x, x + cols);
        T sum = T(0);
        for (std::size_t j = 0; j < cols; ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        for (std::size_t j = 0; j < cols; ++j) y[j] /= sum;
    }
    return BasicTensor<T>::make_result(a.shape(), std::move(out), {a}, [rows, cols](NodeT<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const T* y = self.values.data() + r * cols;
            const T* gy = self.grad.data() + r * cols;
            T dot = T(0);
            for (std::size_t j = 0; j < cols; ++j) dot += gy[j] * y[j];
            for (std::size_t j = 0; j < cols; ++j) g[r * cols + j] += y[j] * (gy[j] - dot);
        }
    });
}

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& a, T eps) {
    const std::size_t cols = a.shape().back();
    const std::size_t rows = a.numel() / cols;
    std::vector<T> out(a.numel());
    std::vector<T> inv_std(rows);
    auto in = a.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = in.data() + r * cols;
        T mean = T(0);
        for (std::size_t j = 0; j < cols; ++j) mean += x[j];
        mean /= static_cast<T>(cols);
        T var = T(0);
        for (std::size_t j = 0; j < cols; ++j) var += (x[j] - mean) * (x[j] - mean);
        var /= static_cast<T>(cols);
        inv_std[r] = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = (x[j] - mean) * inv_std[r];
    }
    return BasicTensor<T>::make_result(
        a.shape(), std::move(out), {a}, [rows, cols, inv_std = std::move(inv_std)](NodeT<T>& self) {
            auto& g = self.parents[0]->ensure_grad();
            const T n = static_cast<T>(cols);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* y = self.values.data() + r * cols;
                const T* gy = self.grad.data() + r * cols;
                T sum_g = T(0);
                T sum_gy = T(0);
                for (std::size_t j = 0; j < cols; ++j) {
                    sum_g += gy[j];
                    sum_gy += gy[j] * y[j];
                }
                for (std::size_t j = 0; j < cols; ++j) {
                    g[r * cols + j] += inv_std[r] * (gy[j] - sum_g / n - y[j] * sum_gy / n);
                }
            }
        });
}

template <typename T>
BasicTensor<T> concat(std::span<const BasicTensor<T>> parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& first = parts[0].shape();
    const std::size_t ax = normalize_axis(axis, first.size(), "concat");
    Shape out_shape = first;
    out_shape[ax] = 0;
    std::vector<std::size_t> extents;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == ax) || s[i] == first[i];
        if (!ok) throw ShapeError(pair_message("concat", first, s));
        out_shape[ax] += s[ax];
        extents.push_back(s[ax]);
    }
    const AxisView view = axis_view(out_shape, ax);
    std::vector<T> out(shape_numel(out_shape));
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        auto src = parts[p].values();
        const std::size_t block = extents[p] * view.inner;
        for (std::size_t o = 0; o < view.outer; ++o) {
            std::copy_n(src.data() + o * block, block, out.data() + (o * view.extent + offset) * view.inner);
        }
        offset += extents[p];
    }
    std::vector<BasicTensor<T>> parents(parts.begin(), parts.end());
    return BasicTensor<T>::make_result(std::move(out_shape), std::move(out), std::move(parents),
                                       [view, extents](NodeT<T>& self) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < extents.size(); ++p) {
            auto& parent = *self.parents[p];
            const std::size_t block = extents[p] * view.inner;
            if (parent.requires_grad) {
                auto& g = parent.ensure_grad();
                for (std::size_t o = 0; o < view.outer; ++o) {
                    const T* src = self.grad.data() + (o * view.extent + off) * view.inner;
                    T* dst = g.data() + o * block;
                    for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                }
            }
            off += extents[p];
        }
    });
}

template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& a, int axis, std::size_t begin, std::size_t end) {
    const std::size_t ax = normalize_axis(axis, a.rank(), "slice");
    if (begin >= end || end > a.shape()[ax]) {
        throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for shape " + shape_to_string(a.shape()));
    }
    const AxisView view = axis_view(a.shape(), ax);
    Shape out_shape = a.shape();
    out_shape[ax] = end - begin;
    const std::size_t block = (end - begin) * view.inner;
    std::vector<T> out(view.outer * block);
    auto in = a.values();
    for (std::size_t o = 0; o < view.outer; ++o) {
        std::copy_n(in.data() + (o * view.extent + begin) * view.inner, block, out.data() + o * block);
    }
    return BasicTensor<T>::make_result(std::move(out_shape), std::move(out), {a},
                                       [view, begin, block](NodeT<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t o = 0; o < view.outer; ++o) {
            T* dst = g.data() + (o * view.extent + begin) * view.inner;
            const T* src = self.grad.data() + o * block;
            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
    });
}

template <typename T>
BasicTensor<T> transpose_last_two(const BasicTensor<T>& a) {
    if (a.rank() < 2) throw ShapeError("transpose_last_two: rank < 2 for shape " + shape_to_string(a.shape()));
    const std::size_t r = a.shape()[a.rank() - 2];
    const std::size_t c = a.shape().back();
    const std::size_t batch = a.numel() / (r * c);
    Shape out_shape = a.shape();
    std::swap(out_shape[out_shape.size() - 2], out_shape.back());
    std::vector<T> out(a.numel());
    auto in = a.values();
    for (std::size_t s = 0; s < batch; ++s) {
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) out[s * r * c + j * r + i] = in[s * r * c + i * c + j];
        }
    }
    return BasicTensor<T>::make_result(std::move(out_shape), std::move(out), {a}, [batch, r, c](NodeT<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t s = 0; s < batch; ++s) {
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < c; ++j) g[s * r * c + i * c + j] += self.grad[s * r * c + j * r + i];
            }
        }
    });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, const Shape& shape) {
    validate_shape(shape);
    if (shape_numel(shape) != a.numel()) throw ShapeError(pair_message("reshape", a.shape(), shape));
    std::vector<T> out(a.values().begin(), a.values().end());
    return BasicTensor<T>::make_result(shape, std::move(out), {a}, [](NodeT<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

template <typename T>
BasicTensor<T> mean_all(const BasicTensor<T>& a) {
    T sum = T(0);
    for (T v : a.values()) sum += v;
    const T n = static_cast<T>(a.numel());
    return BasicTensor<T>::make_result({1}, {sum / n}, {a}, [n](NodeT<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        const T d = self.grad[0] / n;
        for (auto& x : g) x += d;
    });
}

template <typename T>
BasicTensor<T> bce_with_logits(const BasicTensor<T>& logits, std::span<const T> labels) {
    if (logits.numel() != labels.size()) {
        throw ShapeError("bce_with_logits: " + std::to_string(labels.size()) + " labels for logits of shape " +
                         shape_to_string(logits.shape()));
    }
    for (T y : labels) {
        if (y != T(0) && y != T(1)) throw ContractError("bce_with_logits: labels must be 0 or 1");
    }
    std::vector<T> ys(labels.begin(), labels.end());
    auto z = logits.values();
    T sum = T(0);
    for (std::size_t i = 0; i < ys.size(); ++i) {
        sum += std::max(z[i], T(0)) - z[i] * ys[i] + std::log1p(std::exp(-std::abs(z[i])));
    }
    const T n = static_cast<T>(ys.size());
    return BasicTensor<T>::make_result({1}, {sum / n}, {logits}, [ys = std::move(ys), n](NodeT<T>& self) {
        auto& parent = *self.parents[0];
        auto& g = parent.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T zi = parent.values[i];
            const T s = zi >= T(0) ? T(1) / (T(1) + std::exp(-zi)) : std::exp(zi) / (T(1) + std::exp(zi));
            g[i] += self.grad[0] * (s - ys[i]) / n;
        }
    });
}

// ---------------------------------------------------------------------------
// Explicit instantiations

#define GREENUP_INSTANTIATE_OPS(T)                                                              \
    template class BasicTensor<T>;                                                              \
    template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);               \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                  \
    template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                  \
    template BasicTensor<T> scale(const BasicTensor<T>&, T);                                    \
    template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                     \
    template BasicTensor<T> tanh(const BasicTensor<T>&);                                        \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                        \
    template BasicTensor<T> softmax(const BasicTensor<T>&);                                     \
    template BasicTensor<T> layer_norm(const BasicTensor<T>&, T);                               \
    template BasicTensor<T> concat(std::span<const BasicTensor<T>>, int);                       \
    template BasicTensor<T> slice(const BasicTensor<T>&, int, std::size_t, std::size_t);        \
    template BasicTensor<T> transpose_last_two(const BasicTensor<T>&);                          \
    template BasicTensor<T> reshape(const BasicTensor<T>&, const Shape&);                       \
    template BasicTensor<T> mean_all(const BasicTensor<T>&);                                    \
    template BasicTensor<T> bce_with_logits(const BasicTensor<T>&, std::span<const T>);

GREENUP_INSTANTIATE_OPS(float)
GREENUP_INSTANTIATE_OPS(double)

#undef GREENUP_INSTANTIATE_OPS

}  // namespace greenup
