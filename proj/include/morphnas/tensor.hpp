// Dense tensor with reverse-mode autodiff. Covers exactly the operations the
// rest of the project needs; no broadcasting, no views, row-major storage.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace morphnas {

using Shape = std::vector<int>;

inline std::int64_t numel_of(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) {
        if (d <= 0) throw std::invalid_argument("tensor: non-positive dim in shape");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

template <typename T>
class Tensor;

template <typename T>
using Var = std::shared_ptr<Tensor<T>>;

// Graph node. Immutable data after creation except grad accumulation during
// a single backward pass. Parents are held by shared_ptr, so releasing the
// loss releases the whole graph.
template <typename T>
class Tensor {
public:
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::vector<T> grad;                 // sized lazily, same length as data
    std::vector<Var<T>> parents;
    std::function<void()> backward_fn;   // empty for leaves

    static Var<T> create(Shape s, bool req_grad = false) {
        auto t = std::make_shared<Tensor<T>>();
        t->shape = std::move(s);
        t->data.assign(static_cast<std::size_t>(numel_of(t->shape)), T(0));
        t->requires_grad = req_grad;
        return t;
    }

    static Var<T> from_data(Shape s, std::vector<T> d, bool req_grad = false) {
        auto t = std::make_shared<Tensor<T>>();
        t->shape = std::move(s);
        if (static_cast<std::int64_t>(d.size()) != numel_of(t->shape))
            throw std::invalid_argument("tensor: data length " + std::to_string(d.size()) +
                                        " does not match shape " + shape_str(t->shape));
        t->data = std::move(d);
        t->requires_grad = req_grad;
        return t;
    }

    static Var<T> scalar(T v) { return from_data({1}, {v}); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int dim(std::size_t i) const { return shape.at(i); }
    std::size_t rank() const { return shape.size(); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }

    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
    }

    void accumulate(const std::vector<T>& g) {
        ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
    }
};

namespace detail {

// Deterministic topological order: iterative DFS following stored parent order.
template <typename T>
std::vector<Tensor<T>*> topo_order(Tensor<T>* root) {
    std::vector<Tensor<T>*> order;
    std::unordered_set<Tensor<T>*> visited;
    std::vector<std::pair<Tensor<T>*, std::size_t>> stack;
    stack.push_back({root, 0});
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor<T>* p = node->parents[next++].get();
            if (!visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;  // parents before children
}

}  // namespace detail

// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
// requires_grad ancestor. The loss must be scalar.
template <typename T>
void backward(const Var<T>& loss) {
    if (!loss) throw std::invalid_argument("backward: null loss");
    if (loss->numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss->shape));
    auto order = detail::topo_order(loss.get());
    loss->ensure_grad();
    loss->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor<T>* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn();
    }
}

namespace detail {

template <typename T>
Var<T> unary_result(const Var<T>& x, Shape shape) {
    auto out = Tensor<T>::create(std::move(shape));
    out->requires_grad = x->requires_grad;
    if (out->requires_grad) out->parents = {x};
    return out;
}

template <typename T>
Var<T> binary_result(const Var<T>& a, const Var<T>& b, Shape shape) {
    auto out = Tensor<T>::create(std::move(shape));
    out->requires_grad = a->requires_grad || b->requires_grad;
    if (out->requires_grad) out->parents = {a, b};
    return out;
}

template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
    if (a->shape != b->shape)
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a->shape) +
                                    " vs " + shape_str(b->shape));
}

}  // namespace detail

// ---- elementwise ----

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    detail::check_same_shape(a, b, "add");
    auto out = detail::binary_result(a, b, a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [a, b, o] {
            if (a->requires_grad) a->accumulate(o->grad);
            if (b->requires_grad) b->accumulate(o->grad);
        };
    }
    return out;
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    detail::check_same_shape(a, b, "sub");
    auto out = detail::binary_result(a, b, a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] - b->data[i];
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [a, b, o] {
            if (a->requires_grad) a->accumulate(o->grad);
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) b->grad[i] -= o->grad[i];
            }
        };
    }
    return out;
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    detail::check_same_shape(a, b, "mul");
    auto out = detail::binary_result(a, b, a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [a, b, o] {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i] * b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) b->grad[i] += o->grad[i] * a->data[i];
            }
        };
    }
    return out;
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, T c) {
    auto out = detail::unary_result(a, a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] * c;
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [a, c, o] {
            a->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i] * c;
        };
    }
    return out;
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
    auto out = detail::unary_result(a, a->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] + c;
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [a, o] { a->accumulate(o->grad); };
    }
    return out;
}

template <typename T>
Var<T> neg(const Var<T>& a) { return mul_scalar(a, T(-1)); }

// ---- activations ----

template <typename T>
Var<T> relu(const Var<T>& x) {
    auto out = detail::unary_result(x, x->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = x->data[i] > T(0) ? x->data[i] : T(0);
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [x, o] {
            x->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i)
                if (x->data[i] > T(0)) x->grad[i] += o->grad[i];
        };
    }
    return out;
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    auto out = detail::unary_result(x, x->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = T(1) / (T(1) + std::exp(-x->data[i]));
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [x, o] {
            x->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) {
                T s = o->data[i];
                x->grad[i] += o->grad[i] * s * (T(1) - s);
            }
        };
    }
    return out;
}

template <typename T>
Var<T> tanh_op(const Var<T>& x) {
    auto out = detail::unary_result(x, x->shape);
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = std::tanh(x->data[i]);
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [x, o] {
            x->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) {
                T t = o->data[i];
                x->grad[i] += o->grad[i] * (T(1) - t * t);
            }
        };
    }
    return out;
}

// ---- reductions ----

template <typename T>
Var<T> sum(const Var<T>& x) {
    auto out = detail::unary_result(x, Shape{1});
    T acc = T(0);
    for (T v : x->data) acc += v;
    out->data[0] = acc;
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [x, o] {
            x->ensure_grad();
            T g = o->grad[0];
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
        };
    }
    return out;
}

template <typename T>
Var<T> mean(const Var<T>& x) {
    return mul_scalar(sum(x), T(1) / static_cast<T>(x->numel()));
}

// ---- shape ----

template <typename T>
Var<T> reshape(const Var<T>& x, Shape new_shape) {
    if (numel_of(new_shape) != x->numel())
        throw std::invalid_argument("reshape: numel mismatch " + shape_str(x->shape) + " -> " + shape_str(new_shape));
    auto out = detail::unary_result(x, std::move(new_shape));
    out->data = x->data;
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [x, o] { x->accumulate(o->grad); };
    }
    return out;
}

// Concatenation along a given axis; all inputs must agree on the other dims.
template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
    if (xs.empty()) throw std::invalid_argument("concat: empty input list");
    const Shape& s0 = xs[0]->shape;
    if (axis < 0 || axis >= static_cast<int>(s0.size()))
        throw std::invalid_argument("concat: bad axis");
    Shape out_shape = s0;
    int axis_total = 0;
    for (const auto& x : xs) {
        if (x->rank() != s0.size()) throw std::invalid_argument("concat: rank mismatch");
        for (std::size_t d = 0; d < s0.size(); ++d)
            if (static_cast<int>(d) != axis && x->shape[d] != s0[d])
                throw std::invalid_argument("concat: shape mismatch on non-concat axis");
        axis_total += x->shape[axis];
    }
    out_shape[axis] = axis_total;

    std::int64_t inner = 1;
    for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];
    std::int64_t outer = 1;
    for (int d = 0; d < axis; ++d) outer *= s0[d];

    auto out = Tensor<T>::create(out_shape);
    for (const auto& x : xs) out->requires_grad = out->requires_grad || x->requires_grad;
    if (out->requires_grad) out->parents = xs;

    std::int64_t offset = 0;
    for (const auto& x : xs) {
        std::int64_t block = static_cast<std::int64_t>(x->shape[axis]) * inner;
        for (std::int64_t oidx = 0; oidx < outer; ++oidx) {
            const T* src = x->data.data() + oidx * block;
            T* dst = out->data.data() + oidx * axis_total * inner + offset;
            std::copy(src, src + block, dst);
        }
        offset += block;
    }
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        std::vector<Var<T>> inputs = xs;
        out->backward_fn = [inputs, o, inner, outer, axis_total] {
            std::int64_t offset = 0;
            for (const auto& x : inputs) {
                const std::int64_t block = x->numel() / outer;  // shape[axis] * inner
                if (x->requires_grad) {
                    x->ensure_grad();
                    for (std::int64_t oidx = 0; oidx < outer; ++oidx) {
                        const T* g = o->grad.data() + oidx * axis_total * inner + offset;
                        T* dst = x->grad.data() + oidx * block;
                        for (std::int64_t i = 0; i < block; ++i) dst[i] += g[i];
                    }
                }
                offset += block;
            }
        };
    }
    return out;
}

// ---- linear algebra ----

// x: (N, in), w: (out, in), b: (out) or null -> (N, out)
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    if (x->rank() != 2 || w->rank() != 2)
        throw std::invalid_argument("linear: expects 2-d input and weight");
    const int n = x->dim(0), in = x->dim(1), out_f = w->dim(0);
    if (w->dim(1) != in)
        throw std::invalid_argument("linear: weight in-features " + std::to_string(w->dim(1)) +
                                    " != input features " + std::to_string(in));
    if (b && (b->rank() != 1 || b->dim(0) != out_f))
        throw std::invalid_argument("linear: bad bias shape");

    auto out = Tensor<T>::create({n, out_f});
    out->requires_grad = x->requires_grad || w->requires_grad || (b && b->requires_grad);
    if (out->requires_grad) {
        out->parents = {x, w};
        if (b) out->parents.push_back(b);
    }
    for (int i = 0; i < n; ++i) {
        const T* xi = x->data.data() + static_cast<std::int64_t>(i) * in;
        T* oi = out->data.data() + static_cast<std::int64_t>(i) * out_f;
        for (int j = 0; j < out_f; ++j) {
            const T* wj = w->data.data() + static_cast<std::int64_t>(j) * in;
            T acc = b ? b->data[j] : T(0);
            for (int k = 0; k < in; ++k) acc += xi[k] * wj[k];
            oi[j] = acc;
        }
    }
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [x, w, b, o, n, in, out_f] {
            if (x->requires_grad) x->ensure_grad();
            if (w->requires_grad) w->ensure_grad();
            if (b && b->requires_grad) b->ensure_grad();
            for (int i = 0; i < n; ++i) {
                const T* gi = o->grad.data() + static_cast<std::int64_t>(i) * out_f;
                const T* xi = x->data.data() + static_cast<std::int64_t>(i) * in;
                for (int j = 0; j < out_f; ++j) {
                    T g = gi[j];
                    if (g == T(0)) continue;
                    const T* wj = w->data.data() + static_cast<std::int64_t>(j) * in;
                    if (x->requires_grad) {
                        T* xg = x->grad.data() + static_cast<std::int64_t>(i) * in;
                        for (int k = 0; k < in; ++k) xg[k] += g * wj[k];
                    }
                    if (w->requires_grad) {
                        T* wg = w->grad.data() + static_cast<std::int64_t>(j) * in;
                        for (int k = 0; k < in; ++k) wg[k] += g * xi[k];
                    }
                    if (b && b->requires_grad) b->grad[j] += g;
                }
            }
        };
    }
    return out;
}

// Row gather from an embedding table (V, D) -> (n, D); backward scatter-adds.
template <typename T>
Var<T> embedding(const Var<T>& table, const std::vector<int>& ids) {
    if (table->rank() != 2) throw std::invalid_argument("embedding: table must be 2-d");
    const int v = table->dim(0), d = table->dim(1);
    for (int id : ids)
        if (id < 0 || id >= v) throw std::invalid_argument("embedding: id out of range");
    auto out = detail::unary_result(table, Shape{static_cast<int>(ids.size()), d});
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy(table->data.begin() + static_cast<std::int64_t>(ids[i]) * d,
                  table->data.begin() + static_cast<std::int64_t>(ids[i] + 1) * d,
                  out->data.begin() + static_cast<std::int64_t>(i) * d);
    if (out->requires_grad) {
        Tensor<T>* o = out.get();
        out->backward_fn = [table, ids, o, d] {
            table->ensure_grad();
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const T* g = o->grad.data() + static_cast<std::int64_t>(i) * d;
                T* tg = table->grad.data() + static_cast<std::int64_t>(ids[i]) * d;
                for (int k = 0; k < d; ++k) tg[k] += g[k];
            }
        };
    }
    return out;
}

}  // namespace morphnas
