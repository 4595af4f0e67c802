#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "tensor.hpp"

namespace lsiege {

// Define-by-run reverse-mode automatic differentiation. Each operation
// allocates a GraphNode holding the forward value and a closure that pushes
// the node's adjoint into its parents. Graphs are rebuilt per iteration.

struct GraphNode;
using Var = std::shared_ptr<GraphNode>;

struct GraphNode {
    Tensor value;
    Tensor grad;  // allocated by backward(), same shape as value
    std::vector<Var> parents;
    std::function<void(GraphNode&)> backprop;
    bool needs_grad = false;
    const char* op = "leaf";

    bool is_leaf() const { return parents.empty(); }
};

/// Leaf that participates in differentiation (parameter or attacked input).
inline Var leaf(Tensor v) {
    auto n = std::make_shared<GraphNode>();
    n->value = std::move(v);
    n->needs_grad = true;
    return n;
}

/// Leaf excluded from differentiation (data, frozen parameters).
inline Var constant(Tensor v) {
    auto n = std::make_shared<GraphNode>();
    n->value = std::move(v);
    n->needs_grad = false;
    return n;
}

namespace detail {

inline Var make_node(const char* op, Tensor value, std::vector<Var> parents,
                     std::function<void(GraphNode&)> backprop) {
    auto n = std::make_shared<GraphNode>();
    n->op = op;
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->needs_grad) n->needs_grad = true;
    if (n->needs_grad) n->backprop = std::move(backprop);
    return n;
}

inline void accumulate(GraphNode& dst, const Tensor& delta) {
    if (!dst.needs_grad) return;
    for (std::size_t i = 0; i < delta.numel(); ++i) dst.grad.data[i] += delta.data[i];
}

inline void require_finite(const char* op, const Tensor& t) {
    if (!t.all_finite())
        throw std::domain_error(std::string(op) + ": non-finite value in result of shape " +
                                shape_str(t.shape));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
    require_same_shape("add", a->value, b->value);
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += b->value.data[i];
    return detail::make_node("add", std::move(out), {a, b}, [](GraphNode& n) {
        detail::accumulate(*n.parents[0], n.grad);
        detail::accumulate(*n.parents[1], n.grad);
    });
}

inline Var sub(const Var& a, const Var& b) {
    require_same_shape("sub", a->value, b->value);
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= b->value.data[i];
    return detail::make_node("sub", std::move(out), {a, b}, [](GraphNode& n) {
        detail::accumulate(*n.parents[0], n.grad);
        if (n.parents[1]->needs_grad) {
            Tensor neg = n.grad;
            for (auto& v : neg.data) v = -v;
            detail::accumulate(*n.parents[1], neg);
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    require_same_shape("mul", a->value, b->value);
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= b->value.data[i];
    return detail::make_node("mul", std::move(out), {a, b}, [](GraphNode& n) {
        if (n.parents[0]->needs_grad) {
            Tensor da = n.grad;
            for (std::size_t i = 0; i < da.numel(); ++i) da.data[i] *= n.parents[1]->value.data[i];
            detail::accumulate(*n.parents[0], da);
        }
        if (n.parents[1]->needs_grad) {
            Tensor db = n.grad;
            for (std::size_t i = 0; i < db.numel(); ++i) db.data[i] *= n.parents[0]->value.data[i];
            detail::accumulate(*n.parents[1], db);
        }
    });
}

inline Var div(const Var& a, const Var& b) {
    require_same_shape("div", a->value, b->value);
    for (double v : b->value.data)
        if (v == 0.0) throw std::domain_error("div: zero divisor operand");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] /= b->value.data[i];
    detail::require_finite("div", out);
    return detail::make_node("div", std::move(out), {a, b}, [](GraphNode& n) {
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->needs_grad) {
            Tensor da = n.grad;
            for (std::size_t i = 0; i < da.numel(); ++i) da.data[i] /= bv.data[i];
            detail::accumulate(*n.parents[0], da);
        }
        if (n.parents[1]->needs_grad) {
            Tensor db = n.grad;
            for (std::size_t i = 0; i < db.numel(); ++i)
                db.data[i] *= -n.value.data[i] / bv.data[i];
            detail::accumulate(*n.parents[1], db);
        }
    });
}

inline Var neg(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out.data) v = -v;
    return detail::make_node("neg", std::move(out), {a}, [](GraphNode& n) {
        Tensor da = n.grad;
        for (auto& v : da.data) v = -v;
        detail::accumulate(*n.parents[0], da);
    });
}

inline Var scale(const Var& a, double c) {
    Tensor out = a->value;
    for (auto& v : out.data) v *= c;
    return detail::make_node("scale", std::move(out), {a}, [c](GraphNode& n) {
        Tensor da = n.grad;
        for (auto& v : da.data) v *= c;
        detail::accumulate(*n.parents[0], da);
    });
}

inline Var add_scalar(const Var& a, double c) {
    Tensor out = a->value;
    for (auto& v : out.data) v += c;
    return detail::make_node("add_scalar", std::move(out), {a},
                             [](GraphNode& n) { detail::accumulate(*n.parents[0], n.grad); });
}

/// Broadcast add of a bias row: m [n,d] + b [d].
inline Var add_bias(const Var& m, const Var& b) {
    require_rank("add_bias", m->value, 2);
    require_rank("add_bias", b->value, 1);
    if (m->value.shape[1] != b->value.shape[0])
        throw std::invalid_argument("add_bias: shape mismatch " + shape_str(m->value.shape) +
                                    " vs " + shape_str(b->value.shape));
    Tensor out = m->value;
    const std::size_t n = out.shape[0], d = out.shape[1];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out.data[i * d + j] += b->value.data[j];
    return detail::make_node("add_bias", std::move(out), {m, b}, [](GraphNode& nd) {
        detail::accumulate(*nd.parents[0], nd.grad);
        if (nd.parents[1]->needs_grad) {
            const std::size_t n = nd.grad.shape[0], d = nd.grad.shape[1];
            Tensor db({d});
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) db.data[j] += nd.grad.data[i * d + j];
            detail::accumulate(*nd.parents[1], db);
        }
    });
}

// ---------------------------------------------------------------------------
// matrix multiply
// ---------------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
    Tensor out = matmul_plain(a->value, b->value);
    return detail::make_node("matmul", std::move(out), {a, b}, [](GraphNode& n) {
        if (n.parents[0]->needs_grad)
            detail::accumulate(*n.parents[0], matmul_nt(n.grad, n.parents[1]->value));
        if (n.parents[1]->needs_grad)
            detail::accumulate(*n.parents[1], matmul_tn(n.parents[0]->value, n.grad));
    });
}

// ---------------------------------------------------------------------------
// elementwise nonlinearities
// ---------------------------------------------------------------------------

inline Var exp_(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out.data) v = std::exp(v);
    detail::require_finite("exp", out);
    return detail::make_node("exp", std::move(out), {a}, [](GraphNode& n) {
        Tensor da = n.grad;
        for (std::size_t i = 0; i < da.numel(); ++i) da.data[i] *= n.value.data[i];
        detail::accumulate(*n.parents[0], da);
    });
}

inline Var log_(const Var& a) {
    for (double v : a->value.data)
        if (v <= 0.0) throw std::domain_error("log: non-positive operand");
    Tensor out = a->value;
    for (auto& v : out.data) v = std::log(v);
    return detail::make_node("log", std::move(out), {a}, [](GraphNode& n) {
        Tensor da = n.grad;
        for (std::size_t i = 0; i < da.numel(); ++i) da.data[i] /= n.parents[0]->value.data[i];
        detail::accumulate(*n.parents[0], da);
    });
}

inline Var sigmoid(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out.data) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    return detail::make_node("sigmoid", std::move(out), {a}, [](GraphNode& n) {
        Tensor da = n.grad;
        for (std::size_t i = 0; i < da.numel(); ++i) {
            const double s = n.value.data[i];
            da.data[i] *= s * (1.0 - s);
        }
        detail::accumulate(*n.parents[0], da);
    });
}

inline Var tanh_(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out.data) v = std::tanh(v);
    return detail::make_node("tanh", std::move(out), {a}, [](GraphNode& n) {
        Tensor da = n.grad;
        for (std::size_t i = 0; i < da.numel(); ++i) {
            const double t = n.value.data[i];
            da.data[i] *= 1.0 - t * t;
        }
        detail::accumulate(*n.parents[0], da);
    });
}

inline Var relu(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
    return detail::make_node("relu", std::move(out), {a}, [](GraphNode& n) {
        Tensor da = n.grad;
        for (std::size_t i = 0; i < da.numel(); ++i)
            if (n.parents[0]->value.data[i] <= 0.0) da.data[i] = 0.0;
        detail::accumulate(*n.parents[0], da);
    });
}

inline Var square(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out.data) v *= v;
    return detail::make_node("square", std::move(out), {a}, [](GraphNode& n) {
        Tensor da = n.grad;
        for (std::size_t i = 0; i < da.numel(); ++i) da.data[i] *= 2.0 * n.parents[0]->value.data[i];
        detail::accumulate(*n.parents[0], da);
    });
}

inline Var sqrt_(const Var& a) {
    for (double v : a->value.data)
        if (v <= 0.0) throw std::domain_error("sqrt: non-positive operand");
    Tensor out = a->value;
    for (auto& v : out.data) v = std::sqrt(v);
    return detail::make_node("sqrt", std::move(out), {a}, [](GraphNode& n) {
        Tensor da = n.grad;
        for (std::size_t i = 0; i < da.numel(); ++i) da.data[i] *= 0.5 / n.value.data[i];
        detail::accumulate(*n.parents[0], da);
    });
}

/// log(1 + exp(x)) evaluated without overflow; derivative is sigmoid(x).
inline Var softplus(const Var& a) {
    Tensor out = a->value;
    for (auto& v : out.data) v = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
    return detail::make_node("softplus", std::move(out), {a}, [](GraphNode& n) {
        Tensor da = n.grad;
        for (std::size_t i = 0; i < da.numel(); ++i) {
            const double x = n.parents[0]->value.data[i];
            const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
            da.data[i] *= s;
        }
        detail::accumulate(*n.parents[0], da);
    });
}

/// Elementwise clamp with projected-gradient semantics: the adjoint passes
/// through where the input lies inside [lo,hi] and is zero outside.
inline Var clamp(const Var& a, double lo, double hi) {
    if (lo >= hi) throw std::invalid_argument("clamp: lower bound must be below upper bound");
    Tensor out = a->value;
    for (auto& v : out.data) v = std::min(std::max(v, lo), hi);
    return detail::make_node("clamp", std::move(out), {a}, [lo, hi](GraphNode& n) {
        Tensor da = n.grad;
        for (std::size_t i = 0; i < da.numel(); ++i) {
            const double x = n.parents[0]->value.data[i];
            if (x < lo || x > hi) da.data[i] = 0.0;
        }
        detail::accumulate(*n.parents[0], da);
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Var sum_all(const Var& a) {
    double s = 0.0;
    for (double v : a->value.data) s += v;
    return detail::make_node("sum", Tensor::scalar(s), {a}, [](GraphNode& n) {
        const double g = n.grad.data[0];
        Tensor da(n.parents[0]->value.shape, g);
        detail::accumulate(*n.parents[0], da);
    });
}

inline Var mean_all(const Var& a) {
    double s = 0.0;
    for (double v : a->value.data) s += v;
    const double inv = 1.0 / static_cast<double>(a->value.numel());
    return detail::make_node("mean", Tensor::scalar(s * inv), {a}, [inv](GraphNode& n) {
        Tensor da(n.parents[0]->value.shape, n.grad.data[0] * inv);
        detail::accumulate(*n.parents[0], da);
    });
}

/// Sum of a rank-2 tensor over one axis: axis 0 -> [m], axis 1 -> [n].
inline Var sum_axis(const Var& a, std::size_t axis) {
    require_rank("sum_axis", a->value, 2);
    if (axis > 1) throw std::invalid_argument("sum_axis: axis out of range");
    const std::size_t n = a->value.shape[0], m = a->value.shape[1];
    Tensor out({axis == 0 ? m : n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out.data[axis == 0 ? j : i] += a->value.data[i * m + j];
    return detail::make_node("sum_axis", std::move(out), {a}, [axis](GraphNode& nd) {
        const std::size_t n = nd.parents[0]->value.shape[0], m = nd.parents[0]->value.shape[1];
        Tensor da({n, m});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) da.data[i * m + j] = nd.grad.data[axis == 0 ? j : i];
        detail::accumulate(*nd.parents[0], da);
    });
}

inline Var mean_axis(const Var& a, std::size_t axis) {
    require_rank("mean_axis", a->value, 2);
    if (axis > 1) throw std::invalid_argument("mean_axis: axis out of range");
    const double inv = 1.0 / static_cast<double>(a->value.shape[axis == 0 ? 0 : 1]);
    return scale(sum_axis(a, axis), inv);
}

// ---------------------------------------------------------------------------
// softmax family (stable log-sum-exp forms)
// ---------------------------------------------------------------------------

namespace detail {
inline void rows_of(const Tensor& t, std::size_t& rows, std::size_t& cols, const char* op) {
    if (t.rank() == 1) {
        rows = 1;
        cols = t.shape[0];
    } else if (t.rank() == 2) {
        rows = t.shape[0];
        cols = t.shape[1];
    } else {
        throw std::invalid_argument(std::string(op) + ": expected rank 1 or 2, got " +
                                    shape_str(t.shape));
    }
}
}  // namespace detail

/// Row-wise log(sum(exp(x))); rank-1 input yields a scalar.
inline Var logsumexp(const Var& a) {
    std::size_t rows, cols;
    detail::rows_of(a->value, rows, cols, "logsumexp");
    Tensor out({rows});
    for (std::size_t i = 0; i < rows; ++i) {
        const double* x = a->value.data.data() + i * cols;
        double mx = x[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += std::exp(x[j] - mx);
        out.data[i] = mx + std::log(s);
    }
    return detail::make_node("logsumexp", std::move(out), {a}, [](GraphNode& n) {
        std::size_t rows, cols;
        detail::rows_of(n.parents[0]->value, rows, cols, "logsumexp");
        Tensor da(n.parents[0]->value.shape);
        for (std::size_t i = 0; i < rows; ++i) {
            const double* x = n.parents[0]->value.data.data() + i * cols;
            const double lse = n.value.data[i];
            for (std::size_t j = 0; j < cols; ++j)
                da.data[i * cols + j] = n.grad.data[i] * std::exp(x[j] - lse);
        }
        detail::accumulate(*n.parents[0], da);
    });
}

/// Row-wise log softmax: x - logsumexp(x).
inline Var log_softmax(const Var& a) {
    std::size_t rows, cols;
    detail::rows_of(a->value, rows, cols, "log_softmax");
    Tensor out = a->value;
    for (std::size_t i = 0; i < rows; ++i) {
        double* x = out.data.data() + i * cols;
        double mx = x[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += std::exp(x[j] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < cols; ++j) x[j] -= lse;
    }
    return detail::make_node("log_softmax", std::move(out), {a}, [](GraphNode& n) {
        std::size_t rows, cols;
        detail::rows_of(n.value, rows, cols, "log_softmax");
        Tensor da = n.grad;
        for (std::size_t i = 0; i < rows; ++i) {
            double gsum = 0.0;
            for (std::size_t j = 0; j < cols; ++j) gsum += n.grad.data[i * cols + j];
            for (std::size_t j = 0; j < cols; ++j)
                da.data[i * cols + j] -= std::exp(n.value.data[i * cols + j]) * gsum;
        }
        detail::accumulate(*n.parents[0], da);
    });
}

// ---------------------------------------------------------------------------
// concatenation
// ---------------------------------------------------------------------------

inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no operands");
    const std::size_t rank = parts[0]->value.rank();
    if (rank > 2) throw std::invalid_argument("concat: expected rank 1 or 2");
    if (axis >= rank) throw std::invalid_argument("concat: axis out of range");
    for (const auto& p : parts) {
        if (p->value.rank() != rank)
            throw std::invalid_argument("concat: rank mismatch " + shape_str(p->value.shape));
        for (std::size_t d = 0; d < rank; ++d)
            if (d != axis && p->value.shape[d] != parts[0]->value.shape[d])
                throw std::invalid_argument("concat: shape mismatch " +
                                            shape_str(parts[0]->value.shape) + " vs " +
                                            shape_str(p->value.shape));
    }

    Shape out_shape = parts[0]->value.shape;
    out_shape[axis] = 0;
    for (const auto& p : parts) out_shape[axis] += p->value.shape[axis];
    Tensor out(out_shape);

    // copy; offsets recorded for the adjoint slices
    std::vector<std::size_t> extents(parts.size());
    for (std::size_t k = 0; k < parts.size(); ++k) extents[k] = parts[k]->value.shape[axis];

    const std::size_t rows = rank == 2 ? out_shape[0] : 1;
    if (rank == 1 || axis == 0) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            std::copy(p->value.data.begin(), p->value.data.end(), out.data.begin() + off);
            off += p->value.numel();
        }
    } else {  // rank 2, axis 1
        const std::size_t total_cols = out_shape[1];
        std::size_t col_off = 0;
        for (const auto& p : parts) {
            const std::size_t cols = p->value.shape[1];
            for (std::size_t i = 0; i < rows; ++i)
                std::copy(p->value.data.begin() + i * cols, p->value.data.begin() + (i + 1) * cols,
                          out.data.begin() + i * total_cols + col_off);
            col_off += cols;
        }
    }

    return detail::make_node("concat", std::move(out), parts, [axis, extents](GraphNode& n) {
        const std::size_t rank = n.value.rank();
        if (rank == 1 || axis == 0) {
            std::size_t off = 0;
            for (std::size_t k = 0; k < n.parents.size(); ++k) {
                auto& p = *n.parents[k];
                Tensor dp(p.value.shape);
                std::copy(n.grad.data.begin() + off, n.grad.data.begin() + off + dp.numel(),
                          dp.data.begin());
                off += dp.numel();
                detail::accumulate(p, dp);
            }
        } else {
            const std::size_t rows = n.value.shape[0], total_cols = n.value.shape[1];
            std::size_t col_off = 0;
            for (std::size_t k = 0; k < n.parents.size(); ++k) {
                auto& p = *n.parents[k];
                const std::size_t cols = extents[k];
                Tensor dp(p.value.shape);
                for (std::size_t i = 0; i < rows; ++i)
                    std::copy(n.grad.data.begin() + i * total_cols + col_off,
                              n.grad.data.begin() + i * total_cols + col_off + cols,
                              dp.data.begin() + i * cols);
                col_off += cols;
                detail::accumulate(p, dp);
            }
        }
    });
}

// ---------------------------------------------------------------------------
// backward pass
// ---------------------------------------------------------------------------

namespace detail {
inline std::vector<GraphNode*> topo_order(GraphNode* root) {
    std::vector<GraphNode*> order;
    std::unordered_set<GraphNode*> seen;
    std::vector<std::pair<GraphNode*, std::size_t>> stack{{root, 0}};
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx == 0 && seen.count(node)) {
            stack.pop_back();
            continue;
        }
        if (idx < node->parents.size()) {
            GraphNode* next = node->parents[idx].get();
            ++idx;
            if (!seen.count(next)) stack.emplace_back(next, 0);
        } else {
            seen.insert(node);
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;  // parents before children; reverse for backprop
}
}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Gradients land in the `grad` member
/// of every node with needs_grad set; visits each node exactly once.
inline void backward(const Var& loss) {
    if (loss->value.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    shape_str(loss->value.shape));
    auto order = detail::topo_order(loss.get());
    for (auto* n : order)
        if (n->needs_grad) n->grad = Tensor::zeros(n->value.shape);
    if (!loss->needs_grad) return;  // nothing to differentiate
    loss->grad.data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->needs_grad && (*it)->backprop) (*it)->backprop(**it);
}

}  // namespace lsiege
