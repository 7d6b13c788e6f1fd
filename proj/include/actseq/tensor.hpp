#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "actseq/errors.hpp"
#include "actseq/rng.hpp"

namespace actseq::ad {

// One node of the computation graph: forward values plus the closure that
// scatters this node's gradient back to its parents.
struct Node {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;
    const char* op = "leaf";
};

inline std::size_t shape_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("tensor: negative dimension");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

// Value-semantics handle to a graph node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor leaf(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
        if (values.size() != shape_size(shape)) throw ShapeError("tensor: buffer does not match shape");
        for (double v : values)
            if (!std::isfinite(v)) throw NumericError("tensor: non-finite leaf value");
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value = std::move(values);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor scalar(double v, bool requires_grad = false) { return leaf({}, {v}, requires_grad); }
    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        std::vector<double> v(shape_size(shape), 0.0);
        return leaf(std::move(shape), std::move(v), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<double>& value() const { return node_->value; }
    std::vector<double>& mutable_value() { return node_->value; }
    const std::vector<double>& grad() const { return node_->grad; }

    double item() const {
        if (size() != 1) throw ShapeError("tensor: item() on non-scalar");
        return node_->value[0];
    }

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

namespace detail {

inline void check_finite(const Node& n) {
    for (double v : n.value)
        if (!std::isfinite(v))
            throw NumericError(std::string("non-finite value produced by op '") + n.op + "'");
}

inline Tensor make_result(std::vector<int> shape, std::vector<double> value, const char* op,
                          std::vector<Tensor> inputs,
                          std::function<void(Node&)> backprop_with_out) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->op = op;
    detail::check_finite(*n);
    bool needs_grad = false;
    for (const auto& in : inputs) needs_grad = needs_grad || in.node()->requires_grad;
    n->requires_grad = needs_grad;
    if (needs_grad) {
        n->parents.reserve(inputs.size());
        for (const auto& in : inputs) n->parents.push_back(in.node());
        Node* raw = n.get();
        n->backprop = [raw, fn = std::move(backprop_with_out)]() { fn(*raw); };
    }
    return Tensor(std::move(n));
}

inline void accumulate(const std::shared_ptr<Node>& parent, std::size_t idx, double g) {
    if (parent->requires_grad) parent->grad[idx] += g;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// Ordered record of the ops reachable from a root, in topological order.
// backward() zero-initializes gradients, seeds the root with 1, and visits
// each op exactly once in reverse order.
class Tape {
public:
    static Tape trace(const Tensor& root) {
        Tape tape;
        if (!root.defined()) throw ShapeError("tape: undefined root");
        std::unordered_set<Node*> visited;
        // Iterative post-order DFS; recursion depth would be unbounded for
        // long recurrent chains.
        std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
        stack.emplace_back(root.node(), 0);
        visited.insert(root.node().get());
        while (!stack.empty()) {
            auto& [node, next_child] = stack.back();
            if (next_child < node->parents.size()) {
                auto child = node->parents[next_child++];
                if (child->requires_grad && visited.insert(child.get()).second)
                    stack.emplace_back(std::move(child), 0);
            } else {
                tape.order_.push_back(node);
                stack.pop_back();
            }
        }
        return tape;
    }

    void backward() {
        if (order_.empty()) return;
        for (auto& n : order_) n->grad.assign(n->value.size(), 0.0);
        auto& root = order_.back();
        if (root->value.size() != 1) throw ShapeError("backward: root must be scalar");
        root->grad[0] = 1.0;
        for (auto it = order_.rbegin(); it != order_.rend(); ++it)
            if ((*it)->backprop) (*it)->backprop();
    }

    const std::vector<std::shared_ptr<Node>>& order() const { return order_; }

private:
    std::vector<std::shared_ptr<Node>> order_;
};

inline void backward(const Tensor& loss) {
    if (!loss.requires_grad())
        throw ShapeError("backward: loss does not depend on any parameter");
    Tape::trace(loss).backward();
}

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] + b.value()[i];
    return detail::make_result(a.shape(), std::move(v), "add", {a, b}, [a = a.node(), b = b.node()](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
            detail::accumulate(a, i, out.grad[i]);
            detail::accumulate(b, i, out.grad[i]);
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] - b.value()[i];
    return detail::make_result(a.shape(), std::move(v), "sub", {a, b}, [a = a.node(), b = b.node()](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
            detail::accumulate(a, i, out.grad[i]);
            detail::accumulate(b, i, -out.grad[i]);
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] * b.value()[i];
    return detail::make_result(a.shape(), std::move(v), "mul", {a, b}, [a = a.node(), b = b.node()](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
            detail::accumulate(a, i, out.grad[i] * b->value[i]);
            detail::accumulate(b, i, out.grad[i] * a->value[i]);
        }
    });
}

inline Tensor scale(const Tensor& a, double c) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] * c;
    return detail::make_result(a.shape(), std::move(v), "scale", {a}, [a = a.node(), c](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i) detail::accumulate(a, i, out.grad[i] * c);
    });
}

inline Tensor add_const(const Tensor& a, double c) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] + c;
    return detail::make_result(a.shape(), std::move(v), "add_const", {a}, [a = a.node()](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i) detail::accumulate(a, i, out.grad[i]);
    });
}

// Adds a length-C vector to every row of a (N x C) matrix.
inline Tensor add_rowvec(const Tensor& m, const Tensor& v) {
    if (m.rank() != 2 || v.rank() != 1 || m.dim(1) != v.dim(0))
        throw ShapeError("add_rowvec: expects (N,C) matrix and length-C vector");
    const int n = m.dim(0), c = m.dim(1);
    std::vector<double> out(m.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j)
            out[static_cast<std::size_t>(i) * c + j] = m.value()[static_cast<std::size_t>(i) * c + j] + v.value()[static_cast<std::size_t>(j)];
    return detail::make_result({n, c}, std::move(out), "add_rowvec", {m, v},
                               [m = m.node(), v = v.node(), n, c](Node& out) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) {
                const double g = out.grad[static_cast<std::size_t>(i) * c + j];
                detail::accumulate(m, static_cast<std::size_t>(i) * c + j, g);
                detail::accumulate(v, static_cast<std::size_t>(j), g);
            }
    });
}

inline Tensor relu(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] > 0.0 ? a.value()[i] : 0.0;
    return detail::make_result(a.shape(), std::move(v), "relu", {a}, [a = a.node()](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i)
            detail::accumulate(a, i, a->value[i] > 0.0 ? out.grad[i] : 0.0);
    });
}

inline Tensor sigmoid(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / (1.0 + std::exp(-a.value()[i]));
    return detail::make_result(a.shape(), std::move(v), "sigmoid", {a}, [a = a.node()](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
            const double s = out.value[i];
            detail::accumulate(a, i, out.grad[i] * s * (1.0 - s));
        }
    });
}

inline Tensor tanh(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(a.value()[i]);
    return detail::make_result(a.shape(), std::move(v), "tanh", {a}, [a = a.node()](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
            const double t = out.value[i];
            detail::accumulate(a, i, out.grad[i] * (1.0 - t * t));
        }
    });
}

inline Tensor log(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log(a.value()[i]);
    return detail::make_result(a.shape(), std::move(v), "log", {a}, [a = a.node()](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i)
            detail::accumulate(a, i, out.grad[i] / a->value[i]);
    });
}

// matmul dispatches on operand ranks: (n,k)x(k,m), (n,k)x(k), (k)x(k,m),
// and (k)x(k) as a dot product.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const int ra = a.rank(), rb = b.rank();
    if (ra == 2 && rb == 2) {
        const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
        if (b.dim(0) != k) throw ShapeError("matmul: inner dimensions disagree");
        std::vector<double> v(static_cast<std::size_t>(n) * m, 0.0);
        const double *pa = a.value().data(), *pb = b.value().data();
        for (int i = 0; i < n; ++i)
            for (int l = 0; l < k; ++l) {
                const double ail = pa[i * k + l];
                const double* brow = pb + l * m;
                double* vrow = v.data() + i * m;
                for (int j = 0; j < m; ++j) vrow[j] += ail * brow[j];
            }
        return detail::make_result({n, m}, std::move(v), "matmul", {a, b},
                                   [a = a.node(), b = b.node(), n, k, m](Node& out) {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) {
                    const double g = out.grad[static_cast<std::size_t>(i) * m + j];
                    if (g == 0.0) continue;
                    for (int l = 0; l < k; ++l) {
                        detail::accumulate(a, static_cast<std::size_t>(i) * k + l, g * b->value[static_cast<std::size_t>(l) * m + j]);
                        detail::accumulate(b, static_cast<std::size_t>(l) * m + j, g * a->value[static_cast<std::size_t>(i) * k + l]);
                    }
                }
        });
    }
    if (ra == 2 && rb == 1) {
        const int n = a.dim(0), k = a.dim(1);
        if (b.dim(0) != k) throw ShapeError("matmul: inner dimensions disagree");
        std::vector<double> v(static_cast<std::size_t>(n), 0.0);
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int l = 0; l < k; ++l) s += a.value()[static_cast<std::size_t>(i) * k + l] * b.value()[static_cast<std::size_t>(l)];
            v[static_cast<std::size_t>(i)] = s;
        }
        return detail::make_result({n}, std::move(v), "matmul", {a, b},
                                   [a = a.node(), b = b.node(), n, k](Node& out) {
            for (int i = 0; i < n; ++i) {
                const double g = out.grad[static_cast<std::size_t>(i)];
                if (g == 0.0) continue;
                for (int l = 0; l < k; ++l) {
                    detail::accumulate(a, static_cast<std::size_t>(i) * k + l, g * b->value[static_cast<std::size_t>(l)]);
                    detail::accumulate(b, static_cast<std::size_t>(l), g * a->value[static_cast<std::size_t>(i) * k + l]);
                }
            }
        });
    }
    if (ra == 1 && rb == 2) {
        const int k = a.dim(0), m = b.dim(1);
        if (b.dim(0) != k) throw ShapeError("matmul: inner dimensions disagree");
        std::vector<double> v(static_cast<std::size_t>(m), 0.0);
        for (int l = 0; l < k; ++l) {
            const double al = a.value()[static_cast<std::size_t>(l)];
            for (int j = 0; j < m; ++j) v[static_cast<std::size_t>(j)] += al * b.value()[static_cast<std::size_t>(l) * m + j];
        }
        return detail::make_result({m}, std::move(v), "matmul", {a, b},
                                   [a = a.node(), b = b.node(), k, m](Node& out) {
            for (int j = 0; j < m; ++j) {
                const double g = out.grad[static_cast<std::size_t>(j)];
                if (g == 0.0) continue;
                for (int l = 0; l < k; ++l) {
                    detail::accumulate(a, static_cast<std::size_t>(l), g * b->value[static_cast<std::size_t>(l) * m + j]);
                    detail::accumulate(b, static_cast<std::size_t>(l) * m + j, g * a->value[static_cast<std::size_t>(l)]);
                }
            }
        });
    }
    if (ra == 1 && rb == 1) {
        const int k = a.dim(0);
        if (b.dim(0) != k) throw ShapeError("matmul: inner dimensions disagree");
        double s = 0.0;
        for (int l = 0; l < k; ++l) s += a.value()[static_cast<std::size_t>(l)] * b.value()[static_cast<std::size_t>(l)];
        return detail::make_result({}, {s}, "matmul", {a, b}, [a = a.node(), b = b.node(), k](Node& out) {
            const double g = out.grad[0];
            for (int l = 0; l < k; ++l) {
                detail::accumulate(a, static_cast<std::size_t>(l), g * b->value[static_cast<std::size_t>(l)]);
                detail::accumulate(b, static_cast<std::size_t>(l), g * a->value[static_cast<std::size_t>(l)]);
            }
        });
    }
    throw ShapeError("matmul: unsupported ranks");
}

inline Tensor concat(const Tensor& a, const Tensor& b, int axis = 0) {
    if (a.rank() == 1 && b.rank() == 1 && axis == 0) {
        std::vector<double> v;
        v.reserve(a.size() + b.size());
        v.insert(v.end(), a.value().begin(), a.value().end());
        v.insert(v.end(), b.value().begin(), b.value().end());
        const int na = a.dim(0);
        return detail::make_result({a.dim(0) + b.dim(0)}, std::move(v), "concat", {a, b},
                                   [a = a.node(), b = b.node(), na](Node& out) {
            for (std::size_t i = 0; i < a->value.size(); ++i) detail::accumulate(a, i, out.grad[i]);
            for (std::size_t i = 0; i < b->value.size(); ++i)
                detail::accumulate(b, i, out.grad[static_cast<std::size_t>(na) + i]);
        });
    }
    if (a.rank() == 2 && b.rank() == 2 && axis == 1) {
        if (a.dim(0) != b.dim(0)) throw ShapeError("concat: row counts disagree");
        const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
        std::vector<double> v(static_cast<std::size_t>(n) * (ca + cb));
        for (int i = 0; i < n; ++i) {
            std::copy_n(a.value().data() + static_cast<std::size_t>(i) * ca, ca, v.data() + static_cast<std::size_t>(i) * (ca + cb));
            std::copy_n(b.value().data() + static_cast<std::size_t>(i) * cb, cb, v.data() + static_cast<std::size_t>(i) * (ca + cb) + ca);
        }
        return detail::make_result({n, ca + cb}, std::move(v), "concat", {a, b},
                                   [a = a.node(), b = b.node(), n, ca, cb](Node& out) {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < ca + cb; ++j) {
                    const double g = out.grad[static_cast<std::size_t>(i) * (ca + cb) + j];
                    if (j < ca)
                        detail::accumulate(a, static_cast<std::size_t>(i) * ca + j, g);
                    else
                        detail::accumulate(b, static_cast<std::size_t>(i) * cb + (j - ca), g);
                }
        });
    }
    if (a.rank() == 2 && b.rank() == 2 && axis == 0) {
        if (a.dim(1) != b.dim(1)) throw ShapeError("concat: column counts disagree");
        std::vector<double> v;
        v.reserve(a.size() + b.size());
        v.insert(v.end(), a.value().begin(), a.value().end());
        v.insert(v.end(), b.value().begin(), b.value().end());
        return detail::make_result({a.dim(0) + b.dim(0), a.dim(1)}, std::move(v), "concat", {a, b},
                                   [a = a.node(), b = b.node()](Node& out) {
            for (std::size_t i = 0; i < a->value.size(); ++i) detail::accumulate(a, i, out.grad[i]);
            for (std::size_t i = 0; i < b->value.size(); ++i)
                detail::accumulate(b, i, out.grad[a->value.size() + i]);
        });
    }
    throw ShapeError("concat: unsupported rank/axis combination");
}

// Row range [r0, r1) of a matrix, or a single row as a vector.
inline Tensor slice_rows(const Tensor& m, int r0, int r1) {
    if (m.rank() != 2) throw ShapeError("slice: expects a matrix");
    const int n = m.dim(0), c = m.dim(1);
    if (r0 < 0 || r1 > n || r0 > r1) throw ShapeError("slice: row range out of bounds");
    std::vector<double> v(m.value().begin() + static_cast<std::ptrdiff_t>(r0) * c,
                          m.value().begin() + static_cast<std::ptrdiff_t>(r1) * c);
    return detail::make_result({r1 - r0, c}, std::move(v), "slice", {m},
                               [m = m.node(), r0, c](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i)
            detail::accumulate(m, static_cast<std::size_t>(r0) * c + i, out.grad[i]);
    });
}

inline Tensor row(const Tensor& m, int r) {
    if (m.rank() != 2) throw ShapeError("row: expects a matrix");
    const int n = m.dim(0), c = m.dim(1);
    if (r < 0 || r >= n) throw ShapeError("row: index out of bounds");
    std::vector<double> v(m.value().begin() + static_cast<std::ptrdiff_t>(r) * c,
                          m.value().begin() + static_cast<std::ptrdiff_t>(r + 1) * c);
    return detail::make_result({c}, std::move(v), "row", {m}, [m = m.node(), r, c](Node& out) {
        for (int j = 0; j < c; ++j)
            detail::accumulate(m, static_cast<std::size_t>(r) * c + j, out.grad[static_cast<std::size_t>(j)]);
    });
}

inline Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw ShapeError("mean: empty tensor");
    const double inv = 1.0 / static_cast<double>(a.size());
    double s = 0.0;
    for (double v : a.value()) s += v;
    return detail::make_result({}, {s * inv}, "mean", {a}, [a = a.node(), inv](Node& out) {
        const double g = out.grad[0] * inv;
        for (std::size_t i = 0; i < a->value.size(); ++i) detail::accumulate(a, i, g);
    });
}

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.value()) s += v;
    return detail::make_result({}, {s}, "sum", {a}, [a = a.node()](Node& out) {
        const double g = out.grad[0];
        for (std::size_t i = 0; i < a->value.size(); ++i) detail::accumulate(a, i, g);
    });
}

// Stacks N equal-length vectors into an (N x d) matrix.
inline Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no rows");
    const int d = rows.front().dim(0);
    for (const auto& r : rows)
        if (r.rank() != 1 || r.dim(0) != d) throw ShapeError("stack_rows: inconsistent row shapes");
    const int n = static_cast<int>(rows.size());
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(n) * d);
    for (const auto& r : rows) v.insert(v.end(), r.value().begin(), r.value().end());
    auto node = std::make_shared<Node>();
    node->shape = {n, d};
    node->value = std::move(v);
    node->op = "stack_rows";
    detail::check_finite(*node);
    bool needs_grad = false;
    for (const auto& r : rows) needs_grad = needs_grad || r.requires_grad();
    node->requires_grad = needs_grad;
    if (needs_grad) {
        for (const auto& r : rows) node->parents.push_back(r.node());
        Node* raw = node.get();
        std::vector<std::shared_ptr<Node>> parents = node->parents;
        node->backprop = [raw, parents, d]() {
            for (std::size_t i = 0; i < parents.size(); ++i)
                for (int j = 0; j < d; ++j)
                    detail::accumulate(parents[i], static_cast<std::size_t>(j),
                                       raw->grad[i * static_cast<std::size_t>(d) + j]);
        };
    }
    return Tensor(std::move(node));
}

// Column means of a matrix: (N x d) -> (d).
inline Tensor mean_rows(const Tensor& m) {
    if (m.rank() != 2 || m.dim(0) == 0) throw ShapeError("mean_rows: expects a non-empty matrix");
    const int n = m.dim(0), d = m.dim(1);
    const double inv = 1.0 / static_cast<double>(n);
    std::vector<double> v(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) v[static_cast<std::size_t>(j)] += m.value()[static_cast<std::size_t>(i) * d + j];
    for (auto& x : v) x *= inv;
    return detail::make_result({d}, std::move(v), "mean_rows", {m}, [m = m.node(), n, d, inv](Node& out) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j)
                detail::accumulate(m, static_cast<std::size_t>(i) * d + j, out.grad[static_cast<std::size_t>(j)] * inv);
    });
}

// Broadcast-adds a learnable scalar to every entry.
inline Tensor add_scalar(const Tensor& a, const Tensor& s) {
    if (s.size() != 1) throw ShapeError("add_scalar: second operand must be scalar");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] + s.value()[0];
    return detail::make_result(a.shape(), std::move(v), "add_scalar", {a, s},
                               [a = a.node(), s = s.node()](Node& out) {
        double total = 0.0;
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
            detail::accumulate(a, i, out.grad[i]);
            total += out.grad[i];
        }
        detail::accumulate(s, 0, total);
    });
}

namespace detail {
inline void softmax_forward(const double* in, double* out, int n) {
    double mx = in[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, in[i]);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        out[i] = std::exp(in[i] - mx);
        total += out[i];
    }
    for (int i = 0; i < n; ++i) out[i] /= total;
}
}  // namespace detail

// Softmax along the chosen axis (default: the last). Vectors normalize as a
// whole; matrices normalize each row (axis 1) or each column (axis 0).
inline Tensor softmax(const Tensor& a, int axis = -1) {
    if (a.rank() == 2 && axis == 0) {
        const int n = a.dim(0), c = a.dim(1);
        if (n == 0) throw ShapeError("softmax: empty columns");
        std::vector<double> v(a.size());
        std::vector<double> column(static_cast<std::size_t>(n));
        for (int j = 0; j < c; ++j) {
            for (int i = 0; i < n; ++i) column[static_cast<std::size_t>(i)] = a.value()[static_cast<std::size_t>(i) * c + j];
            std::vector<double> out(static_cast<std::size_t>(n));
            detail::softmax_forward(column.data(), out.data(), n);
            for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * c + j] = out[static_cast<std::size_t>(i)];
        }
        return detail::make_result({n, c}, std::move(v), "softmax", {a}, [a = a.node(), n, c](Node& out) {
            for (int j = 0; j < c; ++j) {
                double dot = 0.0;
                for (int i = 0; i < n; ++i)
                    dot += out.grad[static_cast<std::size_t>(i) * c + j] * out.value[static_cast<std::size_t>(i) * c + j];
                for (int i = 0; i < n; ++i) {
                    const std::size_t idx = static_cast<std::size_t>(i) * c + j;
                    detail::accumulate(a, idx, out.value[idx] * (out.grad[idx] - dot));
                }
            }
        });
    }
    if (!(axis == -1 || axis == a.rank() - 1))
        throw ShapeError("softmax: unsupported axis");
    if (a.rank() == 1) {
        const int n = a.dim(0);
        if (n == 0) throw ShapeError("softmax: empty input");
        std::vector<double> v(static_cast<std::size_t>(n));
        detail::softmax_forward(a.value().data(), v.data(), n);
        return detail::make_result({n}, std::move(v), "softmax", {a}, [a = a.node(), n](Node& out) {
            double dot = 0.0;
            for (int i = 0; i < n; ++i) dot += out.grad[static_cast<std::size_t>(i)] * out.value[static_cast<std::size_t>(i)];
            for (int i = 0; i < n; ++i)
                detail::accumulate(a, static_cast<std::size_t>(i),
                                   out.value[static_cast<std::size_t>(i)] * (out.grad[static_cast<std::size_t>(i)] - dot));
        });
    }
    if (a.rank() == 2) {
        const int n = a.dim(0), c = a.dim(1);
        if (c == 0) throw ShapeError("softmax: empty rows");
        std::vector<double> v(a.size());
        for (int i = 0; i < n; ++i)
            detail::softmax_forward(a.value().data() + static_cast<std::size_t>(i) * c, v.data() + static_cast<std::size_t>(i) * c, c);
        return detail::make_result({n, c}, std::move(v), "softmax", {a}, [a = a.node(), n, c](Node& out) {
            for (int i = 0; i < n; ++i) {
                const double* p = out.value.data() + static_cast<std::size_t>(i) * c;
                const double* g = out.grad.data() + static_cast<std::size_t>(i) * c;
                double dot = 0.0;
                for (int j = 0; j < c; ++j) dot += g[j] * p[j];
                for (int j = 0; j < c; ++j)
                    detail::accumulate(a, static_cast<std::size_t>(i) * c + j, p[j] * (g[j] - dot));
            }
        });
    }
    throw ShapeError("softmax: unsupported rank");
}

// Cross-entropy of a logits vector against a target index, computed in the
// numerically stable log-sum-exp form, optionally scaled by a class weight.
inline Tensor cross_entropy(const Tensor& logits, int target,
                            const std::vector<double>& class_weights = {}) {
    if (logits.rank() != 1) throw ShapeError("cross_entropy: expects a logits vector");
    const int n = logits.dim(0);
    if (target < 0 || target >= n) throw ShapeError("cross_entropy: target out of range");
    if (!class_weights.empty() && static_cast<int>(class_weights.size()) != n)
        throw ShapeError("cross_entropy: weight count disagrees with classes");
    const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(target)];
    const double* in = logits.value().data();
    double mx = in[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, in[i]);
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += std::exp(in[i] - mx);
    const double lse = mx + std::log(total);
    const double loss = w * (lse - in[target]);
    return detail::make_result({}, {loss}, "cross_entropy", {logits},
                               [l = logits.node(), target, w, n](Node& out) {
        const double g = out.grad[0] * w;
        const double* in = l->value.data();
        double mx = in[0];
        for (int i = 1; i < n; ++i) mx = std::max(mx, in[i]);
        double total = 0.0;
        for (int i = 0; i < n; ++i) total += std::exp(in[i] - mx);
        for (int i = 0; i < n; ++i) {
            const double p = std::exp(in[i] - mx) / total;
            detail::accumulate(l, static_cast<std::size_t>(i), g * (p - (i == target ? 1.0 : 0.0)));
        }
    });
}

// Mean weighted cross-entropy over the rows of a logits matrix.
inline Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets,
                                 const std::vector<double>& class_weights = {}) {
    if (logits.rank() != 2) throw ShapeError("cross_entropy_rows: expects a logits matrix");
    const int n = logits.dim(0), c = logits.dim(1);
    if (static_cast<int>(targets.size()) != n)
        throw ShapeError("cross_entropy_rows: target count disagrees with rows");
    if (!class_weights.empty() && static_cast<int>(class_weights.size()) != c)
        throw ShapeError("cross_entropy_rows: weight count disagrees with classes");
    if (n == 0) throw ShapeError("cross_entropy_rows: empty input");
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const int t = targets[static_cast<std::size_t>(i)];
        if (t < 0 || t >= c) throw ShapeError("cross_entropy_rows: target out of range");
        const double* in = logits.value().data() + static_cast<std::size_t>(i) * c;
        double mx = in[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, in[j]);
        double total = 0.0;
        for (int j = 0; j < c; ++j) total += std::exp(in[j] - mx);
        const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(t)];
        loss += w * (mx + std::log(total) - in[t]);
    }
    loss /= static_cast<double>(n);
    return detail::make_result({}, {loss}, "cross_entropy_rows", {logits},
                               [l = logits.node(), targets, class_weights, n, c](Node& out) {
        const double g = out.grad[0] / static_cast<double>(n);
        for (int i = 0; i < n; ++i) {
            const int t = targets[static_cast<std::size_t>(i)];
            const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(t)];
            const double* in = l->value.data() + static_cast<std::size_t>(i) * c;
            double mx = in[0];
            for (int j = 1; j < c; ++j) mx = std::max(mx, in[j]);
            double total = 0.0;
            for (int j = 0; j < c; ++j) total += std::exp(in[j] - mx);
            for (int j = 0; j < c; ++j) {
                const double p = std::exp(in[j] - mx) / total;
                detail::accumulate(l, static_cast<std::size_t>(i) * c + j,
                                   g * w * (p - (j == t ? 1.0 : 0.0)));
            }
        }
    });
}

// Binary cross-entropy from logits against 0/1 targets, mean over entries.
inline Tensor binary_cross_entropy_logits(const Tensor& logits, const std::vector<double>& targets) {
    if (logits.rank() != 1) throw ShapeError("bce: expects a vector");
    const int n = logits.dim(0);
    if (static_cast<int>(targets.size()) != n) throw ShapeError("bce: target count disagrees");
    if (n == 0) throw ShapeError("bce: empty input");
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = logits.value()[static_cast<std::size_t>(i)], y = targets[static_cast<std::size_t>(i)];
        // log(1 + e^z) - y z, evaluated stably
        loss += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - y * z;
    }
    loss /= static_cast<double>(n);
    return detail::make_result({}, {loss}, "bce", {logits}, [l = logits.node(), targets, n](Node& out) {
        const double g = out.grad[0] / static_cast<double>(n);
        for (int i = 0; i < n; ++i) {
            const double z = l->value[static_cast<std::size_t>(i)];
            const double s = 1.0 / (1.0 + std::exp(-z));
            detail::accumulate(l, static_cast<std::size_t>(i), g * (s - targets[static_cast<std::size_t>(i)]));
        }
    });
}

// 1-D dilated convolution over a time-major input (T x Cin) with weights
// (Cout x Cin x k) and per-channel bias, zero-padded so the output keeps
// length T. The kernel is centered; k must be odd.
inline Tensor conv1d_dilated(const Tensor& x, const Tensor& weight, const Tensor& bias,
                             int dilation) {
    if (x.rank() != 2 || weight.rank() != 3 || bias.rank() != 1)
        throw ShapeError("conv1d: expects x(T,Cin), weight(Cout,Cin,k), bias(Cout)");
    if (dilation < 1) throw ShapeError("conv1d: dilation must be >= 1");
    const int T = x.dim(0), cin = x.dim(1);
    const int cout = weight.dim(0), k = weight.dim(2);
    if (weight.dim(1) != cin) throw ShapeError("conv1d: channel mismatch");
    if (bias.dim(0) != cout) throw ShapeError("conv1d: bias mismatch");
    if (k % 2 == 0) throw ShapeError("conv1d: kernel width must be odd");
    const int half = (k - 1) / 2;
    std::vector<double> v(static_cast<std::size_t>(T) * cout);
    const double *px = x.value().data(), *pw = weight.value().data(), *pb = bias.value().data();
    for (int t = 0; t < T; ++t) {
        double* out_row = v.data() + static_cast<std::size_t>(t) * cout;
        for (int o = 0; o < cout; ++o) out_row[o] = pb[o];
        for (int tap = 0; tap < k; ++tap) {
            const int src = t + (tap - half) * dilation;
            if (src < 0 || src >= T) continue;
            const double* in_row = px + static_cast<std::size_t>(src) * cin;
            for (int o = 0; o < cout; ++o) {
                const double* wrow = pw + (static_cast<std::size_t>(o) * cin) * k + tap;
                double s = 0.0;
                for (int i = 0; i < cin; ++i) s += in_row[i] * wrow[static_cast<std::size_t>(i) * k];
                out_row[o] += s;
            }
        }
    }
    return detail::make_result({T, cout}, std::move(v), "conv1d", {x, weight, bias},
                               [x = x.node(), w = weight.node(), b = bias.node(), T, cin, cout, k,
                                half, dilation](Node& out) {
        for (int t = 0; t < T; ++t) {
            const double* grow = out.grad.data() + static_cast<std::size_t>(t) * cout;
            for (int o = 0; o < cout; ++o) detail::accumulate(b, static_cast<std::size_t>(o), grow[o]);
            for (int tap = 0; tap < k; ++tap) {
                const int src = t + (tap - half) * dilation;
                if (src < 0 || src >= T) continue;
                for (int o = 0; o < cout; ++o) {
                    const double g = grow[o];
                    if (g == 0.0) continue;
                    for (int i = 0; i < cin; ++i) {
                        const std::size_t widx = (static_cast<std::size_t>(o) * cin + i) * k + tap;
                        detail::accumulate(w, widx, g * x->value[static_cast<std::size_t>(src) * cin + i]);
                        detail::accumulate(x, static_cast<std::size_t>(src) * cin + i, g * w->value[widx]);
                    }
                }
            }
        }
    });
}

// Inverted dropout: keeps each entry with probability 1-p and rescales by
// 1/(1-p). The mask is drawn from the supplied generator.
inline Tensor dropout(const Tensor& a, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0,1)");
    if (p == 0.0) return a;
    const double keep = 1.0 - p;
    auto mask = std::make_shared<std::vector<double>>(a.size());
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        (*mask)[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
        v[i] = a.value()[i] * (*mask)[i];
    }
    return detail::make_result(a.shape(), std::move(v), "dropout", {a}, [a = a.node(), mask](Node& out) {
        for (std::size_t i = 0; i < out.grad.size(); ++i)
            detail::accumulate(a, i, out.grad[i] * (*mask)[i]);
    });
}

}  // namespace actseq::ad
