#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "taskdisc/common.hpp"
#include "taskdisc/tensor.hpp"

namespace taskdisc {

// Reverse-mode tape over dense 2-D tensors.
//
// Nodes are appended eagerly (define-by-run), so node ids are already a
// topological order: every parent id is smaller than its child's. backward()
// emits the vector-Jacobian products as *new nodes on the same tape*, built
// from the same primitives. Differentiating a loss that itself contains
// gradient nodes (unrolled SGD) therefore needs no special casing: it is
// just another backward pass over a longer tape.
//
// Reductions and matmul accumulate left-to-right into a double accumulator
// regardless of scalar type; given identical inputs the results are
// bit-identical across runs.

enum class Op : uint8_t {
    constant,
    add,
    sub,
    mul,
    div,
    scale,       // a * c
    add_scalar,  // a + c
    matmul,
    transpose,
    relu,
    sigmoid,
    exp,
    log,
    sqrt,
    row_sum,       // N x M -> N x 1
    col_sum,       // N x M -> 1 x M
    sum_all,       // N x M -> 1 x 1
    mean_all,      // N x M -> 1 x 1
    bcast_rows,    // 1 x M -> n0 x M
    bcast_cols,    // N x 1 -> N x n0
    bcast_scalar,  // 1 x 1 -> n0 x n1
    concat_cols,   // N x A, N x B -> N x (A+B)
    slice_cols,    // N x M -> N x (n1-n0)
    pad_cols,      // N x K -> N x n1, block placed at column n0
    reshape,       // same numel, new dims n0 x n1
};

template <typename T>
class GraphT;

template <typename T>
struct ValueT {
    GraphT<T>* graph = nullptr;
    int32_t id = -1;

    bool valid() const { return graph != nullptr && id >= 0; }
    const TensorT<T>& tensor() const { return graph->node(id).value; }
    T item() const { return tensor().item(); }
};

template <typename T>
class GraphT {
  public:
    struct Node {
        Op op = Op::constant;
        int32_t a = -1;
        int32_t b = -1;
        T c{};          // scalar operand for scale / add_scalar
        int64_t n0 = 0; // dimension operands for broadcast / slice ops
        int64_t n1 = 0;
        TensorT<T> value;
    };

    GraphT() { nodes_.reserve(256); }

    ValueT<T> constant(TensorT<T> t) {
        Node n;
        n.op = Op::constant;
        n.value = std::move(t);
        return push(std::move(n));
    }

    ValueT<T> constant_scalar(T v) { return constant(TensorT<T>::scalar(v)); }

    size_t size() const { return nodes_.size(); }
    const Node& node(int32_t id) const { return nodes_[static_cast<size_t>(id)]; }

    ValueT<T> make(Op op, int32_t a, int32_t b, T c, int64_t n0, int64_t n1, TensorT<T> value) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.c = c;
        n.n0 = n0;
        n.n1 = n1;
        n.value = std::move(value);
        return push(std::move(n));
    }

  private:
    ValueT<T> push(Node&& n) {
        nodes_.push_back(std::move(n));
        return ValueT<T>{this, static_cast<int32_t>(nodes_.size() - 1)};
    }

    std::vector<Node> nodes_;
};

using Graph = GraphT<float>;
using Value = ValueT<float>;

namespace detail {

template <typename T>
void require_same_graph(ValueT<T> a, ValueT<T> b, const char* op) {
    if (a.graph != b.graph)
        throw contract_error(std::string(op) + ": operands belong to different graphs");
}

template <typename T>
void require_matrix(const TensorT<T>& t, const char* op) {
    if (!t.is_matrix()) throw shape_error(std::string(op) + ": expected a 2-D tensor, got " + t.shape_str());
}

template <typename T>
void require_same_shape(const TensorT<T>& x, const TensorT<T>& y, const char* op) {
    if (x.shape != y.shape)
        throw shape_error(std::string(op) + ": shape mismatch " + x.shape_str() + " vs " + y.shape_str());
}

}  // namespace detail

// ---- elementwise binary ----

template <typename T>
ValueT<T> add(ValueT<T> a, ValueT<T> b) {
    detail::require_same_graph(a, b, "add");
    const auto& x = a.tensor();
    const auto& y = b.tensor();
    detail::require_same_shape(x, y, "add");
    TensorT<T> out = x;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += y.data[i];
    return a.graph->make(Op::add, a.id, b.id, T(0), 0, 0, std::move(out));
}

template <typename T>
ValueT<T> sub(ValueT<T> a, ValueT<T> b) {
    detail::require_same_graph(a, b, "sub");
    const auto& x = a.tensor();
    const auto& y = b.tensor();
    detail::require_same_shape(x, y, "sub");
    TensorT<T> out = x;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= y.data[i];
    return a.graph->make(Op::sub, a.id, b.id, T(0), 0, 0, std::move(out));
}

template <typename T>
ValueT<T> mul(ValueT<T> a, ValueT<T> b) {
    detail::require_same_graph(a, b, "mul");
    const auto& x = a.tensor();
    const auto& y = b.tensor();
    detail::require_same_shape(x, y, "mul");
    TensorT<T> out = x;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= y.data[i];
    return a.graph->make(Op::mul, a.id, b.id, T(0), 0, 0, std::move(out));
}

template <typename T>
ValueT<T> div(ValueT<T> a, ValueT<T> b) {
    detail::require_same_graph(a, b, "div");
    const auto& x = a.tensor();
    const auto& y = b.tensor();
    detail::require_same_shape(x, y, "div");
    TensorT<T> out = x;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] /= y.data[i];
    return a.graph->make(Op::div, a.id, b.id, T(0), 0, 0, std::move(out));
}

// ---- scalar ----

template <typename T>
ValueT<T> scale(ValueT<T> a, T c) {
    TensorT<T> out = a.tensor();
    for (auto& v : out.data) v *= c;
    return a.graph->make(Op::scale, a.id, -1, c, 0, 0, std::move(out));
}

template <typename T>
ValueT<T> add_scalar(ValueT<T> a, T c) {
    TensorT<T> out = a.tensor();
    for (auto& v : out.data) v += c;
    return a.graph->make(Op::add_scalar, a.id, -1, c, 0, 0, std::move(out));
}

template <typename T>
ValueT<T> neg(ValueT<T> a) {
    return scale(a, T(-1));
}

// ---- linear algebra ----

template <typename T>
ValueT<T> matmul(ValueT<T> a, ValueT<T> b) {
    detail::require_same_graph(a, b, "matmul");
    const auto& x = a.tensor();
    const auto& y = b.tensor();
    detail::require_matrix(x, "matmul");
    detail::require_matrix(y, "matmul");
    if (x.cols() != y.rows())
        throw shape_error("matmul: inner dimensions disagree, " + x.shape_str() + " * " + y.shape_str());
    const int64_t n = x.rows(), k = x.cols(), m = y.cols();
    TensorT<T> out = TensorT<T>::zeros({n, m});
    std::vector<double> acc(static_cast<size_t>(m));
    for (int64_t i = 0; i < n; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int64_t p = 0; p < k; ++p) {
            const double xv = static_cast<double>(x.at(i, p));
            const T* yrow = &y.data[static_cast<size_t>(p * m)];
            for (int64_t j = 0; j < m; ++j) acc[static_cast<size_t>(j)] += xv * static_cast<double>(yrow[j]);
        }
        for (int64_t j = 0; j < m; ++j) out.at(i, j) = static_cast<T>(acc[static_cast<size_t>(j)]);
    }
    return a.graph->make(Op::matmul, a.id, b.id, T(0), 0, 0, std::move(out));
}

template <typename T>
ValueT<T> transpose(ValueT<T> a) {
    const auto& x = a.tensor();
    detail::require_matrix(x, "transpose");
    TensorT<T> out = TensorT<T>::zeros({x.cols(), x.rows()});
    for (int64_t i = 0; i < x.rows(); ++i)
        for (int64_t j = 0; j < x.cols(); ++j) out.at(j, i) = x.at(i, j);
    return a.graph->make(Op::transpose, a.id, -1, T(0), 0, 0, std::move(out));
}

// ---- elementwise unary ----

template <typename T>
ValueT<T> relu(ValueT<T> a) {
    TensorT<T> out = a.tensor();
    for (auto& v : out.data) v = v > T(0) ? v : T(0);
    return a.graph->make(Op::relu, a.id, -1, T(0), 0, 0, std::move(out));
}

template <typename T>
ValueT<T> sigmoid(ValueT<T> a) {
    TensorT<T> out = a.tensor();
    for (auto& v : out.data) {
        const double z = static_cast<double>(v);
        v = static_cast<T>(z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)));
    }
    return a.graph->make(Op::sigmoid, a.id, -1, T(0), 0, 0, std::move(out));
}

template <typename T>
ValueT<T> exp(ValueT<T> a) {
    TensorT<T> out = a.tensor();
    for (auto& v : out.data) v = static_cast<T>(std::exp(static_cast<double>(v)));
    return a.graph->make(Op::exp, a.id, -1, T(0), 0, 0, std::move(out));
}

template <typename T>
ValueT<T> log(ValueT<T> a) {
    TensorT<T> out = a.tensor();
    for (auto& v : out.data) v = static_cast<T>(std::log(static_cast<double>(v)));
    return a.graph->make(Op::log, a.id, -1, T(0), 0, 0, std::move(out));
}

template <typename T>
ValueT<T> sqrt(ValueT<T> a) {
    TensorT<T> out = a.tensor();
    for (auto& v : out.data) v = static_cast<T>(std::sqrt(static_cast<double>(v)));
    return a.graph->make(Op::sqrt, a.id, -1, T(0), 0, 0, std::move(out));
}

// ---- reductions (fixed left-to-right order, double accumulator) ----

template <typename T>
ValueT<T> row_sum(ValueT<T> a) {
    const auto& x = a.tensor();
    detail::require_matrix(x, "row_sum");
    TensorT<T> out = TensorT<T>::zeros({x.rows(), 1});
    for (int64_t i = 0; i < x.rows(); ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < x.cols(); ++j) acc += static_cast<double>(x.at(i, j));
        out.at(i, 0) = static_cast<T>(acc);
    }
    return a.graph->make(Op::row_sum, a.id, -1, T(0), 0, 0, std::move(out));
}

template <typename T>
ValueT<T> col_sum(ValueT<T> a) {
    const auto& x = a.tensor();
    detail::require_matrix(x, "col_sum");
    TensorT<T> out = TensorT<T>::zeros({1, x.cols()});
    for (int64_t j = 0; j < x.cols(); ++j) {
        double acc = 0.0;
        for (int64_t i = 0; i < x.rows(); ++i) acc += static_cast<double>(x.at(i, j));
        out.at(0, j) = static_cast<T>(acc);
    }
    return a.graph->make(Op::col_sum, a.id, -1, T(0), 0, 0, std::move(out));
}

template <typename T>
ValueT<T> sum_all(ValueT<T> a) {
    const auto& x = a.tensor();
    double acc = 0.0;
    for (const T v : x.data) acc += static_cast<double>(v);
    return a.graph->make(Op::sum_all, a.id, -1, T(0), 0, 0, TensorT<T>::scalar(static_cast<T>(acc)));
}

template <typename T>
ValueT<T> mean_all(ValueT<T> a) {
    const auto& x = a.tensor();
    double acc = 0.0;
    for (const T v : x.data) acc += static_cast<double>(v);
    acc /= static_cast<double>(x.numel());
    return a.graph->make(Op::mean_all, a.id, -1, T(0), 0, 0, TensorT<T>::scalar(static_cast<T>(acc)));
}

// ---- broadcasts ----

template <typename T>
ValueT<T> bcast_rows(ValueT<T> a, int64_t n) {
    const auto& x = a.tensor();
    detail::require_matrix(x, "bcast_rows");
    if (x.rows() != 1) throw shape_error("bcast_rows: expected 1 x M, got " + x.shape_str());
    TensorT<T> out = TensorT<T>::zeros({n, x.cols()});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(0, j);
    return a.graph->make(Op::bcast_rows, a.id, -1, T(0), n, 0, std::move(out));
}

template <typename T>
ValueT<T> bcast_cols(ValueT<T> a, int64_t m) {
    const auto& x = a.tensor();
    detail::require_matrix(x, "bcast_cols");
    if (x.cols() != 1) throw shape_error("bcast_cols: expected N x 1, got " + x.shape_str());
    TensorT<T> out = TensorT<T>::zeros({x.rows(), m});
    for (int64_t i = 0; i < x.rows(); ++i)
        for (int64_t j = 0; j < m; ++j) out.at(i, j) = x.at(i, 0);
    return a.graph->make(Op::bcast_cols, a.id, -1, T(0), m, 0, std::move(out));
}

template <typename T>
ValueT<T> bcast_scalar(ValueT<T> a, int64_t n, int64_t m) {
    const auto& x = a.tensor();
    if (x.numel() != 1) throw shape_error("bcast_scalar: expected 1 x 1, got " + x.shape_str());
    return a.graph->make(Op::bcast_scalar, a.id, -1, T(0), n, m, TensorT<T>::full({n, m}, x.data[0]));
}

// ---- column assembly ----

template <typename T>
ValueT<T> concat_cols(ValueT<T> a, ValueT<T> b) {
    detail::require_same_graph(a, b, "concat_cols");
    const auto& x = a.tensor();
    const auto& y = b.tensor();
    detail::require_matrix(x, "concat_cols");
    detail::require_matrix(y, "concat_cols");
    if (x.rows() != y.rows()) throw shape_error("concat_cols: row counts disagree");
    TensorT<T> out = TensorT<T>::zeros({x.rows(), x.cols() + y.cols()});
    for (int64_t i = 0; i < x.rows(); ++i) {
        for (int64_t j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(i, j);
        for (int64_t j = 0; j < y.cols(); ++j) out.at(i, x.cols() + j) = y.at(i, j);
    }
    return a.graph->make(Op::concat_cols, a.id, b.id, T(0), x.cols(), 0, std::move(out));
}

template <typename T>
ValueT<T> slice_cols(ValueT<T> a, int64_t j0, int64_t j1) {
    const auto& x = a.tensor();
    detail::require_matrix(x, "slice_cols");
    if (j0 < 0 || j1 > x.cols() || j0 >= j1) throw shape_error("slice_cols: bad column range");
    TensorT<T> out = TensorT<T>::zeros({x.rows(), j1 - j0});
    for (int64_t i = 0; i < x.rows(); ++i)
        for (int64_t j = j0; j < j1; ++j) out.at(i, j - j0) = x.at(i, j);
    return a.graph->make(Op::slice_cols, a.id, -1, T(0), j0, j1, std::move(out));
}

template <typename T>
ValueT<T> reshape(ValueT<T> a, int64_t n, int64_t m) {
    const auto& x = a.tensor();
    if (x.numel() != n * m)
        throw shape_error("reshape: cannot view " + x.shape_str() + " as [" + std::to_string(n) + "x" +
                          std::to_string(m) + "]");
    TensorT<T> out;
    out.shape = {n, m};
    out.data = x.data;  // row-major layout is unchanged
    return a.graph->make(Op::reshape, a.id, -1, T(0), n, m, std::move(out));
}

template <typename T>
ValueT<T> pad_cols(ValueT<T> a, int64_t j0, int64_t total_cols) {
    const auto& x = a.tensor();
    detail::require_matrix(x, "pad_cols");
    if (j0 < 0 || j0 + x.cols() > total_cols) throw shape_error("pad_cols: block out of range");
    TensorT<T> out = TensorT<T>::zeros({x.rows(), total_cols});
    for (int64_t i = 0; i < x.rows(); ++i)
        for (int64_t j = 0; j < x.cols(); ++j) out.at(i, j0 + j) = x.at(i, j);
    return a.graph->make(Op::pad_cols, a.id, -1, T(0), j0, total_cols, std::move(out));
}

// ---- backward ----

namespace detail {

template <typename T>
void accumulate(std::vector<int32_t>& grad, int32_t target, ValueT<T> contribution) {
    if (target < 0) return;
    auto& slot = grad[static_cast<size_t>(target)];
    if (slot < 0) {
        slot = contribution.id;
    } else {
        slot = add(ValueT<T>{contribution.graph, slot}, contribution).id;
    }
}

}  // namespace detail

// Emits gradient nodes of `loss` with respect to each leaf, in leaf order.
// Leaves the loss does not reach get an explicit zero tensor. The returned
// values live on the same tape and are themselves differentiable.
template <typename T>
std::vector<ValueT<T>> backward(ValueT<T> loss, std::span<const ValueT<T>> leaves) {
    GraphT<T>* g = loss.graph;
    if (g == nullptr) throw contract_error("backward: invalid loss value");
    if (loss.tensor().numel() != 1) throw contract_error("backward: loss must be a scalar");
    for (const auto& l : leaves)
        if (l.graph != g) throw contract_error("backward: leaf not on the loss's tape");

    // grad[i] = node id of dLoss/dNode_i, or -1 while unreached.
    std::vector<int32_t> grad(g->size(), -1);
    grad[static_cast<size_t>(loss.id)] = g->constant(TensorT<T>::scalar(T(1))).id;

    for (int32_t i = loss.id; i >= 0; --i) {
        const int32_t gid = grad[static_cast<size_t>(i)];
        if (gid < 0) continue;
        const auto node = g->node(i);  // copy: make() below may reallocate
        ValueT<T> d{g, gid};
        ValueT<T> self{g, i};
        ValueT<T> pa{g, node.a};
        ValueT<T> pb{g, node.b};
        switch (node.op) {
            case Op::constant:
                break;
            case Op::add:
                detail::accumulate(grad, node.a, d);
                detail::accumulate(grad, node.b, d);
                break;
            case Op::sub:
                detail::accumulate(grad, node.a, d);
                detail::accumulate(grad, node.b, neg(d));
                break;
            case Op::mul:
                detail::accumulate(grad, node.a, mul(d, pb));
                detail::accumulate(grad, node.b, mul(d, pa));
                break;
            case Op::div:
                detail::accumulate(grad, node.a, div(d, pb));
                detail::accumulate(grad, node.b, neg(div(mul(d, self), pb)));
                break;
            case Op::scale:
                detail::accumulate(grad, node.a, scale(d, node.c));
                break;
            case Op::add_scalar:
                detail::accumulate(grad, node.a, d);
                break;
            case Op::matmul:
                detail::accumulate(grad, node.a, matmul(d, transpose(pb)));
                detail::accumulate(grad, node.b, matmul(transpose(pa), d));
                break;
            case Op::transpose:
                detail::accumulate(grad, node.a, transpose(d));
                break;
            case Op::relu: {
                TensorT<T> mask = pa.tensor();
                for (auto& v : mask.data) v = v > T(0) ? T(1) : T(0);
                detail::accumulate(grad, node.a, mul(d, g->constant(std::move(mask))));
                break;
            }
            case Op::sigmoid: {
                // y(1-y), expressed through nodes so it stays differentiable
                auto one_minus = add_scalar(neg(self), T(1));
                detail::accumulate(grad, node.a, mul(d, mul(self, one_minus)));
                break;
            }
            case Op::exp:
                detail::accumulate(grad, node.a, mul(d, self));
                break;
            case Op::log:
                detail::accumulate(grad, node.a, div(d, pa));
                break;
            case Op::sqrt:
                detail::accumulate(grad, node.a, div(d, scale(self, T(2))));
                break;
            case Op::row_sum:
                detail::accumulate(grad, node.a, bcast_cols(d, pa.tensor().cols()));
                break;
            case Op::col_sum:
                detail::accumulate(grad, node.a, bcast_rows(d, pa.tensor().rows()));
                break;
            case Op::sum_all:
                detail::accumulate(grad, node.a, bcast_scalar(d, pa.tensor().rows(), pa.tensor().cols()));
                break;
            case Op::mean_all:
                detail::accumulate(grad, node.a,
                                   scale(bcast_scalar(d, pa.tensor().rows(), pa.tensor().cols()),
                                         static_cast<T>(1.0 / static_cast<double>(pa.tensor().numel()))));
                break;
            case Op::bcast_rows:
                detail::accumulate(grad, node.a, col_sum(d));
                break;
            case Op::bcast_cols:
                detail::accumulate(grad, node.a, row_sum(d));
                break;
            case Op::bcast_scalar:
                detail::accumulate(grad, node.a, sum_all(d));
                break;
            case Op::concat_cols:
                detail::accumulate(grad, node.a, slice_cols(d, 0, node.n0));
                detail::accumulate(grad, node.b, slice_cols(d, node.n0, d.tensor().cols()));
                break;
            case Op::slice_cols:
                detail::accumulate(grad, node.a, pad_cols(d, node.n0, pa.tensor().cols()));
                break;
            case Op::pad_cols:
                detail::accumulate(grad, node.a, slice_cols(d, node.n0, node.n0 + pa.tensor().cols()));
                break;
            case Op::reshape:
                detail::accumulate(grad, node.a, reshape(d, pa.tensor().rows(), pa.tensor().cols()));
                break;
        }
    }

    std::vector<ValueT<T>> out;
    out.reserve(leaves.size());
    for (const auto& l : leaves) {
        const int32_t gid =
            static_cast<size_t>(l.id) < grad.size() ? grad[static_cast<size_t>(l.id)] : -1;
        if (gid < 0) {
            out.push_back(g->constant(TensorT<T>::zeros(l.tensor().shape)));
        } else {
            out.push_back(ValueT<T>{g, gid});
        }
    }
    return out;
}

template <typename T>
ValueT<T> backward_single(ValueT<T> loss, ValueT<T> leaf) {
    const ValueT<T> leaves[1] = {leaf};
    return backward(loss, std::span<const ValueT<T>>(leaves, 1)).front();
}

// Central finite differences against the tape's analytic gradient.
// `build` must deterministically map (graph, input value) to a scalar loss.
// Returns max over checked coordinates of |analytic - fd| / (|analytic| + 1e-8).
template <typename T, typename Build>
double finite_diff_check(Build&& build, const TensorT<T>& point, double eps,
                         std::span<const int64_t> coords = {}) {
    TensorT<T> analytic;
    {
        GraphT<T> g;
        auto x = g.constant(point);
        auto loss = build(g, x);
        if (!std::isfinite(static_cast<double>(loss.item())))
            throw numeric_error("finite_diff_check: non-finite loss at base point");
        analytic = backward_single(loss, x).tensor();
    }

    auto eval = [&](const TensorT<T>& p, int64_t coord) -> double {
        GraphT<T> g;
        auto x = g.constant(p);
        const double v = static_cast<double>(build(g, x).item());
        if (!std::isfinite(v))
            throw numeric_error("finite_diff_check: non-finite loss at coordinate " + std::to_string(coord));
        return v;
    };

    std::vector<int64_t> all;
    if (coords.empty()) {
        all.resize(static_cast<size_t>(point.numel()));
        for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int64_t>(i);
        coords = all;
    }

    double worst = 0.0;
    for (const int64_t i : coords) {
        TensorT<T> p = point;
        const T orig = p.data[static_cast<size_t>(i)];
        p.data[static_cast<size_t>(i)] = orig + static_cast<T>(eps);
        const double fp = eval(p, i);
        p.data[static_cast<size_t>(i)] = orig - static_cast<T>(eps);
        const double fm = eval(p, i);
        const double fd = (fp - fm) / (2.0 * eps);
        const double a = static_cast<double>(analytic.data[static_cast<size_t>(i)]);
        const double rel = std::abs(a - fd) / (std::abs(a) + 1e-8);
        if (rel > worst) worst = rel;
    }
    return worst;
}

}  // namespace taskdisc
