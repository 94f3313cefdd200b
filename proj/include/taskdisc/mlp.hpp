#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "taskdisc/common.hpp"
#include "taskdisc/graph.hpp"
#include "taskdisc/rng.hpp"
#include "taskdisc/tensor.hpp"

namespace taskdisc {

enum class Activation : uint8_t { relu, identity };

// Fully-connected classifier/encoder description. widths runs input..output;
// acts has one entry per weight layer. `normalize` inserts a per-sample
// feature standardization after each hidden activation (batch-independent,
// so training stays deterministic sample-by-sample).
struct MlpSpec {
    std::vector<int64_t> widths;
    std::vector<Activation> acts;
    bool normalize = false;

    int64_t layers() const { return static_cast<int64_t>(widths.size()) - 1; }
    int64_t input_width() const { return widths.front(); }
    int64_t output_width() const { return widths.back(); }

    void validate() const {
        if (widths.size() < 2) throw spec_error("mlp spec: need at least one layer");
        for (const int64_t w : widths)
            if (w < 1) throw spec_error("mlp spec: widths must be positive");
        if (acts.size() != static_cast<size_t>(layers()))
            throw spec_error("mlp spec: need one activation per layer");
    }

    int64_t param_count() const {
        int64_t n = 0;
        for (int64_t l = 0; l < layers(); ++l) n += widths[l] * widths[l + 1] + widths[l + 1];
        return n;
    }

    // Hidden layers relu, final layer identity.
    static MlpSpec dense(std::vector<int64_t> widths_, bool normalize_ = false) {
        MlpSpec s;
        s.widths = std::move(widths_);
        s.normalize = normalize_;
        s.acts.assign(static_cast<size_t>(s.widths.size() - 1), Activation::relu);
        if (!s.acts.empty()) s.acts.back() = Activation::identity;
        s.validate();
        return s;
    }
};

// Flat parameter storage. Layout per layer l: weight matrix
// widths[l] x widths[l+1] row-major, then bias row of widths[l+1].
template <typename T>
struct ParamVectorT {
    std::vector<T> values;
};

using ParamVector = ParamVectorT<float>;

template <typename T>
void check_param_size(const MlpSpec& spec, const ParamVectorT<T>& pv) {
    if (static_cast<int64_t>(pv.values.size()) != spec.param_count())
        throw shape_error("param vector length " + std::to_string(pv.values.size()) +
                          " does not match spec parameter count " + std::to_string(spec.param_count()));
}

// Uniform fan-in scaling (Kaiming uniform with PyTorch's Linear defaults):
// weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T = float>
ParamVectorT<T> init_params(const MlpSpec& spec, Pcg64& rng) {
    spec.validate();
    ParamVectorT<T> pv;
    pv.values.reserve(static_cast<size_t>(spec.param_count()));
    for (int64_t l = 0; l < spec.layers(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.widths[l]));
        const int64_t n = spec.widths[l] * spec.widths[l + 1] + spec.widths[l + 1];
        for (int64_t i = 0; i < n; ++i) pv.values.push_back(static_cast<T>(rng.uniform(-bound, bound)));
    }
    return pv;
}

// Per-layer views of the flat vector: {W0, b0, W1, b1, ...}.
template <typename T>
std::vector<TensorT<T>> unpack_params(const MlpSpec& spec, const ParamVectorT<T>& pv) {
    check_param_size(spec, pv);
    std::vector<TensorT<T>> out;
    size_t off = 0;
    for (int64_t l = 0; l < spec.layers(); ++l) {
        const int64_t in = spec.widths[l], outw = spec.widths[l + 1];
        TensorT<T> w = TensorT<T>::zeros({in, outw});
        std::copy(pv.values.begin() + off, pv.values.begin() + off + in * outw, w.data.begin());
        off += static_cast<size_t>(in * outw);
        TensorT<T> b = TensorT<T>::zeros({1, outw});
        std::copy(pv.values.begin() + off, pv.values.begin() + off + outw, b.data.begin());
        off += static_cast<size_t>(outw);
        out.push_back(std::move(w));
        out.push_back(std::move(b));
    }
    return out;
}

template <typename T>
ParamVectorT<T> pack_params(const MlpSpec& spec, std::span<const TensorT<T>> layers) {
    if (layers.size() != static_cast<size_t>(2 * spec.layers()))
        throw shape_error("pack_params: expected " + std::to_string(2 * spec.layers()) + " tensors");
    ParamVectorT<T> pv;
    pv.values.reserve(static_cast<size_t>(spec.param_count()));
    for (const auto& t : layers) pv.values.insert(pv.values.end(), t.data.begin(), t.data.end());
    check_param_size(spec, pv);
    return pv;
}

// Parameters lifted onto a tape, one node per weight/bias tensor.
template <typename T>
struct MlpNodesT {
    std::vector<ValueT<T>> tensors;  // {W0, b0, W1, b1, ...}
};

template <typename T>
MlpNodesT<T> params_to_nodes(GraphT<T>& g, const MlpSpec& spec, const ParamVectorT<T>& pv) {
    MlpNodesT<T> nodes;
    for (auto& t : unpack_params(spec, pv)) nodes.tensors.push_back(g.constant(std::move(t)));
    return nodes;
}

template <typename T>
ParamVectorT<T> nodes_to_params(const MlpSpec& spec, const MlpNodesT<T>& nodes) {
    std::vector<TensorT<T>> layers;
    layers.reserve(nodes.tensors.size());
    for (const auto& v : nodes.tensors) layers.push_back(v.tensor());
    return pack_params<T>(spec, layers);
}

// Per-sample feature standardization: (x - mean_row) / sqrt(var_row + eps).
template <typename T>
ValueT<T> sample_norm(ValueT<T> x) {
    const int64_t m = x.tensor().cols();
    auto mean = scale(row_sum(x), static_cast<T>(1.0 / static_cast<double>(m)));
    auto centered = sub(x, bcast_cols(mean, m));
    auto var = scale(row_sum(mul(centered, centered)), static_cast<T>(1.0 / static_cast<double>(m)));
    auto denom = sqrt(add_scalar(var, static_cast<T>(1e-5)));
    return div(centered, bcast_cols(denom, m));
}

// Tape-recorded forward pass; gradients flow into both batch and parameters.
template <typename T>
ValueT<T> mlp_forward(GraphT<T>& g, const MlpSpec& spec, const MlpNodesT<T>& params, ValueT<T> batch) {
    spec.validate();
    if (batch.tensor().cols() != spec.input_width())
        throw shape_error("mlp_forward: layer 0 expects input width " + std::to_string(spec.input_width()) +
                          ", got " + std::to_string(batch.tensor().cols()));
    ValueT<T> x = batch;
    for (int64_t l = 0; l < spec.layers(); ++l) {
        auto w = params.tensors[static_cast<size_t>(2 * l)];
        auto b = params.tensors[static_cast<size_t>(2 * l + 1)];
        if (x.tensor().cols() != w.tensor().rows())
            throw shape_error("mlp_forward: layer " + std::to_string(l) + " expects input width " +
                              std::to_string(w.tensor().rows()) + ", got " + std::to_string(x.tensor().cols()));
        x = add(matmul(x, w), bcast_rows(b, x.tensor().rows()));
        if (spec.acts[static_cast<size_t>(l)] == Activation::relu) x = relu(x);
        if (spec.normalize && l + 1 < spec.layers()) x = sample_norm(x);
    }
    (void)g;
    return x;
}

// Plain inference entry point: N x D batch -> N x C logits.
template <typename T>
TensorT<T> mlp_apply(const ParamVectorT<T>& params, const MlpSpec& spec, const TensorT<T>& batch) {
    GraphT<T> g;
    auto nodes = params_to_nodes(g, spec, params);
    return mlp_forward(g, spec, nodes, g.constant(batch)).tensor();
}

// ---- classification math ----

// Row-wise log-softmax via max-shifted logsumexp. The shift is a constant
// node; its contribution to the gradient cancels exactly.
template <typename T>
ValueT<T> log_softmax_rows(ValueT<T> logits) {
    GraphT<T>* g = logits.graph;
    const auto& z = logits.tensor();
    TensorT<T> shift = TensorT<T>::zeros({z.rows(), 1});
    for (int64_t i = 0; i < z.rows(); ++i) {
        T m = z.at(i, 0);
        for (int64_t j = 1; j < z.cols(); ++j) m = std::max(m, z.at(i, j));
        shift.at(i, 0) = m;
    }
    auto shift_node = bcast_cols(g->constant(std::move(shift)), z.cols());
    auto centered = sub(logits, shift_node);
    auto lse = log(row_sum(exp(centered)));
    return sub(centered, bcast_cols(lse, z.cols()));
}

template <typename T>
ValueT<T> softmax_rows(ValueT<T> logits) {
    return exp(log_softmax_rows(logits));
}

// Mean over rows of -sum_c targets * log_softmax(logits). Targets may be a
// constant one-hot or a differentiable probability node.
template <typename T>
ValueT<T> cross_entropy(ValueT<T> logits, ValueT<T> targets) {
    auto logp = log_softmax_rows(logits);
    return neg(mean_all(row_sum(mul(targets, logp))));
}

template <typename T>
TensorT<T> one_hot(std::span<const int> labels, int64_t num_classes) {
    TensorT<T> t = TensorT<T>::zeros({static_cast<int64_t>(labels.size()), num_classes});
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw contract_error("one_hot: label out of range");
        t.at(static_cast<int64_t>(i), labels[i]) = T(1);
    }
    return t;
}

template <typename T>
std::vector<int> argmax_rows(const TensorT<T>& logits) {
    std::vector<int> out(static_cast<size_t>(logits.rows()));
    for (int64_t i = 0; i < logits.rows(); ++i) {
        int best = 0;
        T bv = logits.at(i, 0);
        for (int64_t j = 1; j < logits.cols(); ++j)
            if (logits.at(i, j) > bv) {
                bv = logits.at(i, j);
                best = static_cast<int>(j);
            }
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

// One differentiable SGD update: params - lr * grads. Gradients reaching the
// result flow into both operands, which is what lets a later backward pass
// differentiate through the whole unrolled training run.
template <typename T>
ValueT<T> sgd_step(ValueT<T> params, ValueT<T> grads, T lr, int64_t step_index = -1) {
    if (lr < T(0)) throw contract_error("sgd_step: negative learning rate");
    detail::require_same_shape(params.tensor(), grads.tensor(), "sgd_step");
    if (!grads.tensor().all_finite())
        throw training_error("sgd_step: non-finite gradient at step " + std::to_string(step_index));
    return sub(params, scale(grads, lr));
}

}  // namespace taskdisc
