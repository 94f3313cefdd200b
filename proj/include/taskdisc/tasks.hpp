#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "taskdisc/common.hpp"
#include "taskdisc/data.hpp"
#include "taskdisc/mlp.hpp"
#include "taskdisc/rng.hpp"

namespace taskdisc {

enum class TaskOrigin : uint8_t { planted, random, pixel, random_net, discovered, loaded };

inline const char* origin_name(TaskOrigin o) {
    switch (o) {
        case TaskOrigin::planted: return "planted";
        case TaskOrigin::random: return "random";
        case TaskOrigin::pixel: return "pixel";
        case TaskOrigin::random_net: return "random-net";
        case TaskOrigin::discovered: return "discovered";
        case TaskOrigin::loaded: return "loaded";
    }
    return "?";
}

inline TaskOrigin origin_from_name(const std::string& s) {
    if (s == "planted") return TaskOrigin::planted;
    if (s == "random") return TaskOrigin::random;
    if (s == "pixel") return TaskOrigin::pixel;
    if (s == "random-net") return TaskOrigin::random_net;
    if (s == "discovered") return TaskOrigin::discovered;
    if (s == "loaded") return TaskOrigin::loaded;
    throw parse_error("task: unknown origin '" + s + "'");
}

// A labelling of a dataset: every id gets exactly one class in {0..K-1}.
class Task {
  public:
    Task() = default;
    Task(std::vector<int64_t> ids, std::vector<int> labels, TaskOrigin origin, int num_classes = 2)
        : ids_(std::move(ids)), labels_(std::move(labels)), origin_(origin), num_classes_(num_classes) {
        if (ids_.size() != labels_.size()) throw contract_error("task: ids/labels size mismatch");
        if (num_classes_ < 2) throw contract_error("task: need at least two classes");
        index_.reserve(ids_.size());
        for (size_t i = 0; i < ids_.size(); ++i) {
            if (labels_[i] < 0 || labels_[i] >= num_classes_)
                throw contract_error("task: label out of range for id " + std::to_string(ids_[i]));
            if (!index_.emplace(ids_[i], static_cast<int64_t>(i)).second)
                throw contract_error("task: duplicate id " + std::to_string(ids_[i]));
        }
    }

    const std::vector<int64_t>& ids() const { return ids_; }
    const std::vector<int>& labels() const { return labels_; }
    TaskOrigin origin() const { return origin_; }
    int num_classes() const { return num_classes_; }
    bool binary() const { return num_classes_ == 2; }

    int label(int64_t id) const {
        const auto it = index_.find(id);
        if (it == index_.end()) throw contract_error("task: id " + std::to_string(id) + " not labelled");
        return labels_[static_cast<size_t>(it->second)];
    }

    std::vector<int> labels_for(std::span<const int64_t> subset) const {
        std::vector<int> out;
        out.reserve(subset.size());
        for (const int64_t id : subset) out.push_back(label(id));
        return out;
    }

    Task flipped() const {
        if (!binary()) throw contract_error("task: flip is defined for binary tasks only");
        std::vector<int> flipped_labels(labels_.size());
        for (size_t i = 0; i < labels_.size(); ++i) flipped_labels[i] = 1 - labels_[i];
        return Task(ids_, std::move(flipped_labels), origin_, 2);
    }

  private:
    std::vector<int64_t> ids_;
    std::vector<int> labels_;
    TaskOrigin origin_ = TaskOrigin::loaded;
    int num_classes_ = 2;
    std::unordered_map<int64_t, int64_t> index_;
};

// max(P[t1 = t2], P[t1 = 1-t2]) over the given ids; the max absorbs label
// flips, so the value lives in [0.5, 1] for balanced tasks.
inline double similarity(const Task& t1, const Task& t2, std::span<const int64_t> ids) {
    if (!t1.binary() || !t2.binary())
        throw contract_error("similarity: defined for binary tasks only");
    if (ids.empty()) throw contract_error("similarity: empty id set");
    int64_t agree = 0;
    for (const int64_t id : ids)
        if (t1.label(id) == t2.label(id)) ++agree;
    const double m = static_cast<double>(agree) / static_cast<double>(ids.size());
    return std::max(m, 1.0 - m);
}

inline double similarity(const Task& t1, const Task& t2) {
    return similarity(t1, t2, t1.ids());
}

// Balanced random labels: a shuffled vector of exactly floor(n/2) ones.
inline Task random_task(std::span<const int64_t> ids, uint64_t seed) {
    if (ids.size() < 2) throw contract_error("random_task: need at least 2 ids");
    std::vector<int> labels(ids.size(), 0);
    for (size_t i = 0; i < ids.size() / 2; ++i) labels[i] = 1;
    Pcg64 rng(seed);
    rng.shuffle(labels);
    return Task(std::vector<int64_t>(ids.begin(), ids.end()), std::move(labels), TaskOrigin::random);
}

namespace detail {

// Rank-based even split: sort by (value, id) ascending, top floor(n/2) get
// class 1. Ties are broken by id order, which keeps the labels exactly
// balanced and deterministic.
inline std::vector<int> median_split_labels(std::span<const double> values, std::span<const int64_t> ids) {
    const size_t n = values.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (values[a] != values[b]) return values[a] < values[b];
        return ids[a] < ids[b];
    });
    std::vector<int> labels(n, 0);
    for (size_t r = n - n / 2; r < n; ++r) labels[order[r]] = 1;
    return labels;
}

}  // namespace detail

// Threshold one feature column at its median so the classes come out even.
inline Task pixel_threshold_task(const Dataset& ds, int64_t coord) {
    if (coord < 0 || coord >= ds.dim())
        throw contract_error("pixel_threshold_task: coordinate " + std::to_string(coord) + " out of range");
    std::vector<double> col(static_cast<size_t>(ds.n()));
    for (int64_t i = 0; i < ds.n(); ++i) col[static_cast<size_t>(i)] = ds.features.at(i, coord);
    const auto [mn, mx] = std::minmax_element(col.begin(), col.end());
    if (*mn == *mx)
        throw degenerate_error("pixel_threshold_task: column " + std::to_string(coord) + " is constant");
    auto labels = detail::median_split_labels(col, ds.ids);
    return Task(ds.ids, std::move(labels), TaskOrigin::pixel);
}

// Task from a freshly initialized (untrained) network: collect the scalar
// logits over all points, sort, and label the top half 1.
inline Task random_network_task(const Dataset& ds, const MlpSpec& spec, uint64_t seed) {
    spec.validate();
    if (spec.output_width() != 1)
        throw contract_error("random_network_task: spec must end in a single logit");
    if (spec.input_width() != ds.dim())
        throw shape_error("random_network_task: spec input width does not match dataset");
    Pcg64 rng(seed);
    const auto params = init_params<float>(spec, rng);
    const Tensor logits = mlp_apply(params, spec, ds.features);
    std::vector<double> vals(static_cast<size_t>(ds.n()));
    for (int64_t i = 0; i < ds.n(); ++i) vals[static_cast<size_t>(i)] = logits.at(i, 0);
    auto labels = detail::median_split_labels(vals, ds.ids);
    return Task(ds.ids, std::move(labels), TaskOrigin::random_net);
}

inline Task planted_task(const Dataset& ds, int64_t factor) {
    if (factor < 0 || factor >= static_cast<int64_t>(ds.planted.size()))
        throw contract_error("planted_task: factor " + std::to_string(factor) + " out of range");
    std::vector<int> labels(ds.planted[static_cast<size_t>(factor)].begin(),
                            ds.planted[static_cast<size_t>(factor)].end());
    return Task(ds.ids, std::move(labels), TaskOrigin::planted);
}

struct NaiveDiscoveryResult {
    std::vector<Task> tasks;
    std::vector<int64_t> draws_per_acceptance;
    int64_t total_draws = 0;
    bool exhausted = false;
};

// Rejection-sampled random-network tasks: keep a draw iff its similarity to
// every kept task stays below the threshold.
inline NaiveDiscoveryResult naive_random_discovery(const Dataset& ds, const MlpSpec& net_spec,
                                                   double sim_threshold, int64_t n_tasks,
                                                   int64_t budget, uint64_t seed) {
    if (!(sim_threshold > 0.5 && sim_threshold < 1.0))
        throw contract_error("naive_random_discovery: threshold must lie in (0.5, 1)");
    if (n_tasks < 1 || budget < 1) throw contract_error("naive_random_discovery: bad task count or budget");

    NaiveDiscoveryResult res;
    int64_t draws_since_accept = 0;
    while (static_cast<int64_t>(res.tasks.size()) < n_tasks && res.total_draws < budget) {
        const uint64_t draw_seed = derive_seed(seed, "naive-draw", static_cast<uint64_t>(res.total_draws) + 1);
        Task t = random_network_task(ds, net_spec, draw_seed);
        ++res.total_draws;
        ++draws_since_accept;
        double worst = 0.0;
        for (const Task& kept : res.tasks) worst = std::max(worst, similarity(t, kept, ds.ids));
        if (res.tasks.empty() || worst < sim_threshold) {
            res.tasks.push_back(std::move(t));
            res.draws_per_acceptance.push_back(draws_since_accept);
            draws_since_accept = 0;
        }
    }
    res.exhausted = static_cast<int64_t>(res.tasks.size()) < n_tasks;
    return res;
}

// Shared encoder + linear head; thresholding its output defines a task.
struct TaskNetwork {
    MlpSpec encoder;
    ParamVector encoder_params;
    Tensor head;  // d x 1 (binary) or d x K
    int num_classes = 2;

    int64_t embed_dim() const { return encoder.output_width(); }

    void validate() const {
        encoder.validate();
        if (!head.is_matrix() || head.rows() != embed_dim())
            throw shape_error("task network: head dimension does not match encoder output");
        if (num_classes == 2) {
            if (head.cols() != 1 && head.cols() != 2)
                throw shape_error("task network: binary head must be d x 1");
        } else if (head.cols() != num_classes) {
            throw shape_error("task network: K-way head must be d x K");
        }
    }
};

inline Tensor encoder_embeddings(const TaskNetwork& net, const Tensor& features) {
    return mlp_apply(net.encoder_params, net.encoder, features);
}

// Soft labels as class-probability rows: sigma(h . head) for binary,
// row softmax of h . head for K-way. Binary returns two columns [1-p, p].
inline Tensor materialize_soft(const TaskNetwork& net, const Dataset& ds) {
    net.validate();
    if (net.encoder.input_width() != ds.dim())
        throw shape_error("materialize: encoder input width does not match dataset");
    const Tensor h = encoder_embeddings(net, ds.features);
    GraphT<float> g;
    auto hv = g.constant(h);
    auto head = g.constant(net.head);
    auto logits = matmul(hv, head);
    if (net.num_classes == 2 && net.head.cols() == 1) {
        auto p = sigmoid(logits);
        return concat_cols(add_scalar(neg(p), 1.0f), p).tensor();
    }
    return softmax_rows(logits).tensor();
}

// Hard labels: probability > 0.5 (binary, ties to class 0) or row argmax.
inline Task materialize_hard(const TaskNetwork& net, const Dataset& ds,
                             TaskOrigin origin = TaskOrigin::discovered) {
    net.validate();
    if (net.encoder.input_width() != ds.dim())
        throw shape_error("materialize: encoder input width does not match dataset");
    const Tensor h = encoder_embeddings(net, ds.features);
    std::vector<int> labels(static_cast<size_t>(ds.n()));
    if (net.num_classes == 2 && net.head.cols() == 1) {
        for (int64_t i = 0; i < ds.n(); ++i) {
            double logit = 0.0;
            for (int64_t k = 0; k < h.cols(); ++k) logit += static_cast<double>(h.at(i, k)) * net.head.at(k, 0);
            labels[static_cast<size_t>(i)] = logit > 0.0 ? 1 : 0;
        }
    } else {
        GraphT<float> g;
        const Tensor logits = matmul(g.constant(h), g.constant(net.head)).tensor();
        labels = argmax_rows(logits);
    }
    return Task(ds.ids, std::move(labels), origin, net.num_classes);
}

// ---- JSON serialization: {ids, labels, origin, K} ----

inline nlohmann::ordered_json task_to_json(const Task& t) {
    nlohmann::ordered_json j;
    j["ids"] = t.ids();
    j["labels"] = t.labels();
    j["origin"] = origin_name(t.origin());
    j["K"] = t.num_classes();
    return j;
}

inline Task task_from_json(const nlohmann::json& j) {
    if (!j.contains("ids") || !j.contains("labels") || !j.contains("origin") || !j.contains("K"))
        throw parse_error("task json: missing a required key");
    return Task(j["ids"].get<std::vector<int64_t>>(), j["labels"].get<std::vector<int>>(),
                origin_from_name(j["origin"].get<std::string>()), j["K"].get<int>());
}

}  // namespace taskdisc
