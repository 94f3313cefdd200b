#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "taskdisc/common.hpp"

namespace taskdisc {

// Dense row-major tensor. Production scalar type is float (32-bit storage
// everywhere, including on disk); the template parameter exists so gradient
// checks can instantiate the identical code path at double precision.
template <typename T>
struct TensorT {
    std::vector<int64_t> shape;
    std::vector<T> data;

    TensorT() = default;
    TensorT(std::vector<int64_t> shape_, std::vector<T> data_)
        : shape(std::move(shape_)), data(std::move(data_)) {
        if (numel() != static_cast<int64_t>(data.size()))
            throw shape_error("tensor: data length does not match shape");
    }

    static TensorT zeros(std::vector<int64_t> shape_) {
        int64_t n = 1;
        for (const int64_t d : shape_) n *= d;
        return TensorT(std::move(shape_), std::vector<T>(static_cast<size_t>(n), T(0)));
    }

    static TensorT full(std::vector<int64_t> shape_, T v) {
        int64_t n = 1;
        for (const int64_t d : shape_) n *= d;
        return TensorT(std::move(shape_), std::vector<T>(static_cast<size_t>(n), v));
    }

    static TensorT scalar(T v) { return TensorT({1, 1}, {v}); }

    int64_t numel() const {
        int64_t n = 1;
        for (const int64_t d : shape) n *= d;
        return n;
    }

    bool is_matrix() const { return shape.size() == 2; }
    int64_t rows() const { return shape.at(0); }
    int64_t cols() const { return shape.at(1); }

    T& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols() + j)]; }
    const T& at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols() + j)]; }

    T item() const {
        if (numel() != 1) throw contract_error("tensor: item() on non-scalar");
        return data[0];
    }

    bool all_finite() const {
        for (const T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

using Tensor = TensorT<float>;

template <typename T, typename U>
TensorT<T> tensor_cast(const TensorT<U>& src) {
    TensorT<T> out;
    out.shape = src.shape;
    out.data.reserve(src.data.size());
    for (const U v : src.data) out.data.push_back(static_cast<T>(v));
    return out;
}

}  // namespace taskdisc
