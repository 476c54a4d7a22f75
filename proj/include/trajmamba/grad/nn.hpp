#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "trajmamba/grad/ops.hpp"

namespace trajmamba {

using Rng = std::mt19937_64;

/// Ordered registry of named trainable tensors plus non-trainable buffers
/// (running statistics, fixed normalizers) that still belong in checkpoints.
template <typename T>
struct ParameterSet {
    std::vector<std::pair<std::string, Tensor<T>>> params;
    std::vector<std::pair<std::string, std::vector<T>*>> buffers;

    void add(std::string name, Tensor<T> t) { params.emplace_back(std::move(name), std::move(t)); }
    void add_buffer(std::string name, std::vector<T>* buf) { buffers.emplace_back(std::move(name), buf); }

    void append(const ParameterSet& other) {
        params.insert(params.end(), other.params.begin(), other.params.end());
        buffers.insert(buffers.end(), other.buffers.begin(), other.buffers.end());
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [_, t] : params) n += t.numel();
        return n;
    }

    void set_requires_grad(bool on) {
        for (auto& [_, t] : params) t.set_requires_grad(on);
    }

    void zero_grad() {
        for (auto& [_, t] : params) t.zero_grad();
    }

    void clear_grad() {
        for (auto& [_, t] : params) t.clear_grad();
    }
};

template <typename T>
Tensor<T> uniform_tensor(Shape shape, T lo, T hi, Rng& rng, bool requires_grad = true) {
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    std::vector<T> data(numel_of(shape));
    for (auto& v : data) v = static_cast<T>(dist(rng));
    return Tensor<T>::from(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
Tensor<T> normal_tensor(Shape shape, T stddev, Rng& rng, bool requires_grad = true) {
    std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
    std::vector<T> data(numel_of(shape));
    for (auto& v : data) v = static_cast<T>(dist(rng));
    return Tensor<T>::from(std::move(shape), std::move(data), requires_grad);
}

/// Affine map x @ W + b over the last axis of a [n x in] matrix.
template <typename T>
struct Linear {
    Tensor<T> weight;  // [in x out]
    Tensor<T> bias;    // [out], undefined when bias-free

    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true) {
        const T bound = T(1) / std::sqrt(static_cast<T>(in));
        weight = uniform_tensor<T>({in, out}, -bound, bound, rng);
        if (with_bias) bias = uniform_tensor<T>({out}, -bound, bound, rng);
    }

    std::size_t in_dim() const { return weight.dim(0); }
    std::size_t out_dim() const { return weight.dim(1); }

    Tensor<T> operator()(const Tensor<T>& x) const {
        if (x.rank() != 2 || x.dim(1) != in_dim()) {
            throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                             shape_str(weight.shape()));
        }
        auto y = matmul(x, weight);
        return bias.defined() ? add(y, bias) : y;
    }

    void collect(ParameterSet<T>& ps, const std::string& prefix) const {
        ps.add(prefix + ".weight", weight);
        if (bias.defined()) ps.add(prefix + ".bias", bias);
    }
};

/// Index-fetching embedding table.
template <typename T>
struct Embedding {
    Tensor<T> table;  // [rows x dim]

    Embedding() = default;
    Embedding(std::size_t rows, std::size_t dim, Rng& rng, T stddev = T(1))
        : table(normal_tensor<T>({rows, dim}, stddev, rng)) {}

    std::size_t rows() const { return table.dim(0); }
    std::size_t dim() const { return table.dim(1); }

    Tensor<T> operator()(std::vector<std::size_t> ids) const { return index_rows(table, std::move(ids)); }

    void collect(ParameterSet<T>& ps, const std::string& prefix) const { ps.add(prefix + ".table", table); }
};

/// Deep copy of parameter values (fresh leaves, same requires_grad flags).
template <typename T>
Tensor<T> clone_leaf(const Tensor<T>& t) {
    return Tensor<T>::from(t.shape(), std::vector<T>(t.data().begin(), t.data().end()), t.requires_grad());
}

template <typename T>
Linear<T> clone(const Linear<T>& l) {
    Linear<T> c;
    c.weight = clone_leaf(l.weight);
    if (l.bias.defined()) c.bias = clone_leaf(l.bias);
    return c;
}

template <typename T>
Embedding<T> clone(const Embedding<T>& e) {
    Embedding<T> c;
    c.table = clone_leaf(e.table);
    return c;
}

}  // namespace trajmamba
