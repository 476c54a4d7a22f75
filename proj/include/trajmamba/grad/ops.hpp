#pragma once

// Differentiable primitives. Binary elementwise operations broadcast
// numpy-style (shapes aligned from the right, size-1 or missing dimensions
// stretch). Axis-wise operations take an explicit axis; "last axis" variants
// operate on rows of the tensor viewed as [outer x d].

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "trajmamba/grad/tensor.hpp"

namespace trajmamba {

namespace detail {

inline ShapeError shape_mismatch(const char* op, const Shape& a, const Shape& b) {
    return ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                      shape_str(b));
}

struct BroadcastPlan {
    Shape out;
    std::vector<std::size_t> a_off;  // empty when a maps 1:1 onto out
    std::vector<std::size_t> b_off;
};

inline std::vector<std::size_t> broadcast_offsets(const Shape& in, const Shape& out) {
    const std::size_t r = out.size();
    std::vector<std::size_t> stride(r, 0);
    std::size_t s = 1;
    for (std::size_t k = 0; k < in.size(); ++k) {
        std::size_t axis = r - 1 - k;
        std::size_t d = in[in.size() - 1 - k];
        stride[axis] = d == 1 ? 0 : s;
        s *= d;
    }
    const std::size_t n = numel_of(out);
    std::vector<std::size_t> offsets(n);
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) {
        offsets[i] = off;
        for (std::size_t axis = r; axis-- > 0;) {
            ++idx[axis];
            off += stride[axis];
            if (idx[axis] < out[axis]) break;
            off -= stride[axis] * idx[axis];
            idx[axis] = 0;
        }
    }
    return offsets;
}

inline BroadcastPlan plan_broadcast(const char* op, const Shape& a, const Shape& b) {
    BroadcastPlan plan;
    const std::size_t r = std::max(a.size(), b.size());
    plan.out.assign(r, 1);
    for (std::size_t k = 0; k < r; ++k) {
        std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
        std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
        if (da != db && da != 1 && db != 1) throw shape_mismatch(op, a, b);
        plan.out[r - 1 - k] = std::max(da, db);
    }
    if (numel_of(a) != numel_of(plan.out)) plan.a_off = broadcast_offsets(a, plan.out);
    if (numel_of(b) != numel_of(plan.out)) plan.b_off = broadcast_offsets(b, plan.out);
    return plan;
}

/// Splits a shape around `axis` into outer * len * inner.
struct AxisSplit {
    std::size_t outer = 1, len = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
    AxisSplit r;
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    r.len = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

template <typename T, typename F, typename DF>
Tensor<T> unary(const char* op, const Tensor<T>& x, F f, DF df) {
    const auto xd = x.data();
    std::vector<T> out(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
    return make_result<T>(op, x.shape(), std::move(out), {x}, [df](Node<T>& self) {
        auto gx = parent_grad(self, 0);
        if (gx.empty()) return;
        const auto& xv = self.parents[0]->data;
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += self.grad[i] * df(xv[i], self.data[i]);
        }
    });
}

// Forward f(a, b); backward partials da(a, b, y), db(a, b, y).
template <typename T, typename F, typename DA, typename DB>
Tensor<T> binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, F f, DA da, DB db) {
    auto plan = plan_broadcast(op, a.shape(), b.shape());
    const std::size_t n = numel_of(plan.out);
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<T> out(n);
    const bool ai = plan.a_off.empty(), bi = plan.b_off.empty();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = f(ad[ai ? i : plan.a_off[i]], bd[bi ? i : plan.b_off[i]]);
    }
    auto a_off = std::move(plan.a_off);
    auto b_off = std::move(plan.b_off);
    return make_result<T>(
        op, plan.out, std::move(out), {a, b},
        [a_off = std::move(a_off), b_off = std::move(b_off), da, db](Node<T>& self) {
            auto ga = parent_grad(self, 0);
            auto gb = parent_grad(self, 1);
            const auto& av = self.parents[0]->data;
            const auto& bv = self.parents[1]->data;
            const bool ai = a_off.empty(), bi = b_off.empty();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                std::size_t ia = ai ? i : a_off[i];
                std::size_t ib = bi ? i : b_off[i];
                T g = self.grad[i];
                if (!ga.empty()) ga[ia] += g * da(av[ia], bv[ib], self.data[i]);
                if (!gb.empty()) gb[ib] += g * db(av[ia], bv[ib], self.data[i]);
            }
        });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary<T>(
        "add", a, b, [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); },
        [](T, T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary<T>(
        "sub", a, b, [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); },
        [](T, T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary<T>(
        "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y, T) { return y; },
        [](T x, T, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary<T>(
        "div", a, b, [](T x, T y) { return x / y; }, [](T, T y, T) { return T(1) / y; },
        [](T x, T y, T) { return -x / (y * y); });
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
    return detail::unary<T>("scale", x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
    return detail::unary<T>("add_scalar", x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) { return scale(x, T(-1)); }

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
    return detail::unary<T>("exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
    return detail::unary<T>("log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
    return detail::unary<T>(
        "sqrt", x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

/// x^p elementwise; x must be positive unless p is an integer.
template <typename T>
Tensor<T> pow(const Tensor<T>& x, T p) {
    return detail::unary<T>(
        "pow", x, [p](T v) { return std::pow(v, p); },
        [p](T v, T) { return p * std::pow(v, p - T(1)); });
}

/// Gradient passes only strictly inside (lo, hi).
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
    return detail::unary<T>(
        "clamp", x, [lo, hi](T v) { return std::min(hi, std::max(lo, v)); },
        [lo, hi](T v, T) { return (v > lo && v < hi) ? T(1) : T(0); });
}

template <typename T>
T sigmoid_value(T v) {
    if (v >= T(0)) {
        T e = std::exp(-v);
        return T(1) / (T(1) + e);
    }
    T e = std::exp(v);
    return e / (T(1) + e);
}

template <typename T>
T softplus_value(T v) {
    if (v > T(20)) return v;
    return std::log1p(std::exp(v));
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return detail::unary<T>(
        "sigmoid", x, [](T v) { return sigmoid_value(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    return detail::unary<T>(
        "tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return detail::unary<T>(
        "relu", x, [](T v) { return v > T(0) ? v : T(0); },
        [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
    return detail::unary<T>(
        "silu", x, [](T v) { return v * sigmoid_value(v); },
        [](T v, T) {
            T s = sigmoid_value(v);
            return s * (T(1) + v * (T(1) - s));
        });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
    return detail::unary<T>(
        "softplus", x, [](T v) { return softplus_value(v); },
        [](T v, T) { return sigmoid_value(v); });
}

template <typename T>
Tensor<T> erf(const Tensor<T>& x) {
    return detail::unary<T>(
        "erf", x, [](T v) { return std::erf(v); },
        [](T v, T) { return T(2) / std::sqrt(std::numbers::pi_v<T>) * std::exp(-v * v); });
}

template <typename T>
Tensor<T> sin(const Tensor<T>& x) {
    return detail::unary<T>(
        "sin", x, [](T v) { return std::sin(v); }, [](T v, T) { return std::cos(v); });
}

template <typename T>
Tensor<T> cos(const Tensor<T>& x) {
    return detail::unary<T>(
        "cos", x, [](T v) { return std::cos(v); }, [](T v, T) { return -std::sin(v); });
}

// ---------------------------------------------------------------------------
// Linear algebra and layout

/// [m x k] @ [k x n] -> [m x n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw detail::shape_mismatch("matmul", a.shape(), b.shape());
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<T> out(m * n, T(0));
    for (std::size_t i = 0; i < m; ++i) {
        T* orow = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = ad[i * k + p];
            const T* brow = bd.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return detail::make_result<T>("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& self) {
        auto ga = detail::parent_grad(self, 0);
        auto gb = detail::parent_grad(self, 1);
        const auto& av = self.parents[0]->data;
        const auto& bv = self.parents[1]->data;
        const auto& g = self.grad;
        if (!ga.empty()) {
            // ga += g @ b^T, accumulated row-wise over b^T so the inner loop
            // is an axpy rather than a strict-order reduction.
            std::vector<T> bt(k * n);
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = bv[p * n + j];
            for (std::size_t i = 0; i < m; ++i) {
                T* garow = ga.data() + i * k;
                const T* grow = g.data() + i * n;
                for (std::size_t j = 0; j < n; ++j) {
                    const T gij = grow[j];
                    const T* btrow = bt.data() + j * k;
                    for (std::size_t p = 0; p < k; ++p) garow[p] += gij * btrow[p];
                }
            }
        }
        if (!gb.empty()) {
            for (std::size_t i = 0; i < m; ++i) {
                const T* grow = g.data() + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const T av_ip = av[i * k + p];
                    T* gbrow = gb.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += av_ip * grow[j];
                }
            }
        }
    });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
    if (x.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(x.shape()));
    const std::size_t r = x.dim(0), c = x.dim(1);
    const auto xd = x.data();
    std::vector<T> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xd[i * c + j];
    return detail::make_result<T>("transpose", {c, r}, std::move(out), {x}, [r, c](Node<T>& self) {
        auto gx = detail::parent_grad(self, 0);
        if (gx.empty()) return;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += self.grad[j * r + i];
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel_of(shape) != x.numel()) {
        throw detail::shape_mismatch("reshape", x.shape(), shape);
    }
    std::vector<T> out(x.data().begin(), x.data().end());
    return detail::make_result<T>("reshape", std::move(shape), std::move(out), {x}, [](Node<T>& self) {
        auto gx = detail::parent_grad(self, 0);
        if (gx.empty()) return;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    Shape out_shape = parts[0].shape();
    if (axis >= out_shape.size()) throw ShapeError("concat: axis out of range for " + shape_str(out_shape));
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        bool ok = s.size() == out_shape.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) {
            if (i != axis && s[i] != parts[0].shape()[i]) ok = false;
        }
        if (!ok) throw detail::shape_mismatch("concat", parts[0].shape(), s);
        out_shape[axis] += s[axis];
    }
    auto split = detail::split_axis(out_shape, axis);
    std::vector<T> out(numel_of(out_shape));
    std::vector<std::size_t> lens;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t len = p.dim(axis);
        const auto pd = p.data();
        for (std::size_t o = 0; o < split.outer; ++o) {
            std::copy_n(pd.data() + o * len * split.inner, len * split.inner,
                        out.data() + (o * split.len + offset) * split.inner);
        }
        lens.push_back(len);
        offset += len;
    }
    return detail::make_result<T>("concat", out_shape, std::move(out), parts,
                                  [split, lens](Node<T>& self) {
                                      std::size_t offset = 0;
                                      for (std::size_t k = 0; k < lens.size(); ++k) {
                                          auto gp = detail::parent_grad(self, k);
                                          const std::size_t len = lens[k];
                                          if (!gp.empty()) {
                                              for (std::size_t o = 0; o < split.outer; ++o) {
                                                  const T* src = self.grad.data() +
                                                                 (o * split.len + offset) * split.inner;
                                                  T* dst = gp.data() + o * len * split.inner;
                                                  for (std::size_t i = 0; i < len * split.inner; ++i)
                                                      dst[i] += src[i];
                                              }
                                          }
                                          offset += len;
                                      }
                                  });
}

/// Elements [start, start + len) along axis.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t len) {
    if (axis >= x.rank() || len == 0 || start + len > x.dim(axis)) {
        throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") on axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
    }
    auto split = detail::split_axis(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape[axis] = len;
    std::vector<T> out(numel_of(out_shape));
    const auto xd = x.data();
    for (std::size_t o = 0; o < split.outer; ++o) {
        std::copy_n(xd.data() + (o * split.len + start) * split.inner, len * split.inner,
                    out.data() + o * len * split.inner);
    }
    return detail::make_result<T>("slice", out_shape, std::move(out), {x},
                                  [split, start, len](Node<T>& self) {
                                      auto gx = detail::parent_grad(self, 0);
                                      if (gx.empty()) return;
                                      for (std::size_t o = 0; o < split.outer; ++o) {
                                          T* dst = gx.data() + (o * split.len + start) * split.inner;
                                          const T* src = self.grad.data() + o * len * split.inner;
                                          for (std::size_t i = 0; i < len * split.inner; ++i)
                                              dst[i] += src[i];
                                      }
                                  });
}

/// Rows of a [R x d] table selected by index -> [K x d].
template <typename T>
Tensor<T> index_rows(const Tensor<T>& table, std::vector<std::size_t> indices) {
    if (table.rank() != 2) throw ShapeError("index_rows: table must be rank 2, got " + shape_str(table.shape()));
    if (indices.empty()) throw ShapeError("index_rows: empty index list");
    const std::size_t rows = table.dim(0), d = table.dim(1);
    std::vector<T> out(indices.size() * d);
    const auto td = table.data();
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= rows) {
            throw ShapeError("index_rows: index " + std::to_string(indices[k]) + " out of range for " +
                             shape_str(table.shape()));
        }
        std::copy_n(td.data() + indices[k] * d, d, out.data() + k * d);
    }
    const std::size_t k = indices.size();
    return detail::make_result<T>("index_rows", {k, d}, std::move(out), {table},
                                  [indices = std::move(indices), d](Node<T>& self) {
                                      auto gt = detail::parent_grad(self, 0);
                                      if (gt.empty()) return;
                                      for (std::size_t r = 0; r < indices.size(); ++r) {
                                          T* dst = gt.data() + indices[r] * d;
                                          const T* src = self.grad.data() + r * d;
                                          for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                                      }
                                  });
}

/// Sums rows of [K x d] into `segments` buckets by segment id -> [segments x d].
template <typename T>
Tensor<T> segment_sum(const Tensor<T>& x, std::vector<std::size_t> segment_ids, std::size_t segments) {
    if (x.rank() != 2 || segment_ids.size() != x.dim(0)) {
        throw ShapeError("segment_sum: " + std::to_string(segment_ids.size()) + " ids for rows of " +
                         shape_str(x.shape()));
    }
    const std::size_t d = x.dim(1);
    std::vector<T> out(segments * d, T(0));
    const auto xd = x.data();
    for (std::size_t r = 0; r < segment_ids.size(); ++r) {
        if (segment_ids[r] >= segments) throw ShapeError("segment_sum: segment id out of range");
        for (std::size_t j = 0; j < d; ++j) out[segment_ids[r] * d + j] += xd[r * d + j];
    }
    return detail::make_result<T>("segment_sum", {segments, d}, std::move(out), {x},
                                  [ids = std::move(segment_ids), d](Node<T>& self) {
                                      auto gx = detail::parent_grad(self, 0);
                                      if (gx.empty()) return;
                                      for (std::size_t r = 0; r < ids.size(); ++r)
                                          for (std::size_t j = 0; j < d; ++j)
                                              gx[r * d + j] += self.grad[ids[r] * d + j];
                                  });
}

// ---------------------------------------------------------------------------
// Reductions

/// Sum over one axis; the axis is removed (kept as size 1 when keepdim).
template <typename T>
Tensor<T> sum(const Tensor<T>& x, std::size_t axis, bool keepdim = false) {
    if (axis >= x.rank()) throw ShapeError("sum: axis out of range for " + shape_str(x.shape()));
    auto split = detail::split_axis(x.shape(), axis);
    Shape out_shape = x.shape();
    if (keepdim || out_shape.size() == 1) {
        out_shape[axis] = 1;
    } else {
        out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    }
    std::vector<T> out(split.outer * split.inner, T(0));
    const auto xd = x.data();
    for (std::size_t o = 0; o < split.outer; ++o)
        for (std::size_t l = 0; l < split.len; ++l)
            for (std::size_t i = 0; i < split.inner; ++i)
                out[o * split.inner + i] += xd[(o * split.len + l) * split.inner + i];
    return detail::make_result<T>("sum", out_shape, std::move(out), {x}, [split](Node<T>& self) {
        auto gx = detail::parent_grad(self, 0);
        if (gx.empty()) return;
        for (std::size_t o = 0; o < split.outer; ++o)
            for (std::size_t l = 0; l < split.len; ++l)
                for (std::size_t i = 0; i < split.inner; ++i)
                    gx[(o * split.len + l) * split.inner + i] += self.grad[o * split.inner + i];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis, bool keepdim = false) {
    if (axis >= x.rank()) throw ShapeError("mean: axis out of range for " + shape_str(x.shape()));
    return scale(sum(x, axis, keepdim), T(1) / static_cast<T>(x.dim(axis)));
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    return sum(reshape(x, {x.numel()}), 0);
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    return scale(sum_all(x), T(1) / static_cast<T>(x.numel()));
}

/// Trace of a square matrix -> [1].
template <typename T>
Tensor<T> trace(const Tensor<T>& x) {
    if (x.rank() != 2 || x.dim(0) != x.dim(1)) throw ShapeError("trace: expected square matrix, got " + shape_str(x.shape()));
    const std::size_t d = x.dim(0);
    T acc = T(0);
    for (std::size_t i = 0; i < d; ++i) acc += x.data()[i * d + i];
    return detail::make_result<T>("trace", {1}, {acc}, {x}, [d](Node<T>& self) {
        auto gx = detail::parent_grad(self, 0);
        if (gx.empty()) return;
        for (std::size_t i = 0; i < d; ++i) gx[i * d + i] += self.grad[0];
    });
}

// ---------------------------------------------------------------------------
// Normalizations (last axis unless stated)

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.numel() / d;
    std::vector<T> out(x.numel());
    const auto xd = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = xd.data() + r * d;
        T* o = out.data() + r * d;
        T mx = *std::max_element(in, in + d);
        T s = T(0);
        for (std::size_t j = 0; j < d; ++j) s += (o[j] = std::exp(in[j] - mx));
        for (std::size_t j = 0; j < d; ++j) o[j] /= s;
    }
    return detail::make_result<T>("softmax", x.shape(), std::move(out), {x}, [rows, d](Node<T>& self) {
        auto gx = detail::parent_grad(self, 0);
        if (gx.empty()) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* y = self.data.data() + r * d;
            const T* g = self.grad.data() + r * d;
            T dot = T(0);
            for (std::size_t j = 0; j < d; ++j) dot += g[j] * y[j];
            for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += y[j] * (g[j] - dot);
        }
    });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.numel() / d;
    std::vector<T> out(x.numel());
    const auto xd = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = xd.data() + r * d;
        T mx = *std::max_element(in, in + d);
        T s = T(0);
        for (std::size_t j = 0; j < d; ++j) s += std::exp(in[j] - mx);
        const T lse = mx + std::log(s);
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = in[j] - lse;
    }
    return detail::make_result<T>("log_softmax", x.shape(), std::move(out), {x}, [rows, d](Node<T>& self) {
        auto gx = detail::parent_grad(self, 0);
        if (gx.empty()) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* y = self.data.data() + r * d;
            const T* g = self.grad.data() + r * d;
            T gs = T(0);
            for (std::size_t j = 0; j < d; ++j) gs += g[j];
            for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[j] - std::exp(y[j]) * gs;
        }
    });
}

/// x / sum|x| along the last axis; an all-zero vector maps to zeros.
template <typename T>
Tensor<T> l1_normalize(const Tensor<T>& x) {
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.numel() / d;
    std::vector<T> out(x.numel(), T(0));
    std::vector<T> norms(rows, T(0));
    const auto xd = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        T s = T(0);
        for (std::size_t j = 0; j < d; ++j) s += std::abs(xd[r * d + j]);
        norms[r] = s;
        if (s > T(0))
            for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xd[r * d + j] / s;
    }
    return detail::make_result<T>("l1_normalize", x.shape(), std::move(out), {x},
                                  [rows, d, norms = std::move(norms)](Node<T>& self) {
                                      auto gx = detail::parent_grad(self, 0);
                                      if (gx.empty()) return;
                                      const auto& xv = self.parents[0]->data;
                                      for (std::size_t r = 0; r < rows; ++r) {
                                          const T s = norms[r];
                                          if (s == T(0)) continue;
                                          T dot = T(0);
                                          for (std::size_t j = 0; j < d; ++j)
                                              dot += self.grad[r * d + j] * xv[r * d + j];
                                          for (std::size_t j = 0; j < d; ++j) {
                                              T xj = xv[r * d + j];
                                              T sign = xj > T(0) ? T(1) : (xj < T(0) ? T(-1) : T(0));
                                              gx[r * d + j] += self.grad[r * d + j] / s - sign * dot / (s * s);
                                          }
                                      }
                                  });
}

/// y = x / sqrt(mean(x^2) + eps) * weight, normalized over the last axis.
template <typename T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& weight, T eps) {
    const std::size_t d = x.shape().back();
    if (weight.numel() != d) throw detail::shape_mismatch("rms_norm", x.shape(), weight.shape());
    const std::size_t rows = x.numel() / d;
    std::vector<T> out(x.numel());
    std::vector<T> inv(rows);
    const auto xd = x.data();
    const auto wd = weight.data();
    for (std::size_t r = 0; r < rows; ++r) {
        T ms = T(0);
        for (std::size_t j = 0; j < d; ++j) ms += xd[r * d + j] * xd[r * d + j];
        ms /= static_cast<T>(d);
        inv[r] = T(1) / std::sqrt(ms + eps);
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xd[r * d + j] * inv[r] * wd[j];
    }
    return detail::make_result<T>(
        "rms_norm", x.shape(), std::move(out), {x, weight}, [rows, d, inv = std::move(inv)](Node<T>& self) {
            auto gx = detail::parent_grad(self, 0);
            auto gw = detail::parent_grad(self, 1);
            const auto& xv = self.parents[0]->data;
            const auto& wv = self.parents[1]->data;
            for (std::size_t r = 0; r < rows; ++r) {
                const T* g = self.grad.data() + r * d;
                const T* xr = xv.data() + r * d;
                const T ri = inv[r];
                if (!gw.empty())
                    for (std::size_t j = 0; j < d; ++j) gw[j] += g[j] * xr[j] * ri;
                if (!gx.empty()) {
                    T dot = T(0);
                    for (std::size_t j = 0; j < d; ++j) dot += g[j] * wv[j] * xr[j];
                    const T coef = ri * ri * ri * dot / static_cast<T>(d);
                    for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += ri * g[j] * wv[j] - coef * xr[j];
                }
            }
        });
}

/// Running statistics for batch_norm.
template <typename T>
struct BatchNormState {
    std::vector<T> running_mean;
    std::vector<T> running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);

    explicit BatchNormState(std::size_t d = 0) : running_mean(d, T(0)), running_var(d, T(1)) {}
};

/// Batch normalization over the rows of [n x d]. Training mode normalizes by
/// the batch statistics and updates the running estimates; eval mode uses the
/// running estimates.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, bool training) {
    if (x.rank() != 2 || gamma.numel() != x.dim(1) || beta.numel() != x.dim(1) ||
        state.running_mean.size() != x.dim(1)) {
        throw detail::shape_mismatch("batch_norm", x.shape(), gamma.shape());
    }
    const std::size_t n = x.dim(0), d = x.dim(1);
    const auto xd = x.data();
    const auto gd = gamma.data();
    const auto bd = beta.data();
    std::vector<T> mu(d, T(0)), inv_std(d);
    if (training) {
        std::vector<T> var(d, T(0));
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) mu[j] += xd[r * d + j];
        for (auto& m : mu) m /= static_cast<T>(n);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) {
                T c = xd[r * d + j] - mu[j];
                var[j] += c * c;
            }
        for (std::size_t j = 0; j < d; ++j) {
            T biased = var[j] / static_cast<T>(n);
            T unbiased = n > 1 ? var[j] / static_cast<T>(n - 1) : biased;
            inv_std[j] = T(1) / std::sqrt(biased + state.eps);
            state.running_mean[j] = (T(1) - state.momentum) * state.running_mean[j] + state.momentum * mu[j];
            state.running_var[j] = (T(1) - state.momentum) * state.running_var[j] + state.momentum * unbiased;
        }
    } else {
        for (std::size_t j = 0; j < d; ++j) {
            mu[j] = state.running_mean[j];
            inv_std[j] = T(1) / std::sqrt(state.running_var[j] + state.eps);
        }
    }
    std::vector<T> xhat(n * d), out(n * d);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (xd[r * d + j] - mu[j]) * inv_std[j];
            out[r * d + j] = gd[j] * xhat[r * d + j] + bd[j];
        }
    return detail::make_result<T>(
        "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
        [n, d, training, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
            auto gx = detail::parent_grad(self, 0);
            auto gg = detail::parent_grad(self, 1);
            auto gb = detail::parent_grad(self, 2);
            const auto& gam = self.parents[1]->data;
            const auto& g = self.grad;
            std::vector<T> sum_g(d, T(0)), sum_gx(d, T(0));
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d; ++j) {
                    sum_g[j] += g[r * d + j];
                    sum_gx[j] += g[r * d + j] * xhat[r * d + j];
                }
            if (!gg.empty())
                for (std::size_t j = 0; j < d; ++j) gg[j] += sum_gx[j];
            if (!gb.empty())
                for (std::size_t j = 0; j < d; ++j) gb[j] += sum_g[j];
            if (gx.empty()) return;
            const T nn = static_cast<T>(n);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d; ++j) {
                    const T gxh = g[r * d + j] * gam[j];
                    if (training) {
                        gx[r * d + j] += inv_std[j] / nn *
                                         (nn * gxh - gam[j] * sum_g[j] - xhat[r * d + j] * gam[j] * sum_gx[j]);
                    } else {
                        gx[r * d + j] += gxh * inv_std[j];
                    }
                }
        });
}

/// Cumulative product along axis 0.
template <typename T>
Tensor<T> cumprod(const Tensor<T>& x) {
    const std::size_t n = x.dim(0);
    const std::size_t inner = x.numel() / n;
    const auto xd = x.data();
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < inner; ++i) {
        T p = T(1);
        for (std::size_t t = 0; t < n; ++t) out[t * inner + i] = (p *= xd[t * inner + i]);
    }
    return detail::make_result<T>("cumprod", x.shape(), std::move(out), {x}, [n, inner](Node<T>& self) {
        auto gx = detail::parent_grad(self, 0);
        if (gx.empty()) return;
        const auto& xv = self.parents[0]->data;
        // acc_s = sum_{t>=s} g_t * prod_{s<u<=t} x_u, dx_s = y_{s-1} * acc_s
        for (std::size_t i = 0; i < inner; ++i) {
            T acc = T(0);
            for (std::size_t s = n; s-- > 0;) {
                acc = self.grad[s * inner + i] + (s + 1 < n ? xv[(s + 1) * inner + i] * acc : T(0));
                T prefix = s > 0 ? self.data[(s - 1) * inner + i] : T(1);
                gx[s * inner + i] += prefix * acc;
            }
        }
    });
}

/// Rows of [n x d] scaled to unit L2 norm. A zero row raises NumericError.
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x) {
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.numel() / d;
    for (std::size_t r = 0; r < rows; ++r) {
        T s = T(0);
        for (std::size_t j = 0; j < d; ++j) s += x.data()[r * d + j] * x.data()[r * d + j];
        if (s == T(0)) throw NumericError("l2_normalize_rows: row " + std::to_string(r) + " has zero norm");
    }
    auto norms = sqrt(sum(mul(x, x), x.rank() - 1, true));
    return div(x, norms);
}

}  // namespace trajmamba
