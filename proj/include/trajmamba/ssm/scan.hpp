#pragma once

// Multi-head selective scan with zero-order-hold discretization and a scalar
// A per head. Heads split the E channels into H groups of D = E/H; every
// channel of a head is an independent sequence sharing the head's decay and
// the (head-shared) B and C rows.
//
//   a_t = exp(dt_t * A),  c_t = expm1(dt_t * A) / A
//   h_t[d,k] = a_t * h_{t-1}[d,k] + (c_t * B_t[k]) * x_t[d]
//   y_t[d]   = sum_k C_t[k] * h_t[d,k]

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "trajmamba/grad/ops.hpp"

namespace trajmamba {

enum class ScanMode { sequential, chunked };

inline ScanMode parse_scan_mode(const std::string& s) {
    if (s == "sequential") return ScanMode::sequential;
    if (s == "chunked") return ScanMode::chunked;
    throw UsageError("unknown scan mode '" + s + "' (expected sequential or chunked)");
}

inline const char* scan_mode_name(ScanMode m) { return m == ScanMode::sequential ? "sequential" : "chunked"; }

/// Discretized decay and input coefficient for scalar A < 0 per head and
/// step sizes delta [n x H] > 0. Returns (a_bar, coef), both [n x H].
template <typename T>
std::pair<std::vector<T>, std::vector<T>> zoh_discretize(std::span<const T> A, std::span<const T> delta,
                                                         std::size_t n) {
    const std::size_t h = A.size();
    if (delta.size() != n * h) throw ShapeError("zoh_discretize: delta must be [n x H]");
    std::vector<T> a(n * h), c(n * h);
    for (std::size_t j = 0; j < h; ++j)
        if (!(A[j] < T(0))) throw NumericError("zoh_discretize: A must be strictly negative");
    for (std::size_t i = 0; i < n * h; ++i) {
        const T dt = delta[i];
        if (!(dt > T(0))) throw NumericError("zoh_discretize: step size must be positive");
        const T Aj = A[i % h];
        a[i] = std::exp(dt * Aj);
        c[i] = std::expm1(dt * Aj) / Aj;
    }
    return {std::move(a), std::move(c)};
}

namespace scan_detail {

struct Dims {
    std::size_t n, e, N, H, D;
};

template <typename T>
Dims check_shapes(const Tensor<T>& x, const Tensor<T>& A, const Tensor<T>& B, const Tensor<T>& C,
                  const Tensor<T>& delta) {
    if (x.rank() != 2 || B.rank() != 2 || C.rank() != 2 || delta.rank() != 2 || A.rank() != 1)
        throw ShapeError("selective_scan: expected x[n,E], A[H], B[n,N], C[n,N], delta[n,H]");
    const std::size_t n = x.dim(0), e = x.dim(1), H = A.dim(0), N = B.dim(1);
    if (n == 0) throw ShapeError("selective_scan: empty sequence");
    if (H == 0 || e % H != 0) throw ShapeError("selective_scan: E=" + std::to_string(e) + " not divisible by H=" + std::to_string(H));
    if (B.dim(0) != n || C.dim(0) != n || C.dim(1) != N || delta.dim(0) != n || delta.dim(1) != H)
        throw ShapeError("selective_scan: inconsistent shapes x" + shape_str(x.shape()) + " B" + shape_str(B.shape()) +
                         " C" + shape_str(C.shape()) + " delta" + shape_str(delta.shape()));
    return {n, e, N, H, e / H};
}

/// Runs the recurrence over rows [t0, t1) from state h (layout [E x N]),
/// writing y and optionally every post-step state.
template <typename T>
void scan_range(const Dims& s, std::size_t t0, std::size_t t1, const T* x, const T* B, const T* C, const T* a,
                const T* c, T* h, T* y, T* states) {
    for (std::size_t t = t0; t < t1; ++t) {
        const T* Bt = B + t * s.N;
        const T* Ct = C + t * s.N;
        for (std::size_t hd = 0; hd < s.H; ++hd) {
            const T at = a[t * s.H + hd];
            const T ct = c[t * s.H + hd];
            for (std::size_t d = 0; d < s.D; ++d) {
                const std::size_t ch = hd * s.D + d;
                const T xv = x[t * s.e + ch];
                T* hr = h + ch * s.N;
                T acc = T(0);
                for (std::size_t k = 0; k < s.N; ++k) {
                    hr[k] = at * hr[k] + (ct * Bt[k]) * xv;
                    acc += Ct[k] * hr[k];
                }
                y[t * s.e + ch] = acc;
            }
        }
        if (states) std::copy(h, h + s.e * s.N, states + t * s.e * s.N);
    }
}

/// Blockwise evaluation: each chunk is scanned from a zero state, then the
/// carried state enters through the chunk's cumulative decay.
template <typename T>
void scan_chunked(const Dims& s, std::size_t chunk, const T* x, const T* B, const T* C, const T* a, const T* c,
                  T* y) {
    std::vector<T> carry(s.e * s.N, T(0)), local(s.e * s.N), decay(s.H);
    for (std::size_t t0 = 0; t0 < s.n; t0 += chunk) {
        const std::size_t t1 = std::min(s.n, t0 + chunk);
        std::fill(local.begin(), local.end(), T(0));
        scan_range(s, t0, t1, x, B, C, a, c, local.data(), y, static_cast<T*>(nullptr));
        // Contribution of the carried state: y_t += P_t * (C_t . carry), P_t = prod a.
        std::fill(decay.begin(), decay.end(), T(1));
        for (std::size_t t = t0; t < t1; ++t) {
            const T* Ct = C + t * s.N;
            for (std::size_t hd = 0; hd < s.H; ++hd) {
                decay[hd] *= a[t * s.H + hd];
                for (std::size_t d = 0; d < s.D; ++d) {
                    const std::size_t ch = hd * s.D + d;
                    const T* cr = carry.data() + ch * s.N;
                    T acc = T(0);
                    for (std::size_t k = 0; k < s.N; ++k) acc += Ct[k] * cr[k];
                    y[t * s.e + ch] += decay[hd] * acc;
                }
            }
        }
        for (std::size_t hd = 0; hd < s.H; ++hd)
            for (std::size_t d = 0; d < s.D; ++d) {
                const std::size_t ch = hd * s.D + d;
                for (std::size_t k = 0; k < s.N; ++k) {
                    auto& v = carry[ch * s.N + k];
                    v = decay[hd] * v + local[ch * s.N + k];
                }
            }
    }
}

}  // namespace scan_detail

/// Fused selective scan. A holds the (negative) per-head continuous decay;
/// delta holds positive step sizes. Gradients flow to x, A, B, C and delta.
/// Both modes share one backward pass over stored states.
template <typename T>
Tensor<T> selective_scan(const Tensor<T>& x, const Tensor<T>& A, const Tensor<T>& B, const Tensor<T>& C,
                         const Tensor<T>& delta, ScanMode mode = ScanMode::sequential, std::size_t chunk = 64) {
    const auto s = scan_detail::check_shapes(x, A, B, C, delta);
    if (chunk == 0) throw UsageError("selective_scan: chunk size must be positive");
    auto [a, c] = zoh_discretize<T>(A.data(), delta.data(), s.n);
    std::vector<T> y(s.n * s.e);
    const bool track = grad_enabled() &&
                       (x.requires_grad() || A.requires_grad() || B.requires_grad() || C.requires_grad() ||
                        delta.requires_grad());
    std::vector<T> states;
    if (track) states.resize(s.n * s.e * s.N);
    if (mode == ScanMode::sequential || track) {
        // Training always runs the sequential pass, which also records states.
        std::vector<T> h(s.e * s.N, T(0));
        scan_detail::scan_range(s, 0, s.n, x.data().data(), B.data().data(), C.data().data(), a.data(), c.data(),
                                h.data(), y.data(), track ? states.data() : nullptr);
    }
    if (mode == ScanMode::chunked && !track) {
        scan_detail::scan_chunked(s, chunk, x.data().data(), B.data().data(), C.data().data(), a.data(), c.data(),
                                  y.data());
    }
    return detail::make_result<T>(
        "selective_scan", {s.n, s.e}, std::move(y), {x, A, B, C, delta},
        [s, a = std::move(a), c = std::move(c), states = std::move(states)](Node<T>& self) {
            auto gx = detail::parent_grad(self, 0);
            auto gA = detail::parent_grad(self, 1);
            auto gB = detail::parent_grad(self, 2);
            auto gC = detail::parent_grad(self, 3);
            auto gD = detail::parent_grad(self, 4);
            const T* xv = self.parents[0]->data.data();
            const T* Av = self.parents[1]->data.data();
            const T* Bv = self.parents[2]->data.data();
            const T* Cv = self.parents[3]->data.data();
            const T* Dv = self.parents[4]->data.data();
            const T* gy = self.grad.data();
            const std::size_t SN = s.e * s.N;
            std::vector<T> gh(SN, T(0));  // dL/dh_t, carried backwards
            for (std::size_t t = s.n; t-- > 0;) {
                const T* ht = states.data() + t * SN;
                const T* hp = t > 0 ? states.data() + (t - 1) * SN : nullptr;
                const T* Bt = Bv + t * s.N;
                const T* Ct = Cv + t * s.N;
                for (std::size_t hd = 0; hd < s.H; ++hd) {
                    const T at = a[t * s.H + hd], ct = c[t * s.H + hd];
                    T ga = T(0), gc = T(0);
                    for (std::size_t d = 0; d < s.D; ++d) {
                        const std::size_t ch = hd * s.D + d;
                        const T g = gy[t * s.e + ch];
                        const T xd = xv[t * s.e + ch];
                        T* ghr = gh.data() + ch * s.N;
                        const T* hr = ht + ch * s.N;
                        T gxd = T(0);
                        for (std::size_t k = 0; k < s.N; ++k) {
                            ghr[k] += g * Ct[k];
                            if (!gC.empty()) gC[t * s.N + k] += g * hr[k];
                            if (hp) ga += ghr[k] * hp[ch * s.N + k];
                            gc += ghr[k] * Bt[k] * xd;
                            if (!gB.empty()) gB[t * s.N + k] += ghr[k] * ct * xd;
                            gxd += ghr[k] * ct * Bt[k];
                        }
                        if (!gx.empty()) gx[t * s.e + ch] += gxd;
                        for (std::size_t k = 0; k < s.N; ++k) ghr[k] *= at;
                    }
                    // a = exp(dt A), c = expm1(dt A) / A.
                    const T Ah = Av[hd], dt = Dv[t * s.H + hd];
                    if (!gD.empty()) gD[t * s.H + hd] += ga * Ah * at + gc * at;
                    if (!gA.empty()) {
                        const T dc_dA = (dt * Ah * at - std::expm1(dt * Ah)) / (Ah * Ah);
                        gA[hd] += ga * dt * at + gc * dc_dA;
                    }
                }
            }
        });
}

/// Per-channel causal convolution over time, left-padded with zeros. Tap j of
/// kernel [w x E] multiplies x[t - (w-1) + j]. No activation.
template <typename T>
Tensor<T> causal_conv(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias) {
    if (x.rank() != 2 || kernel.rank() != 2 || kernel.dim(1) != x.dim(1) || bias.numel() != x.dim(1))
        throw ShapeError("causal_conv: x" + shape_str(x.shape()) + " kernel" + shape_str(kernel.shape()) + " bias" +
                         shape_str(bias.shape()));
    const std::size_t n = x.dim(0), e = x.dim(1), w = kernel.dim(0);
    if (w == 0) throw ShapeError("causal_conv: kernel width must be >= 1");
    const T* xv = x.data().data();
    const T* kv = kernel.data().data();
    const T* bv = bias.data().data();
    std::vector<T> y(n * e);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t ch = 0; ch < e; ++ch) {
            T acc = bv[ch];
            for (std::size_t j = 0; j < w; ++j) {
                if (t + j + 1 < w) continue;
                acc += kv[j * e + ch] * xv[(t + j + 1 - w) * e + ch];
            }
            y[t * e + ch] = acc;
        }
    return detail::make_result<T>("causal_conv", {n, e}, std::move(y), {x, kernel, bias}, [n, e, w](Node<T>& self) {
        auto gx = detail::parent_grad(self, 0);
        auto gk = detail::parent_grad(self, 1);
        auto gb = detail::parent_grad(self, 2);
        const T* xv = self.parents[0]->data.data();
        const T* kv = self.parents[1]->data.data();
        const T* g = self.grad.data();
        for (std::size_t t = 0; t < n; ++t)
            for (std::size_t ch = 0; ch < e; ++ch) {
                const T gv = g[t * e + ch];
                if (!gb.empty()) gb[ch] += gv;
                for (std::size_t j = 0; j < w; ++j) {
                    if (t + j + 1 < w) continue;
                    const std::size_t src = (t + j + 1 - w) * e + ch;
                    if (!gk.empty()) gk[j * e + ch] += gv * xv[src];
                    if (!gx.empty()) gx[src] += gv * kv[j * e + ch];
                }
            }
    });
}

/// Causal convolution followed by SiLU.
template <typename T>
Tensor<T> causal_conv1d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias) {
    return silu(causal_conv(x, kernel, bias));
}

}  // namespace trajmamba
