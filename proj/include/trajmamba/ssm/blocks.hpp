#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "trajmamba/grad/nn.hpp"
#include "trajmamba/ssm/scan.hpp"

namespace trajmamba {

inline constexpr double kRmsNormEps = 1e-5;

/// Selective-SSM parameters derived from a source sequence:
///   B = Linear(src), C = Linear(src), delta = softplus(Linear(src) + b_delta)
/// and a per-head decay A = -exp(a_log).
template <typename T>
struct SsmHeadParams {
    Tensor<T> a_log;       // [H]
    Tensor<T> delta_bias;  // [H]
    Linear<T> b_proj, c_proj, delta_proj;

    SsmHeadParams() = default;
    SsmHeadParams(std::size_t source_dim, std::size_t state_dim, std::size_t heads, Rng& rng) {
        std::uniform_real_distribution<double> a_init(1.0, 16.0);
        std::uniform_real_distribution<double> log_dt(std::log(0.001), std::log(0.1));
        std::vector<T> al(heads), db(heads);
        for (std::size_t h = 0; h < heads; ++h) {
            al[h] = static_cast<T>(std::log(a_init(rng)));
            const double dt = std::exp(log_dt(rng));
            db[h] = static_cast<T>(dt + std::log(-std::expm1(-dt)));  // softplus^-1(dt)
        }
        a_log = Tensor<T>::from({heads}, std::move(al), true);
        delta_bias = Tensor<T>::from({heads}, std::move(db), true);
        b_proj = Linear<T>(source_dim, state_dim, rng, false);
        c_proj = Linear<T>(source_dim, state_dim, rng, false);
        delta_proj = Linear<T>(source_dim, heads, rng, false);
    }

    std::size_t heads() const { return a_log.numel(); }
    std::size_t source_dim() const { return b_proj.in_dim(); }

    Tensor<T> A() const { return neg(exp(a_log)); }

    struct Projected {
        Tensor<T> B, C, delta;
    };

    Projected param_from(const Tensor<T>& source) const {
        if (source.rank() != 2 || source.dim(1) != source_dim())
            throw ShapeError("param_from: source " + shape_str(source.shape()) + " but projections expect width " +
                             std::to_string(source_dim()));
        return {b_proj(source), c_proj(source), softplus(add(delta_proj(source), delta_bias))};
    }

    Tensor<T> scan(const Tensor<T>& x, const Tensor<T>& source, ScanMode mode, std::size_t chunk) const {
        auto p = param_from(source);
        return selective_scan(x, A(), p.B, p.C, p.delta, mode, chunk);
    }

    void collect(ParameterSet<T>& ps, const std::string& prefix) const {
        ps.add(prefix + ".a_log", a_log);
        ps.add(prefix + ".delta_bias", delta_bias);
        b_proj.collect(ps, prefix + ".b_proj");
        c_proj.collect(ps, prefix + ".c_proj");
        delta_proj.collect(ps, prefix + ".delta_proj");
    }
};

template <typename T>
struct CausalConv {
    Tensor<T> kernel;  // [w x E]
    Tensor<T> bias;    // [E]

    CausalConv() = default;
    CausalConv(std::size_t width, std::size_t channels, Rng& rng) {
        const T bound = T(1) / std::sqrt(static_cast<T>(width));
        kernel = uniform_tensor<T>({width, channels}, -bound, bound, rng);
        bias = uniform_tensor<T>({channels}, -bound, bound, rng);
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return causal_conv1d(x, kernel, bias); }

    void collect(ParameterSet<T>& ps, const std::string& prefix) const {
        ps.add(prefix + ".kernel", kernel);
        ps.add(prefix + ".bias", bias);
    }
};

struct EncoderConfig {
    std::size_t layers = 5;      // L
    std::size_t embed_dim = 256;  // E
    std::size_t state_dim = 32;   // N
    std::size_t heads = 4;        // H
    std::size_t conv_width = 4;
    std::size_t chunk = 64;
    ScanMode mode = ScanMode::sequential;

    static EncoderConfig desk() {
        EncoderConfig c;
        c.layers = 2;
        c.embed_dim = 64;
        c.state_dim = 16;
        c.heads = 4;
        return c;
    }

    void validate() const {
        if (layers == 0) throw UsageError("encoder: L must be >= 1");
        if (embed_dim % 2 != 0) throw UsageError("encoder: E must be even");
        if (heads == 0 || embed_dim % heads != 0) throw UsageError("encoder: E must be divisible by H");
        if (state_dim == 0 || conv_width == 0 || chunk == 0) throw UsageError("encoder: N, conv width, chunk must be >= 1");
    }
};

/// Dual-branch block: a GPS-SSM parameterized by movement features and a
/// Road-SSM parameterized by the GPS-SSM output.
template <typename T>
struct TrajMambaBlock {
    Linear<T> gps_in;   // [E/2 -> E]
    CausalConv<T> conv;
    SsmHeadParams<T> gps_ssm;  // source: movement features [n x 3]
    Linear<T> road_in;  // [E/2 -> E]
    SsmHeadParams<T> road_ssm;  // source: Y^G [n x E]
    Tensor<T> gate_norm;  // [E]
    Linear<T> gps_out;    // [E -> E/2]
    Linear<T> road_out;   // [E -> E/2]

    struct Output {
        Tensor<T> z_g, z_r, y_g;
    };

    TrajMambaBlock() = default;
    TrajMambaBlock(const EncoderConfig& cfg, Rng& rng) {
        const std::size_t e = cfg.embed_dim, half = e / 2;
        gps_in = Linear<T>(half, e, rng);
        conv = CausalConv<T>(cfg.conv_width, e, rng);
        gps_ssm = SsmHeadParams<T>(3, cfg.state_dim, cfg.heads, rng);
        road_in = Linear<T>(half, e, rng);
        road_ssm = SsmHeadParams<T>(e, cfg.state_dim, cfg.heads, rng);
        gate_norm = Tensor<T>::full({e}, T(1), true);
        gps_out = Linear<T>(e, half, rng);
        road_out = Linear<T>(e, half, rng);
    }

    Output operator()(const Tensor<T>& z_g, const Tensor<T>& z_r, const Tensor<T>& s, ScanMode mode,
                      std::size_t chunk) const {
        if (z_g.rank() != 2 || z_r.rank() != 2 || s.rank() != 2 || z_g.dim(0) != z_r.dim(0) || z_g.dim(0) != s.dim(0))
            throw ShapeError("traj_mamba_block: z_g" + shape_str(z_g.shape()) + " z_r" + shape_str(z_r.shape()) +
                             " s" + shape_str(s.shape()));
        auto x_g = conv(gps_in(z_g));
        auto y_g = gps_ssm.scan(x_g, s, mode, chunk);
        auto x_r = silu(road_in(z_r));
        auto y_r = road_ssm.scan(x_r, y_g, mode, chunk);
        Output o;
        o.z_g = gps_out(rms_norm(mul(y_g, x_r), gate_norm, static_cast<T>(kRmsNormEps)));
        o.z_r = road_out(y_r);
        o.y_g = y_g;
        return o;
    }

    void collect(ParameterSet<T>& ps, const std::string& prefix) const {
        gps_in.collect(ps, prefix + ".gps_in");
        conv.collect(ps, prefix + ".conv");
        gps_ssm.collect(ps, prefix + ".gps_ssm");
        road_in.collect(ps, prefix + ".road_in");
        road_ssm.collect(ps, prefix + ".road_ssm");
        ps.add(prefix + ".gate_norm", gate_norm);
        gps_out.collect(ps, prefix + ".gps_out");
        road_out.collect(ps, prefix + ".road_out");
    }
};

/// Single-input selective block with a residual connection.
template <typename T>
struct Mamba2Block {
    std::size_t inner = 0;
    std::size_t chunk = 64;
    ScanMode mode = ScanMode::sequential;
    Linear<T> in_proj;  // [d -> 2 * inner], split into x and gate z
    CausalConv<T> conv;
    SsmHeadParams<T> ssm;
    Tensor<T> norm;  // [inner]
    Linear<T> out_proj;

    Mamba2Block() = default;
    Mamba2Block(std::size_t d, std::size_t state_dim, std::size_t heads, Rng& rng, std::size_t expand = 2,
                std::size_t conv_width = 4)
        : inner(expand * d) {
        if (heads == 0 || inner % heads != 0) throw UsageError("mamba2_block: inner width not divisible by H");
        in_proj = Linear<T>(d, 2 * inner, rng);
        conv = CausalConv<T>(conv_width, inner, rng);
        ssm = SsmHeadParams<T>(inner, state_dim, heads, rng);
        norm = Tensor<T>::full({inner}, T(1), true);
        out_proj = Linear<T>(inner, d, rng);
    }

    std::size_t dim() const { return in_proj.in_dim(); }

    Tensor<T> operator()(const Tensor<T>& x) const {
        if (x.rank() != 2 || x.dim(1) != dim())
            throw ShapeError("mamba2_block: input " + shape_str(x.shape()) + " but block width " + std::to_string(dim()));
        auto xz = in_proj(x);
        auto xc = conv(slice(xz, 1, 0, inner));
        auto z = slice(xz, 1, inner, inner);
        auto y = ssm.scan(xc, xc, mode, chunk);
        return add(out_proj(rms_norm(mul(y, silu(z)), norm, static_cast<T>(kRmsNormEps))), x);
    }

    void collect(ParameterSet<T>& ps, const std::string& prefix) const {
        in_proj.collect(ps, prefix + ".in_proj");
        conv.collect(ps, prefix + ".conv");
        ssm.collect(ps, prefix + ".ssm");
        ps.add(prefix + ".norm", norm);
        out_proj.collect(ps, prefix + ".out_proj");
    }
};

}  // namespace trajmamba
