#pragma once

// Learned point mask for trajectory compression. A small Mamba2 block scores
// each point; a Gaussian-noise gate turns the score into a keep weight.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "trajmamba/ssm/blocks.hpp"
#include "trajmamba/traj/features.hpp"

namespace trajmamba {

struct MaskConfig {
    std::size_t latent_dim = 16;  // d_m
    std::size_t state_dim = 8;
    std::size_t heads = 2;
    double delta = 0.5;  // gate noise std, fixed for the whole run
    double mu_hat_mean = 1.0;  // positive: training starts from keeping every point
    double mu_hat_std = 0.5;

    void validate() const {
        if (latent_dim == 0 || heads == 0 || state_dim == 0) throw UsageError("mask generator: sizes must be >= 1");
        if (!(delta > 0.0)) throw UsageError("mask generator: delta must be positive");
        if (!(mu_hat_std >= 0.0)) throw UsageError("mask generator: mu_hat_std must be >= 0");
    }
};

inline constexpr std::size_t kMaskFeatureCount = 6;

/// Per-point generator inputs: normalized lng/lat, minutes since the previous
/// point, and the normalized speed, acceleration and bearing.
inline std::vector<double> mask_features(const PointInputs& in, const std::vector<double>& gps_norm) {
    std::vector<double> f(in.n * kMaskFeatureCount);
    for (std::size_t i = 0; i < in.n; ++i) {
        double* row = &f[i * kMaskFeatureCount];
        row[0] = (in.lng[i] - gps_norm[0]) / gps_norm[2];
        row[1] = (in.lat[i] - gps_norm[1]) / gps_norm[3];
        row[2] = i == 0 ? 0.0 : in.delta_minutes[i] - in.delta_minutes[i - 1];
        for (std::size_t c = 0; c < 3; ++c) row[3 + c] = in.movement[i][c];
    }
    return f;
}

template <typename T>
struct MaskGenerator {
    MaskConfig config;
    std::vector<double> gps_norm;  // derived from the network, not saved
    Linear<T> proj;  // [6 -> d_m]
    Mamba2Block<T> block;
    Tensor<T> mu_hat;  // [d_m], broadcast over points

    MaskGenerator() = default;
    MaskGenerator(const MaskConfig& cfg, const RoadNetwork& net, Rng& rng) : config(cfg) {
        cfg.validate();
        const auto norm = network_gps_norm(net);
        gps_norm.assign(norm.begin(), norm.end());
        proj = Linear<T>(kMaskFeatureCount, cfg.latent_dim, rng);
        block = Mamba2Block<T>(cfg.latent_dim, cfg.state_dim, cfg.heads, rng);
        std::normal_distribution<double> init(cfg.mu_hat_mean, cfg.mu_hat_std);
        std::vector<T> mh(cfg.latent_dim);
        for (auto& v : mh) v = static_cast<T>(init(rng));
        mu_hat = Tensor<T>::from({cfg.latent_dim}, std::move(mh), true);
    }

    /// mu = MeanPool_features(mu_hat * sigmoid(Mamba(proj(x)) * mu_hat)), [n x 1].
    Tensor<T> compute_mu(const PointInputs& in) const {
        if (in.n < 2) throw DataError("compute_mu: trajectory needs at least 2 points");
        auto f = mask_features(in, gps_norm);
        auto x = Tensor<T>::from({in.n, kMaskFeatureCount}, std::vector<T>(f.begin(), f.end()));
        auto h = block(proj(x));
        return mean(mul(sigmoid(mul(h, mu_hat)), mu_hat), 1, true);
    }

    void collect(ParameterSet<T>& ps, const std::string& prefix) {
        proj.collect(ps, prefix + ".proj");
        block.collect(ps, prefix + ".block");
        ps.add(prefix + ".mu_hat", mu_hat);
    }
};

/// m = clamp(mu + eps, 0, 1) with eps ~ N(0, delta^2) when training, and
/// clamp(mu, 0, 1) otherwise.
template <typename T>
Tensor<T> stochastic_gate(const Tensor<T>& mu, double delta, bool training, Rng& rng) {
    if (!(delta > 0.0)) throw UsageError("stochastic_gate: delta must be positive");
    if (!training) return clamp(mu, T(0), T(1));
    std::normal_distribution<double> noise(0.0, delta);
    std::vector<T> eps(mu.numel());
    for (auto& v : eps) v = static_cast<T>(noise(rng));
    return clamp(add(mu, Tensor<T>::from(mu.shape(), std::move(eps))), T(0), T(1));
}

/// Soft mask: scales every latent row of both branches by its keep weight.
template <typename T>
FeatureBundle<T> apply_soft_mask(const FeatureBundle<T>& bundle, const Tensor<T>& m) {
    if (m.rank() != 2 || m.dim(0) != bundle.length() || m.dim(1) != 1)
        throw ShapeError("apply_mask: mask " + shape_str(m.shape()) + " for " + std::to_string(bundle.length()) +
                         " points");
    FeatureBundle<T> out = bundle;
    out.z_g = mul(bundle.z_g, m);
    out.z_r = mul(bundle.z_r, m);
    return out;
}

/// Hard mask: indices of points with m > 0. Origin and destination are
/// always kept.
template <typename Seq>
std::vector<std::size_t> hard_mask_indices(const Seq& m) {
    const std::size_t n = std::size(m);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < n; ++i)
        if (i == 0 || i + 1 == n || m[i] > 0) keep.push_back(i);
    return keep;
}

template <typename Seq>
Trajectory apply_hard_mask(const Trajectory& traj, const Seq& m) {
    if (std::size(m) != traj.size())
        throw ShapeError("apply_mask: " + std::to_string(std::size(m)) + " mask values for " +
                         std::to_string(traj.size()) + " points");
    return select_points(traj, hard_mask_indices(m));
}

/// Inference-time compression of an already preprocessed trajectory.
template <typename T>
Trajectory compress_trajectory(const Trajectory& pre, const MaskGenerator<T>& gen) {
    if (pre.size() < 3) return pre;
    NoGradGuard ng;
    auto mu = gen.compute_mu(extract_point_inputs(pre));
    std::vector<T> m(mu.data().begin(), mu.data().end());
    for (auto& v : m) v = std::clamp(v, T(0), T(1));
    return apply_hard_mask(pre, m);
}

}  // namespace trajmamba
