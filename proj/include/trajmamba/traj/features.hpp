#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "trajmamba/grad/nn.hpp"
#include "trajmamba/traj/preprocess.hpp"

namespace trajmamba {

/// Non-learnable per-point inputs extracted once per trajectory.
struct PointInputs {
    std::size_t n = 0;
    std::vector<double> lng, lat;
    std::vector<double> delta_minutes;   // minutes since the first point
    std::vector<double> minute_of_day;   // timestamp in minutes (of day)
    std::vector<double> day_of_week, hour, minute;
    std::vector<std::size_t> roads;
    std::vector<std::array<double, 3>> movement;  // normalized speed, accel, angle
};

inline PointInputs extract_point_inputs(const Trajectory& traj) {
    PointInputs in;
    in.n = traj.size();
    if (in.n == 0) throw DataError("extract_point_inputs: empty trajectory");
    const auto t0 = traj.points.front().t;
    for (const auto& p : traj.points) {
        in.lng.push_back(p.lng);
        in.lat.push_back(p.lat);
        in.delta_minutes.push_back(static_cast<double>(p.t - t0) / 60.0);
        auto c = calendar_time(p.t);
        in.minute_of_day.push_back(c.minute_of_day);
        in.day_of_week.push_back(c.day_of_week);
        in.hour.push_back(c.hour);
        in.minute.push_back(c.minute);
        in.roads.push_back(p.road);
    }
    if (in.n >= 2) {
        in.movement = compute_movement_features(traj);
    } else {
        in.movement.assign(1, {0.0, 0.0, 0.0});
    }
    return in;
}

template <typename T>
struct FeatureBundle {
    Tensor<T> z_g;  // [n x E/2]
    Tensor<T> z_r;  // [n x E/2]
    Tensor<T> s;    // [n x 3], constant

    std::size_t length() const { return z_g.dim(0); }
};

template <typename T>
Tensor<T> column(const std::vector<double>& v) {
    std::vector<T> d(v.begin(), v.end());
    return Tensor<T>::from({v.size(), 1}, std::move(d));
}

template <typename T>
Tensor<T> movement_tensor(const std::vector<std::array<double, 3>>& rows) {
    std::vector<T> d;
    d.reserve(rows.size() * 3);
    for (const auto& r : rows)
        for (double v : r) d.push_back(static_cast<T>(v));
    return Tensor<T>::from({rows.size(), 3}, std::move(d));
}

/// Learnable Fourier features: [sin(v * f), cos(v * f)] for a column of
/// values v [n x 1] and frequencies f [1 x k] -> [n x 2k].
template <typename T>
Tensor<T> fourier_time_encode(const Tensor<T>& values, const Tensor<T>& freqs) {
    auto arg = matmul(values, freqs);
    return concat<T>({sin(arg), cos(arg)}, 1);
}

struct FeatureConfig {
    std::size_t embed_dim = 64;  // E; latents are E/2 wide
    std::size_t road_count = 0;
    std::size_t road_embed_dim = 32;
    std::size_t fourier_dim = 8;  // frequencies per time feature
};

/// Frequencies geometrically spaced from one cycle per `range` up to 2pi.
template <typename T>
Tensor<T> init_frequencies(std::size_t k, double range) {
    std::vector<T> f(k);
    const double lo = 2.0 * std::numbers::pi / range;
    const double ratio = k > 1 ? std::pow(range, 1.0 / static_cast<double>(k - 1)) : 1.0;
    for (std::size_t j = 0; j < k; ++j) f[j] = static_cast<T>(lo * std::pow(ratio, static_cast<double>(j)));
    return Tensor<T>::from({1, k}, std::move(f), true);
}

/// Centre and half-extent of the network's bounding box:
/// {centre lng, centre lat, half lng, half lat}.
inline std::array<double, 4> network_gps_norm(const RoadNetwork& net) {
    double lo_lng = 1e9, hi_lng = -1e9, lo_lat = 1e9, hi_lat = -1e9;
    for (const auto& n : net.nodes) {
        lo_lng = std::min(lo_lng, n.lng);
        hi_lng = std::max(hi_lng, n.lng);
        lo_lat = std::min(lo_lat, n.lat);
        hi_lat = std::max(hi_lat, n.lat);
    }
    return {(lo_lng + hi_lng) / 2, (lo_lat + hi_lat) / 2, std::max(1e-6, (hi_lng - lo_lng) / 2),
            std::max(1e-6, (hi_lat - lo_lat) / 2)};
}

/// Embeds GPS/time/road inputs into the two latent sequences Z^G and Z^R:
///   z_g = Linear(gps) + Linear(Cat(Fourier(delta t), Fourier(minute of day)))
///   z_r = Linear(E_idx(road)) + Linear(Cat(Fourier(dow), Fourier(hour), Fourier(minute)))
template <typename T>
struct FeatureEmbedder {
    FeatureConfig config;
    std::vector<T> gps_norm;  // centre lng, centre lat, half-extent lng, half-extent lat
    Linear<T> gps;
    Embedding<T> road_table;
    Linear<T> road_proj;
    std::array<Tensor<T>, 5> freqs;  // delta, minute-of-day, dow, hour, minute
    Linear<T> duration_proj;
    Linear<T> cyclic_proj;

    FeatureEmbedder() = default;
    FeatureEmbedder(const FeatureConfig& cfg, const RoadNetwork& net, Rng& rng) : config(cfg) {
        if (cfg.embed_dim % 2 != 0) throw UsageError("feature embedder: E must be even");
        const std::size_t half = cfg.embed_dim / 2;
        config.road_count = net.edge_count();
        const auto norm = network_gps_norm(net);
        gps_norm.assign(norm.begin(), norm.end());
        gps = Linear<T>(2, half, rng);
        road_table = Embedding<T>(config.road_count, cfg.road_embed_dim, rng);
        road_proj = Linear<T>(cfg.road_embed_dim, half, rng);
        const std::array<double, 5> ranges{120.0, 1440.0, 7.0, 24.0, 60.0};
        for (std::size_t i = 0; i < 5; ++i) freqs[i] = init_frequencies<T>(cfg.fourier_dim, ranges[i]);
        duration_proj = Linear<T>(4 * cfg.fourier_dim, half, rng);
        cyclic_proj = Linear<T>(6 * cfg.fourier_dim, half, rng);
    }

    std::size_t half_dim() const { return config.embed_dim / 2; }

    FeatureBundle<T> operator()(const PointInputs& in) const {
        const std::size_t n = in.n;
        for (auto r : in.roads) {
            if (r >= config.road_count) throw DataError("embed_point_features: unknown road id " + std::to_string(r));
        }
        std::vector<T> g(2 * n);
        for (std::size_t i = 0; i < n; ++i) {
            g[2 * i] = static_cast<T>((in.lng[i] - gps_norm[0]) / gps_norm[2]);
            g[2 * i + 1] = static_cast<T>((in.lat[i] - gps_norm[1]) / gps_norm[3]);
        }
        auto gps_in = Tensor<T>::from({n, 2}, std::move(g));
        auto dur = concat<T>({fourier_time_encode(column<T>(in.delta_minutes), freqs[0]),
                              fourier_time_encode(column<T>(in.minute_of_day), freqs[1])},
                             1);
        auto cyc = concat<T>({fourier_time_encode(column<T>(in.day_of_week), freqs[2]),
                              fourier_time_encode(column<T>(in.hour), freqs[3]),
                              fourier_time_encode(column<T>(in.minute), freqs[4])},
                             1);
        FeatureBundle<T> b;
        b.z_g = add(gps(gps_in), duration_proj(dur));
        b.z_r = add(road_proj(road_table(in.roads)), cyclic_proj(cyc));
        b.s = movement_tensor<T>(in.movement);
        return b;
    }

    FeatureBundle<T> operator()(const Trajectory& traj) const { return (*this)(extract_point_inputs(traj)); }

    void collect(ParameterSet<T>& ps, const std::string& prefix) {
        gps.collect(ps, prefix + ".gps");
        road_table.collect(ps, prefix + ".road_idx");
        road_proj.collect(ps, prefix + ".road_proj");
        const char* names[5] = {"delta", "tod", "dow", "hour", "minute"};
        for (std::size_t i = 0; i < 5; ++i) ps.add(prefix + ".fourier." + names[i], freqs[i]);
        duration_proj.collect(ps, prefix + ".duration_proj");
        cyclic_proj.collect(ps, prefix + ".cyclic_proj");
        ps.add_buffer(prefix + ".gps_norm", &gps_norm);
    }
};

}  // namespace trajmamba
