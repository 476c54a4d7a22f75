#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "trajmamba/traj/types.hpp"

namespace trajmamba {

inline constexpr double kEarthRadiusM = 6371000.0;

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

/// Great-circle distance in meters.
inline double haversine(GeoPoint a, GeoPoint b) {
    const double p1 = deg2rad(a.lat), p2 = deg2rad(b.lat);
    const double dp = p2 - p1, dl = deg2rad(b.lng - a.lng);
    const double h = std::sin(dp / 2) * std::sin(dp / 2) + std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

/// Initial bearing from a to b, radians clockwise from north in [0, 2pi).
inline double bearing(GeoPoint a, GeoPoint b) {
    const double p1 = deg2rad(a.lat), p2 = deg2rad(b.lat), dl = deg2rad(b.lng - a.lng);
    const double y = std::sin(dl) * std::cos(p2);
    const double x = std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl);
    double th = std::atan2(y, x);
    if (th < 0) th += 2.0 * std::numbers::pi;
    if (th >= 2.0 * std::numbers::pi) th = 0.0;
    return th;
}

/// Distance in meters from p to segment [a, b] on a local equirectangular
/// projection centred at a.
inline double point_segment_distance(GeoPoint p, GeoPoint a, GeoPoint b) {
    const double k = deg2rad(1.0) * kEarthRadiusM;
    const double c = std::cos(deg2rad(a.lat));
    const double bx = (b.lng - a.lng) * k * c, by = (b.lat - a.lat) * k;
    const double px = (p.lng - a.lng) * k * c, py = (p.lat - a.lat) * k;
    const double len2 = bx * bx + by * by;
    double u = len2 > 0 ? (px * bx + py * by) / len2 : 0.0;
    u = std::clamp(u, 0.0, 1.0);
    const double dx = px - u * bx, dy = py - u * by;
    return std::sqrt(dx * dx + dy * dy);
}

inline Trajectory select_points(const Trajectory& traj, const std::vector<std::size_t>& keep) {
    Trajectory out;
    out.id = traj.id;
    out.points.reserve(keep.size());
    for (auto i : keep) out.points.push_back(traj.points[i]);
    return out;
}

/// Kept indices (ascending) of the Douglas-Peucker simplification. A point
/// survives when its deviation is >= epsilon, so epsilon = 0 keeps all.
inline std::vector<std::size_t> douglas_peucker_indices(std::span<const GeoPoint> pts, double epsilon) {
    const std::size_t n = pts.size();
    if (n <= 2) {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        return all;
    }
    std::vector<bool> keep(n, false);
    keep[0] = keep[n - 1] = true;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, n - 1}};
    while (!stack.empty()) {
        auto [lo, hi] = stack.back();
        stack.pop_back();
        if (hi <= lo + 1) continue;
        double best = -1.0;
        std::size_t arg = lo;
        for (std::size_t i = lo + 1; i < hi; ++i) {
            double d = point_segment_distance(pts[i], pts[lo], pts[hi]);
            if (d > best) {
                best = d;
                arg = i;
            }
        }
        if (best >= epsilon) {
            keep[arg] = true;
            stack.emplace_back(lo, arg);
            stack.emplace_back(arg, hi);
        }
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i)
        if (keep[i]) out.push_back(i);
    return out;
}

inline std::vector<GeoPoint> geo_sequence(const Trajectory& traj) {
    std::vector<GeoPoint> g;
    g.reserve(traj.size());
    for (const auto& p : traj.points) g.push_back(p.geo());
    return g;
}

inline Trajectory douglas_peucker(const Trajectory& traj, double epsilon_m) {
    if (traj.size() < 2) throw DataError("douglas_peucker: need at least 2 points");
    auto g = geo_sequence(traj);
    return select_points(traj, douglas_peucker_indices(g, epsilon_m));
}

/// Evenly spaced indices totalling round(ratio * n), endpoints included.
inline std::vector<std::size_t> downsample_indices(std::size_t n, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw UsageError("downsample: ratio must be in (0, 1]");
    if (n <= 2) {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        return all;
    }
    auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    k = std::clamp<std::size_t>(k, 2, n);
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) {
        out[i] = static_cast<std::size_t>(
            std::llround(static_cast<double>(i) * static_cast<double>(n - 1) / static_cast<double>(k - 1)));
    }
    return out;
}

inline Trajectory downsample(const Trajectory& traj, double ratio) {
    return select_points(traj, downsample_indices(traj.size(), ratio));
}

/// Dynamic time warping cost with the haversine point metric.
inline double dtw_distance(std::span<const GeoPoint> a, std::span<const GeoPoint> b) {
    if (a.empty() || b.empty()) throw DataError("dtw_distance: empty sequence");
    const std::size_t n = a.size(), m = b.size();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = inf;
        for (std::size_t j = 1; j <= m; ++j) {
            const double c = haversine(a[i - 1], b[j - 1]);
            cur[j] = c + std::min({prev[j], cur[j - 1], prev[j - 1]});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

}  // namespace trajmamba
