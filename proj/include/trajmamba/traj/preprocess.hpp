#pragma once

#include <algorithm>
#include <array>
#include <numbers>
#include <vector>

#include "trajmamba/traj/geo.hpp"

namespace trajmamba {

/// Speed (m/s), acceleration (m/s^2) and bearing (fraction of a turn) per
/// point, before normalization. Row i uses the step from point i to i+1;
/// acceleration is the change from the previous step's speed. The last row
/// is zero.
inline std::vector<std::array<double, 3>> raw_movement_features(const Trajectory& traj) {
    const std::size_t n = traj.size();
    if (n < 2) throw DataError("movement features: need at least 2 points");
    std::vector<std::array<double, 3>> f(n, {0.0, 0.0, 0.0});
    std::vector<double> speed(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto& a = traj.points[i];
        const auto& b = traj.points[i + 1];
        const auto dt = static_cast<double>(b.t - a.t);
        if (dt <= 0) throw DataError("movement features: non-increasing timestamps in trajectory " + std::to_string(traj.id));
        speed[i] = haversine(a.geo(), b.geo()) / dt;
        f[i][0] = speed[i];
        f[i][1] = i == 0 ? 0.0 : (speed[i] - speed[i - 1]) / static_cast<double>(a.t - traj.points[i - 1].t);
        f[i][2] = bearing(a.geo(), b.geo()) / (2.0 * std::numbers::pi);
    }
    return f;
}

/// Per-trajectory min-max normalization of each column over rows 0..n-2; a
/// constant column maps to zeros and the last row stays zero.
inline std::vector<std::array<double, 3>> compute_movement_features(const Trajectory& traj) {
    auto f = raw_movement_features(traj);
    const std::size_t rows = f.size() - 1;
    for (std::size_t c = 0; c < 3; ++c) {
        double lo = f[0][c], hi = f[0][c];
        for (std::size_t i = 1; i < rows; ++i) {
            lo = std::min(lo, f[i][c]);
            hi = std::max(hi, f[i][c]);
        }
        for (std::size_t i = 0; i < rows; ++i) f[i][c] = hi > lo ? (f[i][c] - lo) / (hi - lo) : 0.0;
    }
    return f;
}

/// Segment speed attributed to each point (last point repeats the final step).
inline std::vector<double> point_speeds(const Trajectory& traj) {
    const std::size_t n = traj.size();
    std::vector<double> v(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto dt = static_cast<double>(traj.points[i + 1].t - traj.points[i].t);
        v[i] = haversine(traj.points[i].geo(), traj.points[i + 1].geo()) / dt;
    }
    if (n >= 2) v[n - 1] = v[n - 2];
    return v;
}

struct RedundancyThresholds {
    double stop_speed = 0.5;    // m/s
    double steady_range = 0.5;  // m/s, max - min speed within a run
};

namespace detail {

/// Marks points strictly inside a qualifying run: a stop run (every speed
/// below the stop threshold) or a steady run (one road segment, speed range
/// below the steadiness threshold).
inline std::vector<bool> redundant_points(const Trajectory& traj, const RedundancyThresholds& th) {
    const std::size_t n = traj.size();
    std::vector<bool> drop(n, false);
    if (n < 3) return drop;
    const auto v = point_speeds(traj);
    for (std::size_t a = 0; a < n; ++a) {
        // Longest stop run starting at a.
        std::size_t b = a;
        while (b + 1 < n && v[a] < th.stop_speed && v[b + 1] < th.stop_speed) ++b;
        for (std::size_t i = a + 1; i < b; ++i) drop[i] = true;
        // Longest steady run starting at a.
        double lo = v[a], hi = v[a];
        b = a;
        while (b + 1 < n && traj.points[b + 1].road == traj.points[a].road) {
            double nlo = std::min(lo, v[b + 1]), nhi = std::max(hi, v[b + 1]);
            if (nhi - nlo >= th.steady_range) break;
            lo = nlo;
            hi = nhi;
            ++b;
        }
        for (std::size_t i = a + 1; i < b; ++i) drop[i] = true;
    }
    return drop;
}

}  // namespace detail

/// Drops the interior of stop runs and steady same-segment runs, repeating
/// until nothing changes (the result is a fixed point, hence idempotent).
/// Origin and destination always survive.
inline Trajectory filter_explicit_redundancy(const Trajectory& traj, const RedundancyThresholds& th = {}) {
    Trajectory cur = traj;
    while (true) {
        auto drop = detail::redundant_points(cur, th);
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < cur.size(); ++i)
            if (!drop[i]) keep.push_back(i);
        if (keep.size() == cur.size()) return cur;
        cur = select_points(cur, keep);
    }
}

struct Split {
    std::vector<Trajectory> train, valid, test;
};

/// Sorts by departure time (ties by id) and splits contiguously 8:1:1.
inline Split chronological_split(std::vector<Trajectory> trajs) {
    std::stable_sort(trajs.begin(), trajs.end(), [](const Trajectory& a, const Trajectory& b) {
        return a.departure() != b.departure() ? a.departure() < b.departure() : a.id < b.id;
    });
    const std::size_t n = trajs.size();
    const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
    const auto n_valid = std::min(n - n_train, static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n))));
    Split s;
    s.train.assign(trajs.begin(), trajs.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.valid.assign(trajs.begin() + static_cast<std::ptrdiff_t>(n_train),
                   trajs.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
    s.test.assign(trajs.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), trajs.end());
    return s;
}

/// Calendar features of a UTC timestamp.
struct CalendarTime {
    double minute_of_day = 0;  // [0, 1440)
    double day_of_week = 0;    // 0 = Monday
    double hour = 0;
    double minute = 0;
};

inline CalendarTime calendar_time(std::int64_t t) {
    constexpr std::int64_t day = 86400;
    std::int64_t days = t >= 0 ? t / day : (t - day + 1) / day;
    std::int64_t sec = t - days * day;
    CalendarTime c;
    c.minute_of_day = static_cast<double>(sec) / 60.0;
    c.day_of_week = static_cast<double>(((days + 3) % 7 + 7) % 7);  // 1970-01-01 was a Thursday
    c.hour = static_cast<double>(sec / 3600);
    c.minute = static_cast<double>((sec % 3600) / 60);
    return c;
}

}  // namespace trajmamba
