#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>

#include "trajmamba/grad/fdcheck.hpp"
#include "trajmamba/traj/features.hpp"
#include "trajmamba/traj/io.hpp"
#include "trajmamba/traj/synth.hpp"

using namespace trajmamba;

namespace {

Trajectory make_traj(std::vector<TrajPoint> pts, std::int64_t id = 0) {
    Trajectory t;
    t.id = id;
    t.points = std::move(pts);
    return t;
}

// Meters to degrees near the equator, for hand-built cases.
double m2deg(double m) { return m / (std::numbers::pi * kEarthRadiusM / 180.0); }

// Enumerates every monotone alignment path from (0,0) to (n-1,m-1), summing
// costs from the start of the path.
void dtw_paths(const std::vector<GeoPoint>& a, const std::vector<GeoPoint>& b, std::size_t i, std::size_t j,
               double acc, double& best) {
    acc += haversine(a[i], b[j]);
    if (i + 1 == a.size() && j + 1 == b.size()) {
        best = std::min(best, acc);
        return;
    }
    if (i + 1 < a.size()) dtw_paths(a, b, i + 1, j, acc, best);
    if (j + 1 < b.size()) dtw_paths(a, b, i, j + 1, acc, best);
    if (i + 1 < a.size() && j + 1 < b.size()) dtw_paths(a, b, i + 1, j + 1, acc, best);
}

double dtw_bruteforce(const std::vector<GeoPoint>& a, const std::vector<GeoPoint>& b) {
    double best = std::numeric_limits<double>::infinity();
    dtw_paths(a, b, 0, 0, 0.0, best);
    return best;
}

std::vector<GeoPoint> random_geo(std::size_t n, Rng& rng) {
    std::uniform_real_distribution<double> d(-0.01, 0.01);
    std::vector<GeoPoint> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({104.0 + d(rng), 30.6 + d(rng)});
    return out;
}

// Every interval [a, b] that qualifies as a stop or steady run marks its
// interior; no maximality reasoning, just exhaustive enumeration.
std::vector<bool> redundancy_bruteforce(const Trajectory& t, const RedundancyThresholds& th) {
    const std::size_t n = t.size();
    std::vector<bool> drop(n, false);
    const auto v = point_speeds(t);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 2; b < n; ++b) {
            bool stop = true, same_road = true;
            double lo = v[a], hi = v[a];
            for (std::size_t i = a; i <= b; ++i) {
                stop = stop && v[i] < th.stop_speed;
                same_road = same_road && t.points[i].road == t.points[a].road;
                lo = std::min(lo, v[i]);
                hi = std::max(hi, v[i]);
            }
            if (stop || (same_road && hi - lo < th.steady_range))
                for (std::size_t i = a + 1; i < b; ++i) drop[i] = true;
        }
    return drop;
}

// Eastward walk with given per-step distances (m) and intervals (s).
Trajectory walk(const std::vector<double>& steps_m, const std::vector<std::int64_t>& dts,
                const std::vector<std::size_t>& roads) {
    Trajectory t;
    double lng = 104.0;
    std::int64_t time = 1000;
    t.points.push_back({lng, 0.0, roads[0], time});
    for (std::size_t i = 0; i < steps_m.size(); ++i) {
        lng += m2deg(steps_m[i]);
        time += dts[i];
        t.points.push_back({lng, 0.0, roads[i + 1], time});
    }
    return t;
}

}  // namespace

TEST(Haversine, ZeroAndOneDegree) {
    EXPECT_EQ(haversine({10.0, 20.0}, {10.0, 20.0}), 0.0);
    const double oracle = std::numbers::pi * kEarthRadiusM / 180.0;
    EXPECT_NEAR(haversine({0.0, 0.0}, {0.0, 1.0}), oracle, 1e-6);
    EXPECT_NEAR(oracle, 111195.0, 1.0);
    // Along the equator the angle is again one degree.
    EXPECT_NEAR(haversine({0.0, 0.0}, {1.0, 0.0}), oracle, 1e-6);
}

TEST(Haversine, SymmetricNonnegative) {
    Rng rng(3);
    std::uniform_real_distribution<double> lng(-180, 180), lat(-90, 90);
    for (int i = 0; i < 100; ++i) {
        GeoPoint a{lng(rng), lat(rng)}, b{lng(rng), lat(rng)};
        EXPECT_EQ(haversine(a, b), haversine(b, a));
        EXPECT_GE(haversine(a, b), 0.0);
    }
}

TEST(Haversine, MatchesSphericalLawOfCosines) {
    Rng rng(5);
    std::uniform_real_distribution<double> lng(-180, 180), lat(-80, 80);
    for (int i = 0; i < 50; ++i) {
        GeoPoint a{lng(rng), lat(rng)}, b{lng(rng), lat(rng)};
        const double p1 = deg2rad(a.lat), p2 = deg2rad(b.lat);
        const double c = std::sin(p1) * std::sin(p2) + std::cos(p1) * std::cos(p2) * std::cos(deg2rad(b.lng - a.lng));
        const double oracle = kEarthRadiusM * std::acos(std::clamp(c, -1.0, 1.0));
        EXPECT_NEAR(haversine(a, b), oracle, 1e-3);
    }
}

TEST(Bearing, Cardinals) {
    EXPECT_NEAR(bearing({0, 0}, {0, 1}), 0.0, 1e-12);
    EXPECT_NEAR(bearing({0, 0}, {1, 0}), std::numbers::pi / 2, 1e-12);
    EXPECT_NEAR(bearing({0, 0}, {0, -1}), std::numbers::pi, 1e-12);
    EXPECT_NEAR(bearing({0, 0}, {-1, 0}), 3 * std::numbers::pi / 2, 1e-12);
}

TEST(MovementFeatures, StationaryPairHasZeroSpeed) {
    auto t = make_traj({{104.0, 30.0, 0, 0}, {104.0, 30.0, 0, 10}});
    auto f = raw_movement_features(t);
    EXPECT_EQ(f[0][0], 0.0);
    EXPECT_EQ(f[1][0], 0.0);
}

TEST(MovementFeatures, ConstantVelocityEastward) {
    auto t = walk({100, 100, 100, 100}, {10, 10, 10, 10}, {0, 0, 0, 0, 0});
    auto f = raw_movement_features(t);
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        EXPECT_NEAR(f[i][0], 10.0, 1e-6);
        EXPECT_NEAR(f[i][1], 0.0, 1e-9);
        EXPECT_NEAR(f[i][2], 0.25, 1e-9);
    }
    auto norm = compute_movement_features(t);
    for (const auto& row : norm) EXPECT_EQ(row[2], 0.0);  // constant column
}

TEST(MovementFeatures, HandCaseRecomputation) {
    // Four points: east 60 m in 10 s, north 90 m in 15 s, east 40 m in 20 s.
    const double lat0 = 0.0;
    std::vector<TrajPoint> pts{{104.0, lat0, 0, 0},
                               {104.0 + m2deg(60), lat0, 0, 10},
                               {104.0 + m2deg(60), lat0 + m2deg(90), 1, 25},
                               {104.0 + m2deg(100), lat0 + m2deg(90), 2, 45}};
    auto t = make_traj(pts);
    auto raw = raw_movement_features(t);
    const double v0 = haversine(pts[0].geo(), pts[1].geo()) / 10.0;
    const double v1 = haversine(pts[1].geo(), pts[2].geo()) / 15.0;
    const double v2 = haversine(pts[2].geo(), pts[3].geo()) / 20.0;
    EXPECT_NEAR(v0, 6.0, 1e-6);
    EXPECT_NEAR(v1, 6.0, 1e-6);
    EXPECT_NEAR(v2, 2.0, 1e-3);
    EXPECT_NEAR(raw[0][0], v0, 1e-12);
    EXPECT_NEAR(raw[1][0], v1, 1e-12);
    EXPECT_NEAR(raw[2][0], v2, 1e-12);
    EXPECT_EQ(raw[0][1], 0.0);
    EXPECT_NEAR(raw[1][1], (v1 - v0) / 10.0, 1e-12);
    EXPECT_NEAR(raw[2][1], (v2 - v1) / 15.0, 1e-12);
    EXPECT_NEAR(raw[0][2], 0.25, 1e-9);
    EXPECT_NEAR(raw[1][2], 0.0, 1e-9);
    EXPECT_NEAR(raw[2][2], 0.25, 1e-6);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(raw[3][c], 0.0);

    auto norm = compute_movement_features(t);
    // Speed column: min v2, max v0 ~ v1.
    const double lo = std::min({v0, v1, v2}), hi = std::max({v0, v1, v2});
    EXPECT_NEAR(norm[2][0], (v2 - lo) / (hi - lo), 1e-12);
    EXPECT_NEAR(norm[0][0], (v0 - lo) / (hi - lo), 1e-12);
    for (const auto& row : norm)
        for (double x : row) {
            EXPECT_GE(x, 0.0);
            EXPECT_LE(x, 1.0);
        }
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(norm[3][c], 0.0);
}

TEST(MovementFeatures, RejectsZeroInterval) {
    auto t = make_traj({{104.0, 30.0, 0, 5}, {104.001, 30.0, 0, 5}});
    EXPECT_THROW(raw_movement_features(t), DataError);
}

TEST(Redundancy, StationaryRunKeepsTwo) {
    auto t = walk({0, 0, 0, 0}, {10, 10, 10, 10}, {0, 0, 0, 0, 0});
    auto out = filter_explicit_redundancy(t);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out.points.front().t, t.points.front().t);
    EXPECT_EQ(out.points.back().t, t.points.back().t);
}

TEST(Redundancy, AlternatingRoadsVaryingSpeedUnchanged) {
    auto t = walk({50, 120, 40, 150, 30}, {10, 10, 10, 10, 10}, {0, 1, 0, 1, 0, 1});
    auto out = filter_explicit_redundancy(t);
    EXPECT_EQ(out.size(), t.size());
}

TEST(Redundancy, MixedTwelvePointCaseMatchesBruteForce) {
    // Cruise on road 3, stop, accelerate onto road 4 with varying speed.
    auto t = walk({100, 100, 100, 60, 0, 0, 0, 30, 90, 150, 200}, {10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10},
                  {3, 3, 3, 3, 3, 3, 3, 3, 4, 4, 4, 4});
    ASSERT_EQ(t.size(), 12u);
    const RedundancyThresholds th;
    auto oracle = redundancy_bruteforce(t, th);
    auto got = detail::redundant_points(t, th);
    EXPECT_EQ(got, oracle);
    // Speeds 10,10,10,6,0,0,0,3,...: steady run 0..2 and stop run 4..6.
    std::set<std::size_t> dropped;
    for (std::size_t i = 0; i < 12; ++i)
        if (oracle[i]) dropped.insert(i);
    EXPECT_EQ(dropped, (std::set<std::size_t>{1, 5}));
}

TEST(Redundancy, RandomCasesMatchBruteForce) {
    Rng rng(17);
    std::uniform_real_distribution<double> step(0, 200);
    std::uniform_int_distribution<int> zero(0, 2), road(0, 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> steps;
        std::vector<std::int64_t> dts;
        std::vector<std::size_t> roads{0};
        const std::size_t n = 3 + trial % 12;
        for (std::size_t i = 1; i < n; ++i) {
            steps.push_back(zero(rng) == 0 ? 0.0 : std::round(step(rng) / 10) * 10);
            dts.push_back(10);
            roads.push_back(static_cast<std::size_t>(road(rng)));
        }
        auto t = walk(steps, dts, roads);
        EXPECT_EQ(detail::redundant_points(t, {}), redundancy_bruteforce(t, {})) << "trial " << trial;
    }
}

TEST(Redundancy, IdempotentAndKeepsEndpoints) {
    auto world = generate_synthetic_world({});
    TrajectoryConfig tc;
    tc.count = 100;
    auto trajs = generate_trajectories(world, tc);
    std::size_t shrunk = 0;
    for (const auto& t : trajs) {
        auto once = filter_explicit_redundancy(t);
        auto twice = filter_explicit_redundancy(once);
        ASSERT_EQ(once.size(), twice.size());
        for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once.points[i].t, twice.points[i].t);
        EXPECT_GE(once.size(), 2u);
        EXPECT_EQ(once.points.front().t, t.points.front().t);
        EXPECT_EQ(once.points.back().t, t.points.back().t);
        if (once.size() < t.size()) ++shrunk;
    }
    EXPECT_GT(shrunk, 50u);  // synthetic trips contain stops and steady runs
}

TEST(DouglasPeucker, CollinearKeepsEndpoints) {
    auto t = walk({100, 100, 100, 100}, {10, 10, 10, 10}, {0, 0, 0, 0, 0});
    auto out = douglas_peucker(t, 1.0);
    ASSERT_EQ(out.size(), 2u);
}

TEST(DouglasPeucker, ZeroEpsilonKeepsAll) {
    auto t = walk({100, 100, 100, 100}, {10, 10, 10, 10}, {0, 0, 0, 0, 0});
    EXPECT_EQ(douglas_peucker(t, 0.0).size(), t.size());
}

TEST(DouglasPeucker, TriangleApexKept) {
    std::vector<GeoPoint> pts{{0, 0}, {m2deg(100), m2deg(10)}, {m2deg(200), m2deg(80)}, {m2deg(300), m2deg(5)},
                              {m2deg(400), 0}};
    // Brute-force oracle: the point with maximal deviation from the chord.
    std::size_t apex = 0;
    double best = -1;
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
        double d = point_segment_distance(pts[i], pts.front(), pts.back());
        if (d > best) best = d, apex = i;
    }
    EXPECT_EQ(apex, 2u);
    EXPECT_NEAR(best, 80.0, 0.1);
    auto kept = douglas_peucker_indices(pts, 50.0);
    EXPECT_EQ(kept, (std::vector<std::size_t>{0, 2, 4}));
    auto all = douglas_peucker_indices(pts, 1.0);
    EXPECT_EQ(all.size(), 5u);
    auto ends = douglas_peucker_indices(pts, 81.0);
    EXPECT_EQ(ends, (std::vector<std::size_t>{0, 4}));
}

TEST(DouglasPeucker, MonotoneInEpsilon) {
    Rng rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        auto pts = random_geo(40, rng);
        std::size_t prev = pts.size();
        for (double eps : {0.0, 5.0, 20.0, 50.0, 100.0, 300.0, 1000.0, 5000.0}) {
            auto k = douglas_peucker_indices(pts, eps);
            EXPECT_LE(k.size(), prev);
            EXPECT_EQ(k.front(), 0u);
            EXPECT_EQ(k.back(), pts.size() - 1);
            prev = k.size();
        }
    }
}

TEST(DouglasPeucker, MatchesRecursiveOracle) {
    // Reference recursive formulation.
    std::function<void(const std::vector<GeoPoint>&, std::size_t, std::size_t, double, std::set<std::size_t>&)> rec =
        [&](const std::vector<GeoPoint>& p, std::size_t lo, std::size_t hi, double eps, std::set<std::size_t>& keep) {
            keep.insert(lo);
            keep.insert(hi);
            double best = -1;
            std::size_t arg = lo;
            for (std::size_t i = lo + 1; i < hi; ++i) {
                double d = point_segment_distance(p[i], p[lo], p[hi]);
                if (d > best) best = d, arg = i;
            }
            if (hi > lo + 1 && best >= eps) {
                rec(p, lo, arg, eps, keep);
                rec(p, arg, hi, eps, keep);
            }
        };
    Rng rng(29);
    for (int trial = 0; trial < 40; ++trial) {
        auto pts = random_geo(2 + trial, rng);
        for (double eps : {10.0, 150.0, 600.0}) {
            std::set<std::size_t> keep;
            rec(pts, 0, pts.size() - 1, eps, keep);
            auto got = douglas_peucker_indices(pts, eps);
            EXPECT_EQ(std::vector<std::size_t>(keep.begin(), keep.end()), got);
        }
    }
}

TEST(Downsample, Contracts) {
    EXPECT_EQ(downsample_indices(10, 1.0), (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
    auto six = downsample_indices(10, 0.6);
    ASSERT_EQ(six.size(), 6u);
    EXPECT_EQ(six.front(), 0u);
    EXPECT_EQ(six.back(), 9u);
    auto idx = downsample_indices(120, 0.6);
    ASSERT_EQ(idx.size(), 72u);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const double exact = static_cast<double>(i) * 119.0 / 71.0;
        EXPECT_LE(std::abs(static_cast<double>(idx[i]) - exact), 0.5);
        if (i > 0) {
            EXPECT_GT(idx[i], idx[i - 1]);
        }
    }
    EXPECT_EQ(downsample_indices(5, 0.1), (std::vector<std::size_t>{0, 4}));
    EXPECT_THROW(downsample_indices(5, 0.0), UsageError);
    EXPECT_THROW(downsample_indices(5, 1.5), UsageError);
}

TEST(Dtw, TrivialCases) {
    Rng rng(31);
    auto a = random_geo(7, rng);
    EXPECT_EQ(dtw_distance(a, a), 0.0);
    std::vector<GeoPoint> p{{104.0, 30.0}}, q{{104.01, 30.02}};
    EXPECT_EQ(dtw_distance(p, q), haversine(p[0], q[0]));
    EXPECT_THROW(dtw_distance(std::vector<GeoPoint>{}, q), DataError);
}

TEST(Dtw, ExhaustiveAlignmentOracle) {
    Rng rng(37);
    for (std::size_t n = 1; n <= 6; ++n)
        for (std::size_t m = 1; m <= 6; ++m) {
            auto a = random_geo(n, rng), b = random_geo(m, rng);
            EXPECT_EQ(dtw_distance(a, b), dtw_bruteforce(a, b)) << n << "x" << m;
        }
}

TEST(Dtw, SymmetricForEqualLengths) {
    Rng rng(41);
    for (int i = 0; i < 20; ++i) {
        auto a = random_geo(8, rng), b = random_geo(8, rng);
        EXPECT_NEAR(dtw_distance(a, b), dtw_distance(b, a), 1e-9);
    }
}

TEST(Split, EightOneOne) {
    std::vector<Trajectory> ts;
    for (int i = 0; i < 10; ++i) ts.push_back(make_traj({{0, 0, 0, 100 * i}}, i));
    auto s = chronological_split(ts);
    EXPECT_EQ(s.train.size(), 8u);
    EXPECT_EQ(s.valid.size(), 1u);
    EXPECT_EQ(s.test.size(), 1u);
    for (int i = 0; i < 8; ++i) EXPECT_EQ(s.train[i].id, i);
}

TEST(Split, ShuffledInputIsChronological) {
    std::vector<Trajectory> ts;
    Rng rng(43);
    for (int i = 0; i < 200; ++i) ts.push_back(make_traj({{0, 0, 0, static_cast<std::int64_t>(rng() % 100000)}}, i));
    auto s = chronological_split(ts);
    std::int64_t max_train = 0, min_valid = INT64_MAX, max_valid = 0, min_test = INT64_MAX;
    for (const auto& t : s.train) max_train = std::max(max_train, t.departure());
    for (const auto& t : s.valid) {
        min_valid = std::min(min_valid, t.departure());
        max_valid = std::max(max_valid, t.departure());
    }
    for (const auto& t : s.test) min_test = std::min(min_test, t.departure());
    EXPECT_LE(max_train, min_valid);
    EXPECT_LE(max_valid, min_test);
    EXPECT_EQ(s.train.size() + s.valid.size() + s.test.size(), 200u);
}

TEST(Calendar, KnownTimestamp) {
    // 2018-10-01 08:30:00 UTC was a Monday.
    auto c = calendar_time(1538352000 + 8 * 3600 + 30 * 60);
    EXPECT_EQ(c.day_of_week, 0.0);
    EXPECT_EQ(c.hour, 8.0);
    EXPECT_EQ(c.minute, 30.0);
    EXPECT_EQ(c.minute_of_day, 510.0);
}

TEST(SyntheticWorld, GridArithmetic) {
    WorldConfig cfg;
    cfg.rows = 2;
    cfg.cols = 2;
    cfg.poi_count = 50;
    auto w = generate_synthetic_world(cfg);
    EXPECT_EQ(w.network.nodes.size(), 4u);
    EXPECT_EQ(w.network.edges.size(), 8u);
    for (std::size_t e = 0; e < 8; e += 2) {
        EXPECT_EQ(w.network.edges[e].from, w.network.edges[e + 1].to);
        EXPECT_EQ(w.network.edges[e].to, w.network.edges[e + 1].from);
    }
    ASSERT_EQ(w.pois.size(), 50u);
    double lo_lng = 1e9, hi_lng = -1e9, lo_lat = 1e9, hi_lat = -1e9;
    for (const auto& n : w.network.nodes) {
        lo_lng = std::min(lo_lng, n.lng), hi_lng = std::max(hi_lng, n.lng);
        lo_lat = std::min(lo_lat, n.lat), hi_lat = std::max(hi_lat, n.lat);
    }
    for (const auto& p : w.pois) {
        EXPECT_GE(p.lng, lo_lng);
        EXPECT_LE(p.lng, hi_lng);
        EXPECT_GE(p.lat, lo_lat);
        EXPECT_LE(p.lat, hi_lat);
    }
}

TEST(SyntheticWorld, DescriptionsAndAdjacency) {
    auto w = generate_synthetic_world({});
    EXPECT_EQ(w.network.edges.size(), 2u * (8 * 7 + 8 * 7));
    for (const auto& e : w.network.edges) {
        bool known = e.description.rfind("expressway", 0) == 0 || e.description.rfind("arterial", 0) == 0 ||
                     e.description.rfind("residential", 0) == 0;
        EXPECT_TRUE(known) << e.description;
        for (auto nb : w.network.adjacency[e.id]) {
            const auto& o = w.network.edges[nb];
            bool shares = o.from == e.from || o.from == e.to || o.to == e.from || o.to == e.to;
            EXPECT_TRUE(shares);
        }
    }
    for (const auto& p : w.pois) {
        bool typed = p.description.find("market") != std::string::npos || p.description.find("park") != std::string::npos ||
                     p.description.find("office") != std::string::npos || p.description.find("home") != std::string::npos;
        EXPECT_TRUE(typed) << p.description;
    }
}

TEST(SyntheticWorld, Deterministic) {
    auto a = generate_synthetic_world({});
    auto b = generate_synthetic_world({});
    ASSERT_EQ(a.pois.size(), b.pois.size());
    for (std::size_t i = 0; i < a.pois.size(); ++i) {
        EXPECT_EQ(a.pois[i].lng, b.pois[i].lng);
        EXPECT_EQ(a.pois[i].description, b.pois[i].description);
    }
    for (std::size_t i = 0; i < a.network.edges.size(); ++i)
        EXPECT_EQ(a.network.edges[i].description, b.network.edges[i].description);
    WorldConfig bad;
    bad.rows = 1;
    EXPECT_THROW(generate_synthetic_world(bad), UsageError);
}

TEST(SyntheticTrajectories, Constraints) {
    auto w = generate_synthetic_world({});
    TrajectoryConfig tc;
    tc.count = 600;
    auto trajs = generate_trajectories(w, tc);
    ASSERT_EQ(trajs.size(), 600u);
    for (const auto& t : trajs) {
        EXPECT_GE(t.size(), kMinTrajectoryLength);
        EXPECT_LE(t.size(), kMaxTrajectoryLength);
        for (std::size_t i = 1; i < t.size(); ++i) EXPECT_GE(t.points[i].t - t.points[i - 1].t, 6);
        EXPECT_NO_THROW(validate_trajectory(t, w.network, true));
    }
}

TEST(SyntheticTrajectories, SharedOdCounting) {
    auto w = generate_synthetic_world({});
    TrajectoryConfig tc;
    tc.count = 1000;
    auto trajs = generate_trajectories(w, tc);
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> od;
    for (const auto& t : trajs) ++od[{t.points.front().road, t.points.back().road}];
    std::size_t with_partner = 0;
    for (const auto& t : trajs)
        if (od[{t.points.front().road, t.points.back().road}] >= 2) ++with_partner;
    EXPECT_GE(static_cast<double>(with_partner) / static_cast<double>(trajs.size()), 0.25);
}

TEST(SyntheticTrajectories, Deterministic) {
    auto w = generate_synthetic_world({});
    TrajectoryConfig tc;
    tc.count = 50;
    auto a = generate_trajectories(w, tc), b = generate_trajectories(w, tc);
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].size(), b[i].size());
        for (std::size_t j = 0; j < a[i].size(); ++j) {
            EXPECT_EQ(a[i].points[j].lng, b[i].points[j].lng);
            EXPECT_EQ(a[i].points[j].t, b[i].points[j].t);
        }
    }
}

TEST(Fourier, ZeroValue) {
    Rng rng(1);
    auto f = normal_tensor<double>({1, 4}, 1.0, rng);
    auto out = fourier_time_encode(Tensor<double>::zeros({1, 1}), f);
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_EQ(out.at(0, j), 0.0);
        EXPECT_EQ(out.at(0, 4 + j), 1.0);
    }
}

TEST(Fourier, ScaleSymmetry) {
    auto v = Tensor<double>::from({2, 1}, {1.5, -3.0});
    auto v2 = Tensor<double>::from({2, 1}, {3.0, -6.0});
    auto f = Tensor<double>::from({1, 3}, {0.4, 1.0, 2.5});
    auto f2 = Tensor<double>::from({1, 3}, {0.2, 0.5, 1.25});
    auto a = fourier_time_encode(v, f), b = fourier_time_encode(v2, f2);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
}

TEST(Fourier, FrequencyGradientMatchesFiniteDifferences) {
    Rng rng(2);
    ParameterSet<double> ps;
    auto f = normal_tensor<double>({1, 5}, 0.5, rng);
    ps.add("freq", f);
    auto v = Tensor<double>::from({3, 1}, {0.3, 1.7, -2.2});
    auto w = normal_tensor<double>({10, 1}, 1.0, rng, false);
    auto report = finite_difference_check([&] { return sum_all(matmul(fourier_time_encode(v, f), w)); }, ps);
    EXPECT_TRUE(report.passed()) << report.max_rel_error();
}

class EmbedderTest : public ::testing::Test {
  protected:
    void SetUp() override {
        world = generate_synthetic_world({});
        Rng rng(9);
        FeatureConfig fc;
        fc.embed_dim = 16;
        fc.fourier_dim = 4;
        emb = FeatureEmbedder<float>(fc, world.network, rng);
    }
    World world;
    FeatureEmbedder<float> emb;
};

TEST_F(EmbedderTest, ShapesOnSixPoints) {
    TrajectoryConfig tc;
    tc.count = 20;
    auto trajs = generate_trajectories(world, tc);
    auto t = trajs[0];
    t.points.resize(6);
    auto b = emb(t);
    EXPECT_EQ(b.z_g.shape(), (Shape{6, 8}));
    EXPECT_EQ(b.z_r.shape(), (Shape{6, 8}));
    EXPECT_EQ(b.s.shape(), (Shape{6, 3}));
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(b.s.at(5, c), 0.0f);
}

TEST_F(EmbedderTest, FirstDurationFeatureIsZero) {
    TrajectoryConfig tc;
    tc.count = 5;
    auto in = extract_point_inputs(generate_trajectories(world, tc)[0]);
    EXPECT_EQ(in.delta_minutes[0], 0.0);
}

TEST_F(EmbedderTest, SameRoadAndMinuteGiveSameRoadLatent) {
    // 08:15:05 and 08:15:50 on the same Monday share every cyclic feature.
    const std::int64_t base = 1538352000 + 8 * 3600 + 15 * 60;
    auto t = make_traj({{104.04, 30.64, 3, base + 5}, {104.041, 30.64, 3, base + 50}, {104.042, 30.64, 4, base + 70}});
    auto b = emb(t);
    for (std::size_t j = 0; j < b.z_r.dim(1); ++j) EXPECT_EQ(b.z_r.at(0, j), b.z_r.at(1, j));
}

TEST_F(EmbedderTest, UnknownRoadRejected) {
    auto t = make_traj({{104.04, 30.64, 9999, 0}, {104.041, 30.64, 0, 10}});
    EXPECT_THROW(emb(t), DataError);
}

TEST_F(EmbedderTest, NoNanOnSyntheticSet) {
    TrajectoryConfig tc;
    tc.count = 300;
    for (const auto& t : generate_trajectories(world, tc)) {
        auto b = emb(t);
        for (const auto* x : {&b.z_g, &b.z_r, &b.s})
            for (float v : x->data()) ASSERT_TRUE(std::isfinite(v));
        for (float v : b.s.data()) {
            ASSERT_GE(v, 0.0f);
            ASSERT_LE(v, 1.0f);
        }
    }
}

TEST_F(EmbedderTest, ParameterRegistry) {
    ParameterSet<float> ps;
    emb.collect(ps, "embed");
    EXPECT_EQ(ps.buffers.size(), 1u);
    bool has_table = false;
    for (const auto& [name, t] : ps.params)
        if (name == "embed.road_idx.table") {
            has_table = true;
            EXPECT_EQ(t.dim(0), world.network.edge_count());
        }
    EXPECT_TRUE(has_table);
}

TEST(Io, RoundTrip) {
    auto dir = std::filesystem::temp_directory_path() / "trajmamba_io_test";
    std::filesystem::remove_all(dir);
    auto w = generate_synthetic_world({});
    TrajectoryConfig tc;
    tc.count = 10;
    auto trajs = generate_trajectories(w, tc);
    write_road_network(dir / "network.json", w.network);
    write_pois(dir / "pois.jsonl", w.pois);
    write_trajectories(dir / "trajs.jsonl", trajs);
    auto net = read_road_network(dir / "network.json");
    auto pois = read_pois(dir / "pois.jsonl");
    auto back = read_trajectories(dir / "trajs.jsonl");
    ASSERT_EQ(net.edges.size(), w.network.edges.size());
    EXPECT_EQ(net.edges[5].description, w.network.edges[5].description);
    EXPECT_EQ(net.nodes[7].lng, w.network.nodes[7].lng);
    EXPECT_EQ(net.adjacency, w.network.adjacency);
    ASSERT_EQ(pois.size(), w.pois.size());
    EXPECT_EQ(pois[3].lat, w.pois[3].lat);
    ASSERT_EQ(back.size(), trajs.size());
    EXPECT_EQ(back[4].points[2].lng, trajs[4].points[2].lng);
    EXPECT_EQ(back[4].points[2].t, trajs[4].points[2].t);

    std::ofstream(dir / "bad.jsonl") << "{\"id\": 0, \"points\": [\n";
    EXPECT_THROW(read_trajectories(dir / "bad.jsonl"), DataError);
    EXPECT_THROW(read_trajectories(dir / "missing.jsonl"), DataError);
    std::filesystem::remove_all(dir);
}
