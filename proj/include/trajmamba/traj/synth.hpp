#pragma once

// Desk-scale synthetic city: a grid road network with templated road and POI
// descriptions, and taxi-like trips with stops, steady cruising and shared
// origin/destination routes.

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "trajmamba/grad/nn.hpp"
#include "trajmamba/traj/geo.hpp"

namespace trajmamba {

struct WorldConfig {
    std::size_t rows = 8;
    std::size_t cols = 8;
    std::size_t poi_count = 120;
    double origin_lng = 104.04;
    double origin_lat = 30.64;
    double spacing_m = 450.0;
    std::uint64_t seed = 7;
};

struct TrajectoryConfig {
    std::size_t count = 2000;
    double od_share = 0.3;         // fraction of trips that replay an earlier route
    std::size_t min_edges = 3;
    std::size_t max_edges = 10;
    double stop_probability = 0.3;  // per intersection
    std::int64_t min_interval_s = 6;
    std::int64_t max_interval_s = 20;
    std::int64_t epoch_start = 1538352000;  // 2018-10-01 00:00:00 UTC
    std::size_t days = 30;
    std::uint64_t seed = 11;
};

namespace synth_detail {

inline const std::array<const char*, 16>& street_names() {
    static const std::array<const char*, 16> names{
        "Jinli", "Tianfu", "Wuhou", "Qingyang", "Shuangliu", "Chunxi", "Renmin", "Jiefang",
        "Kehua", "Yulin", "Hongxing", "Taisheng", "Wenshu", "Dongda", "Shawan", "Guanghua"};
    return names;
}

inline const std::array<const char*, 12>& poi_names() {
    static const std::array<const char*, 12> names{
        "Golden", "Lotus", "Panda", "Riverside", "Bamboo", "Jade", "Sunrise", "Maple", "Harbor", "Silk", "Cedar", "Pearl"};
    return names;
}

struct RoadClass {
    const char* name;
    double speed_mps;
};

inline RoadClass road_class(std::size_t line) {
    if (line % 4 == 0) return {"expressway", 16.0};
    if (line % 2 == 0) return {"arterial", 10.0};
    return {"residential", 6.0};
}

}  // namespace synth_detail

/// Grid network with rows x cols intersections; every street block is stored
/// as two directed edges with consecutive ids. POIs sit near random
/// intersections inside the grid bounding box.
inline World generate_synthetic_world(const WorldConfig& cfg) {
    if (cfg.rows < 2 || cfg.cols < 2) throw UsageError("generate_synthetic_world: rows and cols must be >= 2");
    Rng rng(cfg.seed);
    World w;
    auto& net = w.network;
    const double dlat = cfg.spacing_m / (deg2rad(1.0) * kEarthRadiusM);
    const double dlng = dlat / std::cos(deg2rad(cfg.origin_lat));
    for (std::size_t r = 0; r < cfg.rows; ++r)
        for (std::size_t c = 0; c < cfg.cols; ++c)
            net.nodes.push_back({r * cfg.cols + c, cfg.origin_lng + static_cast<double>(c) * dlng,
                                 cfg.origin_lat + static_cast<double>(r) * dlat});

    // Street names per grid line, shuffled under the seed.
    const auto& names = synth_detail::street_names();
    std::vector<std::size_t> order(names.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    auto line_name = [&](bool horizontal, std::size_t line) {
        std::size_t k = horizontal ? line : cfg.rows + line;
        std::string base = names[order[k % names.size()]];
        if (k >= names.size()) base += " " + std::to_string(k / names.size() + 1);
        return base + (horizontal ? " Road" : " Avenue");
    };
    auto add_pair = [&](std::size_t a, std::size_t b, bool horizontal, std::size_t line, std::size_t block) {
        const auto cls = synth_detail::road_class(line);
        const std::string base = std::string(cls.name) + " " + line_name(horizontal, line) + " block " +
                                 std::to_string(block);
        const char* fwd = horizontal ? "eastbound" : "northbound";
        const char* bwd = horizontal ? "westbound" : "southbound";
        net.edges.push_back({net.edges.size(), a, b, base + " " + fwd});
        net.edges.push_back({net.edges.size(), b, a, base + " " + bwd});
    };
    for (std::size_t r = 0; r < cfg.rows; ++r)
        for (std::size_t c = 0; c + 1 < cfg.cols; ++c) add_pair(r * cfg.cols + c, r * cfg.cols + c + 1, true, r, c);
    for (std::size_t c = 0; c < cfg.cols; ++c)
        for (std::size_t r = 0; r + 1 < cfg.rows; ++r) add_pair(r * cfg.cols + c, (r + 1) * cfg.cols + c, false, c, r);
    net.validate();

    const std::array<const char*, 4> types{"market", "park", "office", "home"};
    const std::array<const char*, 4> flavors{"fresh food and daily goods", "green space for walking and leisure",
                                             "business towers and workplaces", "residential compound and apartments"};
    std::uniform_int_distribution<std::size_t> pick_node(0, net.nodes.size() - 1);
    std::uniform_real_distribution<double> jitter(-0.35, 0.35);
    const double min_lng = cfg.origin_lng, max_lng = cfg.origin_lng + static_cast<double>(cfg.cols - 1) * dlng;
    const double min_lat = cfg.origin_lat, max_lat = cfg.origin_lat + static_cast<double>(cfg.rows - 1) * dlat;
    for (std::size_t i = 0; i < cfg.poi_count; ++i) {
        const auto& node = net.nodes[pick_node(rng)];
        const std::size_t type = rng() % types.size();
        const std::size_t nm = rng() % synth_detail::poi_names().size();
        Poi p;
        p.id = i;
        p.lng = std::clamp(node.lng + jitter(rng) * dlng, min_lng, max_lng);
        p.lat = std::clamp(node.lat + jitter(rng) * dlat, min_lat, max_lat);
        p.description = std::string(synth_detail::poi_names()[nm]) + " " + types[type] + " with " + flavors[type];
        w.pois.push_back(std::move(p));
    }
    return w;
}

namespace synth_detail {

inline std::vector<std::size_t> random_route(const RoadNetwork& net, std::size_t edges, Rng& rng) {
    std::vector<std::vector<std::size_t>> out_edges(net.nodes.size());
    for (const auto& e : net.edges) out_edges[e.from].push_back(e.id);
    std::size_t node = rng() % net.nodes.size();
    std::size_t prev_node = net.nodes.size();
    std::vector<std::size_t> route;
    for (std::size_t k = 0; k < edges; ++k) {
        std::vector<std::size_t> options;
        for (auto e : out_edges[node])
            if (net.edges[e].to != prev_node) options.push_back(e);
        if (options.empty()) options = out_edges[node];
        const auto e = options[rng() % options.size()];
        route.push_back(e);
        prev_node = node;
        node = net.edges[e].to;
    }
    return route;
}

struct Phase {
    double start = 0, duration = 0;
    std::size_t edge = 0;
    bool moving = true;
};

/// Samples a trip along `route`: constant per-edge cruise speed (class speed
/// with noise), optional stops at intersections, sampling every
/// [min_interval, max_interval] seconds.
inline Trajectory drive(const RoadNetwork& net, const std::vector<std::size_t>& route, std::int64_t depart,
                        const TrajectoryConfig& cfg, Rng& rng) {
    std::uniform_real_distribution<double> noise(0.8, 1.2);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::int64_t> stop_len(20, 90);
    std::uniform_int_distribution<std::int64_t> interval(cfg.min_interval_s, cfg.max_interval_s);
    std::vector<Phase> phases;
    double t = 0;
    for (std::size_t k = 0; k < route.size(); ++k) {
        const auto& e = net.edges[route[k]];
        const auto& a = net.nodes[e.from];
        const auto& b = net.nodes[e.to];
        const double len = haversine({a.lng, a.lat}, {b.lng, b.lat});
        // Road class is encoded in the description's first word.
        double speed = 6.0;
        if (e.description.rfind("expressway", 0) == 0) speed = 16.0;
        else if (e.description.rfind("arterial", 0) == 0) speed = 10.0;
        speed *= noise(rng);
        phases.push_back({t, len / speed, e.id, true});
        t += len / speed;
        if (k + 1 < route.size() && unit(rng) < cfg.stop_probability) {
            const auto d = static_cast<double>(stop_len(rng));
            phases.push_back({t, d, e.id, false});
            t += d;
        }
    }
    const double total = t;
    std::vector<double> times{0.0};
    while (true) {
        double next = times.back() + static_cast<double>(interval(rng));
        if (next >= total) break;
        times.push_back(next);
    }
    const double end = std::ceil(total);
    if (end - times.back() < static_cast<double>(cfg.min_interval_s)) times.back() = end;
    else times.push_back(end);

    Trajectory traj;
    std::size_t ph = 0;
    for (double s : times) {
        while (ph + 1 < phases.size() && s >= phases[ph].start + phases[ph].duration) ++ph;
        const auto& p = phases[ph];
        const auto& e = net.edges[p.edge];
        const auto& a = net.nodes[e.from];
        const auto& b = net.nodes[e.to];
        double frac = p.moving ? std::clamp((s - p.start) / p.duration, 0.0, 1.0) : 1.0;
        TrajPoint pt;
        pt.lng = a.lng + frac * (b.lng - a.lng);
        pt.lat = a.lat + frac * (b.lat - a.lat);
        pt.road = e.id;
        pt.t = depart + static_cast<std::int64_t>(s);
        traj.points.push_back(pt);
    }
    return traj;
}

inline std::int64_t departure_time(const TrajectoryConfig& cfg, Rng& rng) {
    // Two commute peaks plus a uniform background.
    std::uniform_int_distribution<std::size_t> day(0, cfg.days - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> am(8.5 * 3600, 3600), pm(18.0 * 3600, 3600);
    double u = unit(rng);
    double sec = u < 0.35 ? am(rng) : (u < 0.7 ? pm(rng) : unit(rng) * 86400.0);
    sec = std::clamp(sec, 0.0, 86399.0);
    return cfg.epoch_start + static_cast<std::int64_t>(day(rng)) * 86400 + static_cast<std::int64_t>(sec);
}

}  // namespace synth_detail

/// Trips of length [5, 120] with sampling intervals >= min_interval_s. A
/// share of trips replays the route of an earlier trip (same origin and
/// destination segments, different timing).
inline std::vector<Trajectory> generate_trajectories(const World& world, const TrajectoryConfig& cfg) {
    Rng rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> edges(cfg.min_edges, cfg.max_edges);
    std::vector<std::vector<std::size_t>> routes;
    std::vector<Trajectory> out;
    while (out.size() < cfg.count) {
        std::vector<std::size_t> route;
        if (!routes.empty() && unit(rng) < cfg.od_share) {
            route = routes[rng() % routes.size()];
        } else {
            route = synth_detail::random_route(world.network, edges(rng), rng);
        }
        auto depart = synth_detail::departure_time(cfg, rng);
        auto traj = synth_detail::drive(world.network, route, depart, cfg, rng);
        if (traj.size() < kMinTrajectoryLength) continue;
        if (traj.size() > kMaxTrajectoryLength) traj.points.resize(kMaxTrajectoryLength);
        traj.id = static_cast<std::int64_t>(out.size());
        routes.push_back(route);
        out.push_back(std::move(traj));
    }
    return out;
}

}  // namespace trajmamba
