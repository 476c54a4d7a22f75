#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "trajmamba/grad/error.hpp"

namespace trajmamba {

struct GeoPoint {
    double lng = 0.0;  // degrees
    double lat = 0.0;  // degrees
};

struct TrajPoint {
    double lng = 0.0;
    double lat = 0.0;
    std::size_t road = 0;  // edge id in the road network
    std::int64_t t = 0;    // seconds since epoch

    GeoPoint geo() const { return {lng, lat}; }
};

struct Trajectory {
    std::int64_t id = 0;
    std::vector<TrajPoint> points;

    std::size_t size() const { return points.size(); }
    std::int64_t departure() const { return points.front().t; }
};

struct RoadNode {
    std::size_t id = 0;
    double lng = 0.0;
    double lat = 0.0;
};

struct RoadEdge {
    std::size_t id = 0;
    std::size_t from = 0;
    std::size_t to = 0;
    std::string description;
};

struct Poi {
    std::size_t id = 0;
    double lng = 0.0;
    double lat = 0.0;
    std::string description;
};

/// Directed road graph. `adjacency[e]` holds every edge sharing an endpoint
/// with e (direction ignored), excluding e itself.
struct RoadNetwork {
    std::vector<RoadNode> nodes;
    std::vector<RoadEdge> edges;
    std::vector<std::vector<std::size_t>> adjacency;

    std::size_t edge_count() const { return edges.size(); }

    void build_adjacency() {
        std::vector<std::vector<std::size_t>> incident(nodes.size());
        for (const auto& e : edges) {
            incident[e.from].push_back(e.id);
            incident[e.to].push_back(e.id);
        }
        adjacency.assign(edges.size(), {});
        for (const auto& e : edges) {
            std::set<std::size_t> nb;
            for (auto node : {e.from, e.to})
                for (auto other : incident[node])
                    if (other != e.id) nb.insert(other);
            adjacency[e.id].assign(nb.begin(), nb.end());
        }
    }

    /// Checks dense ids and endpoint references, then rebuilds adjacency.
    void validate() {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i].id != i) throw DataError("road network: node ids must be dense and 0-based");
        for (std::size_t i = 0; i < edges.size(); ++i) {
            if (edges[i].id != i) throw DataError("road network: edge ids must be dense and 0-based");
            if (edges[i].from >= nodes.size() || edges[i].to >= nodes.size()) {
                throw DataError("road network: edge " + std::to_string(i) + " references a missing node");
            }
        }
        build_adjacency();
    }

    GeoPoint node_geo(std::size_t id) const { return {nodes[id].lng, nodes[id].lat}; }
};

struct World {
    RoadNetwork network;
    std::vector<Poi> pois;
};

/// Bounds from the data section of the trajectory definition.
inline constexpr std::size_t kMinTrajectoryLength = 5;
inline constexpr std::size_t kMaxTrajectoryLength = 120;

/// Strictly increasing timestamps and known road ids; optionally the length
/// bounds applied after preprocessing.
inline void validate_trajectory(const Trajectory& traj, const RoadNetwork& net, bool check_length) {
    if (traj.points.empty()) throw DataError("trajectory " + std::to_string(traj.id) + " is empty");
    if (check_length && (traj.size() < kMinTrajectoryLength || traj.size() > kMaxTrajectoryLength)) {
        throw DataError("trajectory " + std::to_string(traj.id) + " has length " + std::to_string(traj.size()) +
                        " outside [5, 120]");
    }
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const auto& p = traj.points[i];
        if (p.road >= net.edge_count()) {
            throw DataError("trajectory " + std::to_string(traj.id) + ": unknown road id " + std::to_string(p.road));
        }
        if (p.lng < -180 || p.lng > 180 || p.lat < -90 || p.lat > 90) {
            throw DataError("trajectory " + std::to_string(traj.id) + ": coordinate out of range");
        }
        if (i > 0 && p.t <= traj.points[i - 1].t) {
            throw DataError("trajectory " + std::to_string(traj.id) + ": timestamps not strictly increasing");
        }
    }
}

}  // namespace trajmamba
