#pragma once

// File formats:
//   trajectories  JSON lines {"id": int, "points": [{"lng", "lat", "road", "t"}]}
//   road network  JSON {"nodes": [[id, lng, lat]], "edges": [[id, from, to, "description"]]}
//   POIs          JSON lines {"id": int, "lng": f, "lat": f, "desc": "text"}

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "trajmamba/traj/types.hpp"

namespace trajmamba {

namespace io_detail {

inline std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

template <typename F>
void for_each_json_line(const std::filesystem::path& path, F&& f) {
    auto in = open_in(path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            f(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

}  // namespace io_detail

inline nlohmann::json trajectory_to_json(const Trajectory& t) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : t.points) pts.push_back({{"lng", p.lng}, {"lat", p.lat}, {"road", p.road}, {"t", p.t}});
    return {{"id", t.id}, {"points", std::move(pts)}};
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
    Trajectory t;
    t.id = j.at("id").get<std::int64_t>();
    for (const auto& p : j.at("points")) {
        t.points.push_back({p.at("lng").get<double>(), p.at("lat").get<double>(), p.at("road").get<std::size_t>(),
                            p.at("t").get<std::int64_t>()});
    }
    return t;
}

inline void write_trajectories(const std::filesystem::path& path, const std::vector<Trajectory>& trajs) {
    auto out = io_detail::open_out(path);
    for (const auto& t : trajs) out << trajectory_to_json(t).dump() << '\n';
}

inline std::vector<Trajectory> read_trajectories(const std::filesystem::path& path) {
    std::vector<Trajectory> out;
    io_detail::for_each_json_line(path, [&](const nlohmann::json& j) { out.push_back(trajectory_from_json(j)); });
    return out;
}

inline void write_road_network(const std::filesystem::path& path, const RoadNetwork& net) {
    nlohmann::json j;
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : net.nodes) j["nodes"].push_back({n.id, n.lng, n.lat});
    j["edges"] = nlohmann::json::array();
    for (const auto& e : net.edges) j["edges"].push_back({e.id, e.from, e.to, e.description});
    io_detail::open_out(path) << j.dump() << '\n';
}

inline RoadNetwork read_road_network(const std::filesystem::path& path) {
    auto in = io_detail::open_in(path);
    RoadNetwork net;
    try {
        auto j = nlohmann::json::parse(in);
        for (const auto& n : j.at("nodes"))
            net.nodes.push_back({n.at(0).get<std::size_t>(), n.at(1).get<double>(), n.at(2).get<double>()});
        for (const auto& e : j.at("edges"))
            net.edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), e.at(2).get<std::size_t>(),
                                 e.at(3).get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    net.validate();
    return net;
}

inline void write_pois(const std::filesystem::path& path, const std::vector<Poi>& pois) {
    auto out = io_detail::open_out(path);
    for (const auto& p : pois)
        out << nlohmann::json{{"id", p.id}, {"lng", p.lng}, {"lat", p.lat}, {"desc", p.description}}.dump() << '\n';
}

inline std::vector<Poi> read_pois(const std::filesystem::path& path) {
    std::vector<Poi> out;
    io_detail::for_each_json_line(path, [&](const nlohmann::json& j) {
        out.push_back({j.at("id").get<std::size_t>(), j.at("lng").get<double>(), j.at("lat").get<double>(),
                       j.at("desc").get<std::string>()});
    });
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out[i].id != i) throw DataError(path.string() + ": POI ids must be dense and 0-based");
    return out;
}

}  // namespace trajmamba
