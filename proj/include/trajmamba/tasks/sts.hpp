#pragma once

// Similar trajectory search: ground-truth construction from same-OD
// trajectories, and cosine ranking over a query's database.

#include <algorithm>
#include <map>
#include <numeric>
#include <span>

#include "trajmamba/grad/nn.hpp"
#include "trajmamba/tasks/metrics.hpp"
#include "trajmamba/traj/geo.hpp"

namespace trajmamba {

struct StsConfig {
    std::size_t negatives = 5000;
    double exclude_radius_m = 500.0;
    std::uint64_t seed = 13;
};

/// Query and target are either two pool trajectories, or (self pair) the
/// odd- and even-numbered halves of one pool trajectory. Indices refer to
/// the pool passed to sts_build_labels.
struct StsInstance {
    std::size_t query = 0;
    std::size_t target = 0;
    bool self_pair = false;
    std::vector<std::size_t> negatives;
};

/// Points 1, 3, 5, ... and points 2, 4, 6, ... (1-based numbering).
inline std::pair<Trajectory, Trajectory> odd_even_halves(const Trajectory& traj) {
    Trajectory odd, even;
    odd.id = even.id = traj.id;
    for (std::size_t i = 0; i < traj.points.size(); ++i) (i % 2 == 0 ? odd : even).points.push_back(traj.points[i]);
    return {odd, even};
}

struct PairDifference {
    double dtw_m = 0.0;
    double road_diff = 0.0;  // size of the symmetric difference of the road sets
};

inline PairDifference pair_difference(const Trajectory& a, const Trajectory& b) {
    const auto ga = geo_sequence(a), gb = geo_sequence(b);
    std::vector<std::size_t> ra, rb, sym;
    for (const auto& p : a.points) ra.push_back(p.road);
    for (const auto& p : b.points) rb.push_back(p.road);
    std::sort(ra.begin(), ra.end());
    std::sort(rb.begin(), rb.end());
    ra.erase(std::unique(ra.begin(), ra.end()), ra.end());
    rb.erase(std::unique(rb.begin(), rb.end()), rb.end());
    std::set_symmetric_difference(ra.begin(), ra.end(), rb.begin(), rb.end(), std::back_inserter(sym));
    return {dtw_distance(ga, gb), static_cast<double>(sym.size())};
}

/// Min-max normalized DTW plus min-max normalized road difference, over the
/// given set. A constant column normalizes to 0.
inline std::vector<double> combined_scores(const std::vector<PairDifference>& diffs) {
    auto column = [&](auto get) {
        double lo = get(diffs.front()), hi = lo;
        for (const auto& d : diffs) {
            lo = std::min(lo, get(d));
            hi = std::max(hi, get(d));
        }
        std::vector<double> out;
        for (const auto& d : diffs) out.push_back(hi > lo ? (get(d) - lo) / (hi - lo) : 0.0);
        return out;
    };
    auto a = column([](const PairDifference& d) { return d.dtw_m; });
    auto b = column([](const PairDifference& d) { return d.road_diff; });
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

/// True when both origins and both destinations are at least `radius_m` apart.
inline bool od_far_apart(const Trajectory& a, const Trajectory& b, double radius_m) {
    return haversine(a.points.front().geo(), b.points.front().geo()) >= radius_m &&
           haversine(a.points.back().geo(), b.points.back().geo()) >= radius_m;
}

/// Builds one instance per pool trajectory. Candidates share the first and
/// last road segment with the query. The best candidate wins over the
/// odd/even benchmark when its score is lower or equal.
inline std::vector<StsInstance> sts_build_labels(const std::vector<Trajectory>& pool, const StsConfig& cfg) {
    if (pool.empty()) throw DataError("sts: empty test pool");
    if (pool.size() < cfg.negatives + 2)
        throw DataError("sts: " + std::to_string(cfg.negatives) + " negatives need at least " +
                        std::to_string(cfg.negatives + 2) + " test trajectories, have " + std::to_string(pool.size()));
    std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> by_od;
    for (std::size_t i = 0; i < pool.size(); ++i)
        by_od[{pool[i].points.front().road, pool[i].points.back().road}].push_back(i);

    std::vector<StsInstance> out;
    for (std::size_t q = 0; q < pool.size(); ++q) {
        const auto& t = pool[q];
        StsInstance inst;
        inst.query = q;
        inst.target = q;
        inst.self_pair = true;
        std::vector<std::size_t> cands;
        for (auto j : by_od.at({t.points.front().road, t.points.back().road}))
            if (j != q) cands.push_back(j);
        if (!cands.empty()) {
            std::vector<PairDifference> diffs;
            for (auto j : cands) diffs.push_back(pair_difference(t, pool[j]));
            const auto [odd, even] = odd_even_halves(t);
            diffs.push_back(pair_difference(odd, even));
            const auto s = combined_scores(diffs);
            const double bench = s.back();
            std::size_t best = 0;
            for (std::size_t k = 1; k < cands.size(); ++k)
                if (s[k] < s[best]) best = k;
            if (s[best] <= bench) {
                inst.target = cands[best];
                inst.self_pair = false;
            }
        }
        std::vector<std::size_t> eligible;
        for (std::size_t j = 0; j < pool.size(); ++j)
            if (j != q && j != inst.target && od_far_apart(t, pool[j], cfg.exclude_radius_m)) eligible.push_back(j);
        if (eligible.size() < cfg.negatives)
            throw DataError("sts: trajectory " + std::to_string(t.id) + " has " + std::to_string(eligible.size()) +
                            " trajectories with OD at least " + std::to_string(cfg.exclude_radius_m) +
                            " m away, needs " + std::to_string(cfg.negatives));
        std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                          static_cast<std::uint32_t>(q)};
        Rng rng(seq);
        std::shuffle(eligible.begin(), eligible.end(), rng);
        eligible.resize(cfg.negatives);
        inst.negatives = std::move(eligible);
        out.push_back(std::move(inst));
    }
    return out;
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return na > 0.0 && nb > 0.0 ? dot / std::sqrt(na * nb) : 0.0;
}

/// Database ids ordered by descending cosine similarity to the query, ties
/// broken by ascending id.
inline std::vector<std::int64_t> sts_search(const std::vector<double>& query, const std::vector<std::vector<double>>& db,
                                            const std::vector<std::int64_t>& ids) {
    if (db.empty()) throw DataError("sts_search: empty database");
    if (db.size() != ids.size()) throw ShapeError("sts_search: database and id list differ in length");
    std::vector<double> sim;
    for (const auto& v : db) {
        if (v.size() != query.size()) throw ShapeError("sts_search: embedding width mismatch");
        sim.push_back(cosine_similarity(query, v));
    }
    std::vector<std::size_t> order(db.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sim[a] != sim[b] ? sim[a] > sim[b] : ids[a] < ids[b];
    });
    std::vector<std::int64_t> out;
    for (auto i : order) out.push_back(ids[i]);
    return out;
}

}  // namespace trajmamba
