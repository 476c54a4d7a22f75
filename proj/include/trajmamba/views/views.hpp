#pragma once

// Road and POI views of a trajectory: textual embeddings of traversed
// segments and nearest POIs, refined by neighbor and origin/destination
// aggregation, then encoded by two small Mamba2 stacks.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "trajmamba/ssm/blocks.hpp"
#include "trajmamba/traj/geo.hpp"
#include "trajmamba/views/text_store.hpp"

namespace trajmamba {

/// Index of the POI closest to each point (haversine); ties go to the lowest id.
inline std::vector<std::size_t> nearest_poi(const Trajectory& traj, const std::vector<Poi>& pois) {
    if (pois.empty()) throw DataError("nearest_poi: no POIs");
    std::vector<std::size_t> out;
    out.reserve(traj.size());
    for (const auto& p : traj.points) {
        std::size_t best = 0;
        double best_d = haversine(p.geo(), {pois[0].lng, pois[0].lat});
        for (std::size_t j = 1; j < pois.size(); ++j) {
            const double d = haversine(p.geo(), {pois[j].lng, pois[j].lat});
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        out.push_back(best);
    }
    return out;
}

/// Empirical probability of moving from edge i to a different edge j.
struct TransitionTable {
    std::map<std::pair<std::size_t, std::size_t>, double> prob;

    double phi(std::size_t from, std::size_t to) const {
        auto it = prob.find({from, to});
        return it == prob.end() ? 0.0 : it->second;
    }
};

inline TransitionTable build_transition_table(const std::vector<Trajectory>& trajs) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> counts;
    std::map<std::size_t, std::size_t> totals;
    for (const auto& t : trajs)
        for (std::size_t i = 1; i < t.size(); ++i) {
            const auto a = t.points[i - 1].road, b = t.points[i].road;
            if (a == b) continue;
            ++counts[{a, b}];
            ++totals[a];
        }
    TransitionTable tt;
    for (const auto& [key, c] : counts)
        tt.prob[key] = static_cast<double>(c) / static_cast<double>(totals[key.first]);
    return tt;
}

struct PoiNeighbor {
    std::size_t id;
    double dist;
};

/// POIs within `radius_m` of each POI (itself excluded), closest `cap` kept,
/// ordered by distance then id.
inline std::vector<std::vector<PoiNeighbor>> poi_neighbors(const std::vector<Poi>& pois, double radius_m,
                                                           std::size_t cap) {
    std::vector<std::vector<PoiNeighbor>> out(pois.size());
    for (std::size_t i = 0; i < pois.size(); ++i) {
        for (std::size_t j = 0; j < pois.size(); ++j) {
            if (i == j) continue;
            const double d = haversine({pois[i].lng, pois[i].lat}, {pois[j].lng, pois[j].lat});
            if (d <= radius_m) out[i].push_back({j, d});
        }
        std::sort(out[i].begin(), out[i].end(), [](const PoiNeighbor& a, const PoiNeighbor& b) {
            return a.dist != b.dist ? a.dist < b.dist : a.id < b.id;
        });
        if (out[i].size() > cap) out[i].resize(cap);
    }
    return out;
}

/// f(d) = exp(-d / max d) over one neighbor set (before normalization).
inline std::vector<double> distance_decay(const std::vector<double>& dists) {
    double mx = 0.0;
    for (double d : dists) mx = std::max(mx, d);
    std::vector<double> f(dists.size());
    for (std::size_t i = 0; i < dists.size(); ++i) f[i] = mx > 0.0 ? std::exp(-dists[i] / mx) : 1.0;
    return f;
}

inline std::vector<double> l1_normalized(std::vector<double> v) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    if (s > 0.0)
        for (auto& x : v) x /= s;
    return v;
}

struct ViewConfig {
    std::size_t text_dim = 256;
    double alpha = 1.0;  // weight of the transition probability
    double beta = 0.5;   // weight of the POI distance term
    double poi_radius_m = 300.0;
    std::size_t max_poi_neighbors = 10;
    std::size_t state_dim = 16;
    std::size_t heads = 4;
    std::size_t stack_depth = 2;
    bool residual = true;  // ablation hook for the residual text path
};

/// Static neighbor structure of the world: flattened (center, neighbor)
/// pairs with their fixed side term, plus the text embedding tables.
struct ViewGraph {
    std::size_t roads = 0, pois = 0, text_dim = 0;
    std::vector<float> road_text, poi_text;  // [roads x text_dim], [pois x text_dim]
    std::vector<std::size_t> road_src, road_dst;
    std::vector<double> road_side;  // alpha * phi
    std::vector<std::size_t> poi_src, poi_dst;
    std::vector<double> poi_side;  // beta * L1norm(f(dist))
};

inline ViewGraph build_view_graph(const World& world, const TextEmbeddingStore& store, const TransitionTable& tt,
                                  const ViewConfig& cfg) {
    ViewGraph g;
    g.roads = world.network.edge_count();
    g.pois = world.pois.size();
    g.text_dim = store.dim();
    if (g.text_dim != cfg.text_dim)
        throw DataError("text embeddings have dim " + std::to_string(g.text_dim) + ", config expects " +
                        std::to_string(cfg.text_dim));
    for (const auto& e : world.network.edges) {
        const auto& v = store.get(e.description);
        g.road_text.insert(g.road_text.end(), v.begin(), v.end());
    }
    for (const auto& p : world.pois) {
        const auto& v = store.get(p.description);
        g.poi_text.insert(g.poi_text.end(), v.begin(), v.end());
    }
    for (std::size_t i = 0; i < g.roads; ++i)
        for (auto j : world.network.adjacency.at(i)) {
            g.road_src.push_back(i);
            g.road_dst.push_back(j);
            g.road_side.push_back(cfg.alpha * tt.phi(i, j));
        }
    const auto nbrs = poi_neighbors(world.pois, cfg.poi_radius_m, cfg.max_poi_neighbors);
    for (std::size_t i = 0; i < g.pois; ++i) {
        std::vector<double> d;
        for (const auto& nb : nbrs[i]) d.push_back(nb.dist);
        const auto f = l1_normalized(distance_decay(d));
        for (std::size_t k = 0; k < nbrs[i].size(); ++k) {
            g.poi_src.push_back(i);
            g.poi_dst.push_back(nbrs[i][k].id);
            g.poi_side.push_back(cfg.beta * f[k]);
        }
    }
    return g;
}

/// Per-trajectory view inputs: traversed roads, nearest POIs and the
/// destination weight w_d = dt_i / dt_n (w_o = 1 - w_d).
struct TrajViewInputs {
    std::vector<std::size_t> roads, pois;
    std::vector<double> w_d;

    std::size_t size() const { return roads.size(); }
};

inline TrajViewInputs view_inputs(const Trajectory& traj, const World& world) {
    if (traj.size() == 0) throw DataError("view_inputs: empty trajectory");
    TrajViewInputs v;
    v.pois = nearest_poi(traj, world.pois);
    const auto t0 = traj.points.front().t;
    const auto span = static_cast<double>(traj.points.back().t - t0);
    for (const auto& p : traj.points) {
        if (p.road >= world.network.edge_count()) throw DataError("view_inputs: unknown road id " + std::to_string(p.road));
        v.roads.push_back(p.road);
        v.w_d.push_back(span > 0.0 ? static_cast<double>(p.t - t0) / span : 0.0);
    }
    return v;
}

template <typename T>
Tensor<T> constant_column(const std::vector<double>& v) {
    std::vector<T> d(v.begin(), v.end());
    return Tensor<T>::from({v.size(), 1}, std::move(d));
}

/// Att(z_i, z_j) = exp(v^T tanh(Linear(Cat(z_i, z_j)))).
template <typename T>
struct NeighborAttention {
    Linear<T> proj;  // [2E -> E]; rows [0, E) act on z_i, rows [E, 2E) on z_j
    Tensor<T> v;     // [E x 1]

    NeighborAttention() = default;
    NeighborAttention(std::size_t e, Rng& rng) : proj(2 * e, e, rng) {
        const T bound = T(1) / std::sqrt(static_cast<T>(e));
        v = uniform_tensor<T>({e, 1}, -bound, bound, rng);
    }

    std::size_t dim() const { return proj.out_dim(); }

    /// Scores for flattened pairs given node tables; Linear(Cat(a, b)) is
    /// evaluated as a @ W_i + b @ W_j + bias with the products cached per node.
    Tensor<T> pair_scores(const Tensor<T>& nodes, const std::vector<std::size_t>& src,
                          const std::vector<std::size_t>& dst) const {
        const std::size_t e = dim();
        auto wi = slice(proj.weight, 0, 0, e);
        auto wj = slice(proj.weight, 0, e, e);
        auto ai = add(matmul(nodes, wi), proj.bias);
        auto aj = matmul(nodes, wj);
        auto pre = tanh(add(index_rows(ai, src), index_rows(aj, dst)));
        return exp(matmul(pre, v));
    }

    void collect(ParameterSet<T>& ps, const std::string& prefix) const {
        proj.collect(ps, prefix + ".proj");
        ps.add(prefix + ".v", v);
    }
};

/// Weights of one neighbor set: L1-normalized attention plus the side term.
/// center [1 x E], neighbors [k x E], side [k]. Empty set gives [0 x 1].
template <typename T>
Tensor<T> neighbor_weights(const Tensor<T>& center, const Tensor<T>& neighbors, const std::vector<double>& side,
                           const NeighborAttention<T>& att) {
    const std::size_t k = neighbors.dim(0);
    if (side.size() != k) throw ShapeError("neighbor_weights: side term length differs from neighbor count");
    auto nodes = concat<T>({center, neighbors}, 0);
    std::vector<std::size_t> src(k, 0), dst(k);
    for (std::size_t j = 0; j < k; ++j) dst[j] = j + 1;
    auto a = att.pair_scores(nodes, src, dst);
    auto w = div(a, sum_all(a));
    return add(w, constant_column<T>(side));
}

/// Weighted neighbor sums for every node: row i = sum_j w_ij z_j, with w from
/// neighbor_weights applied to each node's own neighbor set.
template <typename T>
Tensor<T> local_aggregate(const Tensor<T>& nodes, const std::vector<std::size_t>& src,
                          const std::vector<std::size_t>& dst, const std::vector<double>& side,
                          const NeighborAttention<T>& att) {
    const std::size_t count = nodes.dim(0);
    if (src.empty()) return Tensor<T>::zeros({count, nodes.dim(1)});
    auto a = att.pair_scores(nodes, src, dst);
    auto denom = index_rows(segment_sum(a, src, count), src);
    auto w = add(div(a, denom), constant_column<T>(side));
    return segment_sum(mul(w, index_rows(nodes, dst)), src, count);
}

template <typename T>
struct ViewAggregator {
    Linear<T> local, global;  // W1/W2 (road) or W3/W4 (POI)
    Tensor<T> bn_gamma, bn_beta;
    BatchNormState<T> bn;

    ViewAggregator() = default;
    ViewAggregator(std::size_t e, Rng& rng)
        : local(e, e, rng, false), global(e, e, rng, false), bn_gamma(Tensor<T>::full({e}, T(1), true)),
          bn_beta(Tensor<T>::zeros({e})), bn(e) {
        bn_beta.set_requires_grad(true);
    }

    /// relu(BN(W_local L + W_global G)) for stacked point rows.
    Tensor<T> operator()(const Tensor<T>& L, const Tensor<T>& G, bool training) {
        return relu(batch_norm(add(local(L), global(G)), bn_gamma, bn_beta, bn, training));
    }

    void collect(ParameterSet<T>& ps, const std::string& prefix) {
        local.collect(ps, prefix + ".local");
        global.collect(ps, prefix + ".global");
        ps.add(prefix + ".bn_gamma", bn_gamma);
        ps.add(prefix + ".bn_beta", bn_beta);
        ps.add_buffer(prefix + ".bn_running_mean", &bn.running_mean);
        ps.add_buffer(prefix + ".bn_running_var", &bn.running_var);
    }
};

/// Refined per-point sequences for a batch, stacked over all points.
template <typename T>
struct ViewSequences {
    Tensor<T> road, poi;               // [sum n_b x E]
    std::vector<std::size_t> offsets;  // row offset of each trajectory, plus the total
};

/// All learnable parts of the two views. Pretraining-only: none of this is
/// needed to embed a trajectory after pretraining.
template <typename T>
struct PurposeViews {
    ViewConfig config;
    std::size_t embed_dim = 0;
    Linear<T> road_in, poi_in;  // [text_dim -> E]
    NeighborAttention<T> attention;
    ViewAggregator<T> road_agg, poi_agg;
    Embedding<T> poi_ids;
    std::vector<Mamba2Block<T>> road_stack, poi_stack;

    PurposeViews() = default;
    PurposeViews(const ViewConfig& cfg, std::size_t e, std::size_t poi_count, Rng& rng)
        : config(cfg), embed_dim(e), road_in(cfg.text_dim, e, rng), poi_in(cfg.text_dim, e, rng), attention(e, rng),
          road_agg(e, rng), poi_agg(e, rng), poi_ids(poi_count, e, rng, T(0.1)) {
        for (std::size_t i = 0; i < cfg.stack_depth; ++i) road_stack.emplace_back(e, cfg.state_dim, cfg.heads, rng);
        for (std::size_t i = 0; i < cfg.stack_depth; ++i) poi_stack.emplace_back(e, cfg.state_dim, cfg.heads, rng);
    }

    /// Refines road and POI embeddings of every point in the batch. BN uses
    /// batch statistics over all points when training.
    ViewSequences<T> aggregate(const ViewGraph& g, const std::vector<const TrajViewInputs*>& batch, bool training) {
        if (g.pois != poi_ids.rows()) throw DataError("views: POI table size differs from the world's POI count");
        auto z_road = road_in(Tensor<T>::from({g.roads, g.text_dim}, std::vector<T>(g.road_text.begin(), g.road_text.end())));
        auto z_poi = poi_in(Tensor<T>::from({g.pois, g.text_dim}, std::vector<T>(g.poi_text.begin(), g.poi_text.end())));
        auto road_local = local_aggregate(z_road, g.road_src, g.road_dst, g.road_side, attention);
        auto poi_local = local_aggregate(z_poi, g.poi_src, g.poi_dst, g.poi_side, attention);

        ViewSequences<T> out;
        std::vector<std::size_t> roads, pois, road_first, road_last, poi_first, poi_last;
        std::vector<double> w_o, w_d;
        out.offsets.push_back(0);
        for (const auto* v : batch) {
            if (v->size() == 0) throw DataError("views: empty trajectory in batch");
            for (std::size_t i = 0; i < v->size(); ++i) {
                roads.push_back(v->roads[i]);
                pois.push_back(v->pois[i]);
                road_first.push_back(v->roads.front());
                road_last.push_back(v->roads.back());
                poi_first.push_back(v->pois.front());
                poi_last.push_back(v->pois.back());
                w_d.push_back(v->w_d[i]);
                w_o.push_back(1.0 - v->w_d[i]);
            }
            out.offsets.push_back(roads.size());
        }
        auto wo = constant_column<T>(w_o), wd = constant_column<T>(w_d);
        auto global_road = add(mul(wo, index_rows(z_road, road_first)), mul(wd, index_rows(z_road, road_last)));
        auto global_poi = add(mul(wo, index_rows(z_poi, poi_first)), mul(wd, index_rows(z_poi, poi_last)));
        auto agg_road = road_agg(index_rows(road_local, roads), global_road, training);
        auto agg_poi = poi_agg(index_rows(poi_local, pois), global_poi, training);
        auto id_emb = poi_ids(pois);
        if (config.residual) {
            out.road = add(index_rows(z_road, roads), agg_road);
            out.poi = add(add(index_rows(z_poi, pois), agg_poi), id_emb);
        } else {
            out.road = agg_road;
            out.poi = add(agg_poi, id_emb);
        }
        return out;
    }

    static Tensor<T> run_stack(const std::vector<Mamba2Block<T>>& stack, Tensor<T> x) {
        for (const auto& b : stack) x = b(x);
        return mean(x, 0, true);
    }

    /// Mean-pooled road and POI views, each [B x E].
    std::pair<Tensor<T>, Tensor<T>> encode(const ViewSequences<T>& seq) const {
        std::vector<Tensor<T>> road_rows, poi_rows;
        for (std::size_t b = 0; b + 1 < seq.offsets.size(); ++b) {
            const std::size_t start = seq.offsets[b], len = seq.offsets[b + 1] - start;
            road_rows.push_back(run_stack(road_stack, slice(seq.road, 0, start, len)));
            poi_rows.push_back(run_stack(poi_stack, slice(seq.poi, 0, start, len)));
        }
        return {concat<T>(road_rows, 0), concat<T>(poi_rows, 0)};
    }

    std::pair<Tensor<T>, Tensor<T>> operator()(const ViewGraph& g, const std::vector<const TrajViewInputs*>& batch,
                                               bool training) {
        return encode(aggregate(g, batch, training));
    }

    void collect(ParameterSet<T>& ps, const std::string& prefix) {
        road_in.collect(ps, prefix + ".road_in");
        poi_in.collect(ps, prefix + ".poi_in");
        attention.collect(ps, prefix + ".attention");
        road_agg.collect(ps, prefix + ".road_agg");
        poi_agg.collect(ps, prefix + ".poi_agg");
        poi_ids.collect(ps, prefix + ".poi_ids");
        for (std::size_t i = 0; i < road_stack.size(); ++i) road_stack[i].collect(ps, prefix + ".road_stack" + std::to_string(i));
        for (std::size_t i = 0; i < poi_stack.size(); ++i) poi_stack[i].collect(ps, prefix + ".poi_stack" + std::to_string(i));
    }
};

}  // namespace trajmamba
