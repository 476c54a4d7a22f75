#pragma once

#include <string>
#include <vector>

#include "trajmamba/ssm/blocks.hpp"
#include "trajmamba/traj/features.hpp"

namespace trajmamba {

/// Runs the blocks over a feature bundle, concatenates the final GPS and road
/// latents and mean-pools over time. Returns [1 x E].
template <typename T>
Tensor<T> encode_bundle(const FeatureBundle<T>& bundle, const std::vector<TrajMambaBlock<T>>& blocks,
                        const EncoderConfig& cfg) {
    if (bundle.length() == 0) throw DataError("encode_trajectory: empty trajectory");
    auto z_g = bundle.z_g, z_r = bundle.z_r;
    for (const auto& b : blocks) {
        auto o = b(z_g, z_r, bundle.s, cfg.mode, cfg.chunk);
        z_g = o.z_g;
        z_r = o.z_r;
    }
    return mean(concat<T>({z_g, z_r}, 1), 0, true);
}

/// Feature embedder plus L stacked dual-branch blocks. Holds tensor handles;
/// copies share weights, so use copy_parameter_values for a deep copy.
template <typename T>
struct TrajMambaEncoder {
    EncoderConfig config;
    FeatureEmbedder<T> embedder;
    std::vector<TrajMambaBlock<T>> blocks;

    TrajMambaEncoder() = default;
    TrajMambaEncoder(const EncoderConfig& cfg, const RoadNetwork& net, Rng& rng, std::size_t fourier_dim = 8,
                     std::size_t road_embed_dim = 32)
        : config(cfg) {
        cfg.validate();
        FeatureConfig fc;
        fc.embed_dim = cfg.embed_dim;
        fc.fourier_dim = fourier_dim;
        fc.road_embed_dim = road_embed_dim;
        embedder = FeatureEmbedder<T>(fc, net, rng);
        for (std::size_t l = 0; l < cfg.layers; ++l) blocks.emplace_back(cfg, rng);
    }

    FeatureBundle<T> features(const PointInputs& in) const { return embedder(in); }

    Tensor<T> encode(const FeatureBundle<T>& bundle) const { return encode_bundle(bundle, blocks, config); }
    Tensor<T> encode(const PointInputs& in) const { return encode(embedder(in)); }
    Tensor<T> encode(const Trajectory& traj) const { return encode(extract_point_inputs(traj)); }

    /// Stacks per-trajectory embeddings into [B x E].
    Tensor<T> encode_batch(const std::vector<const PointInputs*>& batch) const {
        std::vector<Tensor<T>> rows;
        rows.reserve(batch.size());
        for (const auto* in : batch) rows.push_back(encode(*in));
        return concat<T>(rows, 0);
    }

    void collect(ParameterSet<T>& ps, const std::string& prefix) {
        embedder.collect(ps, prefix + ".embed");
        for (std::size_t l = 0; l < blocks.size(); ++l) blocks[l].collect(ps, prefix + ".block" + std::to_string(l));
    }
};

}  // namespace trajmamba
