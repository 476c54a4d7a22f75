#pragma once

// Run configuration: one flat `key = value` file covering every tunable.
// Unknown keys and out-of-range values are rejected at load.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "trajmamba/pretrain/train.hpp"
#include "trajmamba/tasks/eval.hpp"
#include "trajmamba/traj/synth.hpp"

namespace trajmamba {

struct RunConfig {
    std::filesystem::path data_dir = "data";
    std::filesystem::path run_dir = "run";
    std::uint64_t seed = 42;  // world = seed, trajectories = seed + 1, training/eval = seed
    std::size_t workers = 1;
    int precision = 32;

    WorldConfig world;
    TrajectoryConfig trajs;
    EncoderConfig encoder = EncoderConfig::desk();
    ViewConfig views = desk_views();
    std::string text_source = "pseudo";  // pseudo | file | remote
    std::filesystem::path text_file;     // store to read (file) or cache to fill (remote)
    MaskConfig mask;
    TrainConfig train;
    RedundancyThresholds thresholds;
    HeadTrainConfig head;
    StsConfig sts;
    std::size_t bench_repeats = 3;

    static ViewConfig desk_views() {
        ViewConfig v;
        v.text_dim = 64;
        return v;
    }

    /// Seeds every component from the master seed.
    void apply_seed() {
        world.seed = seed;
        trajs.seed = seed + 1;
        train.seed = seed;
        head.seed = seed;
        sts.seed = seed;
    }

    void validate() const;
    nlohmann::json echo() const;
};

namespace config_detail {

struct Field {
    std::string key;
    std::function<void(const std::string&)> set;
    std::function<nlohmann::json()> get;
};

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
    N out{};
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || p != end) throw UsageError("config: " + key + " = '" + v + "' is not a valid number");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw UsageError("config: " + key + " = '" + v + "' is not true/false");
}

template <typename V>
Field field(std::string key, V& ref) {
    Field f;
    f.key = key;
    if constexpr (std::is_same_v<V, bool>) {
        f.set = [&ref, key](const std::string& v) { ref = parse_bool(key, v); };
    } else if constexpr (std::is_arithmetic_v<V>) {
        f.set = [&ref, key](const std::string& v) { ref = parse_number<V>(key, v); };
    } else if constexpr (std::is_same_v<V, std::filesystem::path>) {
        f.set = [&ref](const std::string& v) { ref = v; };
        f.get = [&ref] { return nlohmann::json(ref.string()); };
        return f;
    } else {
        f.set = [&ref](const std::string& v) { ref = v; };
    }
    f.get = [&ref] { return nlohmann::json(ref); };
    return f;
}

inline Field bind_mode(std::string key, ScanMode& ref) {
    return {key, [&ref](const std::string& v) { ref = parse_scan_mode(v); },
            [&ref] { return nlohmann::json(scan_mode_name(ref)); }};
}

inline std::vector<Field> fields(RunConfig& c) {
    return {
        field("data_dir", c.data_dir),
        field("run_dir", c.run_dir),
        field("seed", c.seed),
        field("workers", c.workers),
        field("precision", c.precision),
        field("grid_rows", c.world.rows),
        field("grid_cols", c.world.cols),
        field("poi_count", c.world.poi_count),
        field("grid_spacing_m", c.world.spacing_m),
        field("origin_lng", c.world.origin_lng),
        field("origin_lat", c.world.origin_lat),
        field("traj_count", c.trajs.count),
        field("od_share", c.trajs.od_share),
        field("min_edges", c.trajs.min_edges),
        field("max_edges", c.trajs.max_edges),
        field("stop_probability", c.trajs.stop_probability),
        field("min_interval_s", c.trajs.min_interval_s),
        field("max_interval_s", c.trajs.max_interval_s),
        field("epoch_start", c.trajs.epoch_start),
        field("days", c.trajs.days),
        field("layers", c.encoder.layers),
        field("embed_dim", c.encoder.embed_dim),
        field("state_dim", c.encoder.state_dim),
        field("heads", c.encoder.heads),
        field("conv_width", c.encoder.conv_width),
        field("chunk", c.encoder.chunk),
        bind_mode("scan_mode", c.encoder.mode),
        field("text_dim", c.views.text_dim),
        field("alpha", c.views.alpha),
        field("beta", c.views.beta),
        field("poi_radius_m", c.views.poi_radius_m),
        field("max_poi_neighbors", c.views.max_poi_neighbors),
        field("view_state_dim", c.views.state_dim),
        field("view_heads", c.views.heads),
        field("view_depth", c.views.stack_depth),
        field("view_residual", c.views.residual),
        field("text_source", c.text_source),
        field("text_file", c.text_file),
        field("mask_latent_dim", c.mask.latent_dim),
        field("mask_state_dim", c.mask.state_dim),
        field("mask_heads", c.mask.heads),
        field("delta", c.mask.delta),
        field("mu_hat_mean", c.mask.mu_hat_mean),
        field("mu_hat_std", c.mask.mu_hat_std),
        field("batch_size", c.train.batch_size),
        field("epochs", c.train.epochs),
        field("lr_purpose", c.train.lr_purpose),
        field("lr_kd", c.train.lr_kd),
        field("w_mec", c.train.w_mec),
        field("w_mask", c.train.w_mask),
        field("mec_order", c.train.mec.order),
        field("mec_eps", c.train.mec.eps),
        field("mec_literal", c.train.mec.literal),
        field("stop_speed", c.thresholds.stop_speed),
        field("steady_range", c.thresholds.steady_range),
        field("head_epochs", c.head.max_epochs),
        field("head_batch_size", c.head.batch_size),
        field("head_lr", c.head.lr),
        field("head_patience", c.head.patience),
        field("sts_negatives", c.sts.negatives),
        field("sts_exclude_radius_m", c.sts.exclude_radius_m),
        field("bench_repeats", c.bench_repeats),
    };
}

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace config_detail

/// Keys of every setting, in file order.
inline std::vector<std::string> config_keys() {
    RunConfig c;
    std::vector<std::string> keys;
    for (const auto& f : config_detail::fields(c)) keys.push_back(f.key);
    return keys;
}

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
    for (auto& f : config_detail::fields(c))
        if (f.key == key) return f.set(value);
    throw UsageError("config: unknown key '" + key + "'");
}

/// Applies `key = value` lines onto `c`. Blank lines and lines starting
/// with '#' are skipped; a repeated key is an error.
inline void parse_config_text(RunConfig& c, const std::string& text, const std::string& origin = "config") {
    std::istringstream in(text);
    std::string line;
    std::set<std::string> seen;
    for (std::size_t no = 1; std::getline(in, line); ++no) {
        const auto t = config_detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw UsageError(origin + ":" + std::to_string(no) + ": expected 'key = value'");
        const auto key = config_detail::trim(t.substr(0, eq));
        if (!seen.insert(key).second) throw UsageError(origin + ":" + std::to_string(no) + ": duplicate key " + key);
        try {
            set_config_value(c, key, config_detail::trim(t.substr(eq + 1)));
        } catch (const UsageError& e) {
            throw UsageError(origin + ":" + std::to_string(no) + ": " + e.what());
        }
    }
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    RunConfig c;
    parse_config_text(c, ss.str(), path.string());
    return c;
}

inline void RunConfig::validate() const {
    auto need = [](bool ok, const std::string& what) {
        if (!ok) throw UsageError("config: " + what);
    };
    need(precision == 32 || precision == 64, "precision must be 32 or 64");
    need(workers >= 1, "workers must be >= 1");
    need(world.rows >= 2 && world.cols >= 2, "grid_rows and grid_cols must be >= 2");
    need(world.poi_count >= 1, "poi_count must be >= 1");
    need(world.spacing_m > 0.0, "grid_spacing_m must be positive");
    need(trajs.count >= 10, "traj_count must be >= 10");
    need(trajs.od_share >= 0.0 && trajs.od_share <= 1.0, "od_share must be in [0, 1]");
    need(trajs.min_edges >= 1 && trajs.min_edges <= trajs.max_edges, "need 1 <= min_edges <= max_edges");
    need(trajs.stop_probability >= 0.0 && trajs.stop_probability <= 1.0, "stop_probability must be in [0, 1]");
    need(trajs.min_interval_s >= 1 && trajs.min_interval_s <= trajs.max_interval_s,
         "need 1 <= min_interval_s <= max_interval_s");
    need(trajs.days >= 1, "days must be >= 1");
    encoder.validate();
    need(views.text_dim >= 1, "text_dim must be >= 1");
    need(views.alpha >= 0.0 && views.beta >= 0.0, "alpha and beta must be >= 0");
    need(views.poi_radius_m > 0.0, "poi_radius_m must be positive");
    need(views.max_poi_neighbors >= 1, "max_poi_neighbors must be >= 1");
    need(views.state_dim >= 1 && views.heads >= 1 && views.stack_depth >= 1,
         "view_state_dim, view_heads and view_depth must be >= 1");
    need(encoder.embed_dim * 2 % views.heads == 0, "view_heads must divide 2 * embed_dim");
    need(text_source == "pseudo" || text_source == "file" || text_source == "remote",
         "text_source must be pseudo, file or remote");
    need(text_source != "file" || !text_file.empty(), "text_source = file needs text_file");
    mask.validate();
    train.validate();
    need(thresholds.stop_speed >= 0.0 && thresholds.steady_range >= 0.0, "redundancy thresholds must be >= 0");
    need(head.max_epochs >= 1 && head.batch_size >= 1 && head.lr > 0.0 && head.patience >= 1,
         "head_epochs, head_batch_size, head_patience must be >= 1 and head_lr positive");
    need(sts.negatives >= 1 && sts.exclude_radius_m >= 0.0, "sts_negatives >= 1 and sts_exclude_radius_m >= 0");
    need(bench_repeats >= 1, "bench_repeats must be >= 1");
}

/// Keys left out of the echo: where files live and how many threads run
/// never change a result.
inline bool echo_excluded(const std::string& key) {
    return key == "workers" || key == "data_dir" || key == "run_dir";
}

/// Every result-affecting setting, embedded in each artifact.
inline nlohmann::json RunConfig::echo() const {
    auto copy = *this;
    nlohmann::json j;
    for (const auto& f : config_detail::fields(copy))
        if (!echo_excluded(f.key)) j[f.key] = f.get();
    return j;
}

}  // namespace trajmamba
