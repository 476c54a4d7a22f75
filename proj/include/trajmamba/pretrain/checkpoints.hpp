#pragma once

// Model archives. Teacher: encoder tensors only. Student: encoder plus mask
// generator. Training state: every trainable tensor, BN statistics and Adam
// moments, for resuming after the last finished epoch.

#include <filesystem>
#include <string>

#include "trajmamba/grad/adam.hpp"
#include "trajmamba/grad/checkpoint.hpp"
#include "trajmamba/pretrain/mask.hpp"
#include "trajmamba/ssm/encoder.hpp"

namespace trajmamba {

inline nlohmann::json encoder_config_json(const EncoderConfig& c, std::size_t fourier_dim, std::size_t road_embed_dim) {
    return {{"layers", c.layers},           {"embed_dim", c.embed_dim},   {"state_dim", c.state_dim},
            {"heads", c.heads},             {"conv_width", c.conv_width}, {"chunk", c.chunk},
            {"mode", scan_mode_name(c.mode)}, {"fourier_dim", fourier_dim}, {"road_embed_dim", road_embed_dim}};
}

template <typename T>
nlohmann::json encoder_config_json(const TrajMambaEncoder<T>& enc) {
    return encoder_config_json(enc.config, enc.embedder.config.fourier_dim, enc.embedder.config.road_embed_dim);
}

inline nlohmann::json mask_config_json(const MaskConfig& m) {
    return {{"latent_dim", m.latent_dim}, {"state_dim", m.state_dim},       {"heads", m.heads},
            {"delta", m.delta},           {"mu_hat_mean", m.mu_hat_mean}, {"mu_hat_std", m.mu_hat_std}};
}

/// Rebuilds an encoder from archived metadata and tensors. When `expected` is
/// given, a differing L/E/N/H is reported before any tensor is touched.
template <typename T>
TrajMambaEncoder<T> load_encoder(const Checkpoint& ck, const RoadNetwork& net, const std::string& prefix,
                                 const EncoderConfig* expected = nullptr) {
    EncoderConfig c;
    std::size_t fourier = 0, road_dim = 0;
    try {
        const auto& meta = ck.metadata.at("encoder");
        c.layers = meta.at("layers");
        c.embed_dim = meta.at("embed_dim");
        c.state_dim = meta.at("state_dim");
        c.heads = meta.at("heads");
        c.conv_width = meta.at("conv_width");
        c.chunk = meta.at("chunk");
        c.mode = parse_scan_mode(meta.at("mode").get<std::string>());
        fourier = meta.at("fourier_dim");
        road_dim = meta.at("road_embed_dim");
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: malformed encoder metadata: ") + e.what());
    }
    if (expected) {
        auto differs = [](const char* what, std::size_t have, std::size_t want) {
            if (have != want)
                throw DataError(std::string("checkpoint: encoder ") + what + " is " + std::to_string(have) +
                                ", configuration expects " + std::to_string(want));
        };
        differs("E", c.embed_dim, expected->embed_dim);
        differs("L", c.layers, expected->layers);
        differs("N", c.state_dim, expected->state_dim);
        differs("H", c.heads, expected->heads);
        c.mode = expected->mode;
        c.chunk = expected->chunk;
    }
    Rng rng(0);
    TrajMambaEncoder<T> enc(c, net, rng, fourier, road_dim);
    ParameterSet<T> ps;
    enc.collect(ps, prefix);
    import_parameters(ck, ps);
    return enc;
}

template <typename T>
Checkpoint teacher_checkpoint(TrajMambaEncoder<T>& enc, const nlohmann::json& echo) {
    Checkpoint ck;
    ParameterSet<T> ps;
    enc.collect(ps, "encoder");
    export_parameters(ps, ck);
    ck.metadata = {{"role", "teacher"}, {"encoder", encoder_config_json(enc)}, {"config", echo}};
    return ck;
}

template <typename T>
struct StudentModel {
    TrajMambaEncoder<T> student;
    MaskGenerator<T> generator;

    void collect(ParameterSet<T>& ps) {
        student.collect(ps, "student");
        generator.collect(ps, "mask");
    }
};

template <typename T>
Checkpoint student_checkpoint(StudentModel<T>& m, const nlohmann::json& echo) {
    Checkpoint ck;
    ParameterSet<T> ps;
    m.collect(ps);
    export_parameters(ps, ck);
    ck.metadata = {{"role", "student"},
                   {"encoder", encoder_config_json(m.student)},
                   {"mask", mask_config_json(m.generator.config)},
                   {"config", echo}};
    return ck;
}

template <typename T>
StudentModel<T> load_student(const Checkpoint& ck, const RoadNetwork& net, const EncoderConfig* expected = nullptr) {
    if (ck.metadata.value("role", "") != "student") throw DataError("checkpoint: not a student checkpoint");
    StudentModel<T> m;
    m.student = load_encoder<T>(ck, net, "student", expected);
    MaskConfig mc;
    try {
        const auto& j = ck.metadata.at("mask");
        mc.latent_dim = j.at("latent_dim");
        mc.state_dim = j.at("state_dim");
        mc.heads = j.at("heads");
        mc.delta = j.at("delta");
        mc.mu_hat_mean = j.at("mu_hat_mean");
        mc.mu_hat_std = j.at("mu_hat_std");
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: malformed mask metadata: ") + e.what());
    }
    Rng rng(0);
    m.generator = MaskGenerator<T>(mc, net, rng);
    ParameterSet<T> ps;
    m.generator.collect(ps, "mask");
    import_parameters(ck, ps);
    return m;
}

/// Saves parameters, buffers and Adam moments after `epochs_done` epochs.
/// Values are stored as 32-bit floats, so resuming is bit-exact in 32-bit
/// precision only.
template <typename T>
void save_train_state(const std::filesystem::path& path, const ParameterSet<T>& ps, Adam<T>& opt,
                      std::size_t epochs_done, const nlohmann::json& echo) {
    Checkpoint ck;
    export_parameters(ps, ck);
    for (std::size_t i = 0; i < ps.params.size(); ++i) {
        const auto& [name, t] = ps.params[i];
        const auto& m = opt.first_moment()[i];
        const auto& v = opt.second_moment()[i];
        ck.tensors.push_back({"adam.m." + name, t.shape(), std::vector<float>(m.begin(), m.end())});
        ck.tensors.push_back({"adam.v." + name, t.shape(), std::vector<float>(v.begin(), v.end())});
    }
    ck.metadata = {{"role", "train_state"}, {"epochs_done", epochs_done}, {"adam_step", opt.step_count()},
                   {"config", echo}};
    // Write then rename, so an interruption never leaves a torn state file.
    auto tmp = path;
    tmp += ".tmp";
    save_checkpoint(ck, tmp);
    std::filesystem::rename(tmp, path);
}

/// Restores a state written by save_train_state and returns the number of
/// finished epochs. The stored config echo must equal the current one.
template <typename T>
std::size_t load_train_state(const std::filesystem::path& path, ParameterSet<T>& ps, Adam<T>& opt,
                             const nlohmann::json& echo) {
    const auto ck = load_checkpoint(path);
    if (ck.metadata.value("role", "") != "train_state") throw DataError(path.string() + " is not a training state");
    if (ck.metadata.at("config") != echo)
        throw DataError("training state " + path.string() + " was written with a different configuration");
    import_parameters(ck, ps);
    for (std::size_t i = 0; i < ps.params.size(); ++i) {
        const auto& name = ps.params[i].first;
        const auto& m = ck.get("adam.m." + name).data;
        const auto& v = ck.get("adam.v." + name).data;
        if (m.size() != opt.first_moment()[i].size()) throw DataError("training state: moment size mismatch for " + name);
        std::copy(m.begin(), m.end(), opt.first_moment()[i].begin());
        std::copy(v.begin(), v.end(), opt.second_moment()[i].begin());
    }
    opt.set_step_count(ck.metadata.at("adam_step").get<std::size_t>());
    return ck.metadata.at("epochs_done").get<std::size_t>();
}

}  // namespace trajmamba
