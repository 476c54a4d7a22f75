#pragma once

// Purpose-contrastive pretraining (teacher) and distillation into a student
// that reads mask-compressed trajectories.

#include <chrono>
#include <functional>
#include <numeric>
#include <random>

#include "trajmamba/parallel.hpp"
#include "trajmamba/pretrain/checkpoints.hpp"
#include "trajmamba/pretrain/losses.hpp"
#include "trajmamba/views/views.hpp"

namespace trajmamba {

struct TrainConfig {
    std::size_t batch_size = 128;
    std::size_t epochs = 15;
    double lr_purpose = 1e-3;
    double lr_kd = 1e-4;
    double w_mec = 0.5;
    double w_mask = 0.5;
    MecOptions mec;
    std::uint64_t seed = 42;

    void validate() const {
        if (batch_size == 0 || epochs == 0) throw UsageError("train: batch size and epochs must be >= 1");
        if (!(lr_purpose > 0.0) || !(lr_kd > 0.0)) throw UsageError("train: learning rates must be positive");
        if (w_mec < 0.0 || w_mask < 0.0) throw UsageError("train: loss weights must be nonnegative");
        if (mec.order == 0) throw UsageError("train: MEC order K must be >= 1");
        if (mec.eps < 0.0) throw UsageError("train: MEC eps must be >= 0");
    }

    nlohmann::json to_json() const {
        return {{"batch_size", batch_size}, {"epochs", epochs},       {"lr_purpose", lr_purpose},
                {"lr_kd", lr_kd},           {"w_mec", w_mec},         {"w_mask", w_mask},
                {"mec_order", mec.order},   {"mec_eps", mec.eps},     {"mec_literal", mec.literal},
                {"seed", seed}};
    }
};

/// Progress and resume plumbing shared by both procedures.
struct TrainHooks {
    std::function<void(const nlohmann::json&)> on_step;   // one record per optimizer step
    std::function<void(const nlohmann::json&)> on_epoch;  // one record per finished epoch
    std::filesystem::path state_path;                     // empty: no resume state
    std::size_t stop_after_epochs = 0;                    // 0: run to the end; else stop early (interrupt)
    std::size_t workers = 1;
};

struct TrainResult {
    std::vector<double> epoch_loss;  // mean step loss of each epoch run in this call
    double final_loss = 0.0;         // loss of the last step
    std::size_t epochs_done = 0;
    bool complete = false;
};

/// Independent stream per (seed, epoch, purpose), so a resumed run draws the
/// same shuffles and noise as an uninterrupted one.
inline Rng epoch_rng(std::uint64_t seed, std::size_t epoch, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), stream};
    return Rng(seq);
}

inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n; i += batch)
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
    return out;
}

namespace train_detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

template <typename T>
void check_finite_loss(const Tensor<T>& loss, std::size_t epoch, std::size_t step) {
    if (!std::isfinite(static_cast<double>(loss.item())))
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step));
}

/// Epoch loop with resume. step(epoch, batch_index, batch, rng) returns the
/// step record, whose "loss" field feeds the epoch mean.
template <typename T, typename StepFn>
TrainResult run_epochs(std::size_t n, const TrainConfig& cfg, const TrainHooks& hooks, ParameterSet<T>& ps,
                       Adam<T>& opt, const nlohmann::json& echo, std::uint32_t stream, StepFn&& step) {
    TrainResult res;
    std::size_t start = 0;
    if (!hooks.state_path.empty() && std::filesystem::exists(hooks.state_path))
        start = load_train_state(hooks.state_path, ps, opt, echo);
    res.epochs_done = start;
    std::size_t run = 0;
    for (std::size_t epoch = start; epoch < cfg.epochs; ++epoch) {
        if (hooks.stop_after_epochs && run == hooks.stop_after_epochs) return res;
        const auto t0 = std::chrono::steady_clock::now();
        auto rng = epoch_rng(cfg.seed, epoch, stream);
        const auto batches = epoch_batches(n, cfg.batch_size, rng);
        double sum = 0.0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            auto rec = step(epoch, b, batches[b], rng);
            sum += rec.at("loss").template get<double>();
            res.final_loss = rec.at("loss").template get<double>();
            if (hooks.on_step) hooks.on_step(rec);
        }
        const double mean_loss = sum / static_cast<double>(batches.size());
        res.epoch_loss.push_back(mean_loss);
        res.epochs_done = epoch + 1;
        ++run;
        if (!hooks.state_path.empty()) save_train_state(hooks.state_path, ps, opt, epoch + 1, echo);
        if (hooks.on_epoch)
            hooks.on_epoch({{"epoch", epoch}, {"mean_loss", mean_loss}, {"wall_ms", elapsed_ms(t0)}});
    }
    res.complete = true;
    return res;
}

}  // namespace train_detail

// ---------------------------------------------------------------- purpose

struct PurposeData {
    std::vector<PointInputs> points;
    std::vector<TrajViewInputs> views;
};

inline PurposeData prepare_purpose_data(const std::vector<Trajectory>& trajs, const World& world,
                                        std::size_t workers = 1) {
    PurposeData d;
    d.points.resize(trajs.size());
    d.views.resize(trajs.size());
    parallel_for(trajs.size(), workers, [&](std::size_t i) {
        d.points[i] = extract_point_inputs(trajs[i]);
        d.views[i] = view_inputs(trajs[i], world);
    });
    return d;
}

template <typename T>
struct PurposeModel {
    TrajMambaEncoder<T> encoder;
    PurposeViews<T> views;
    LearnableTemperature<T> temp;

    PurposeModel() = default;
    PurposeModel(const EncoderConfig& enc, const ViewConfig& view, const World& world, Rng& rng)
        : encoder(enc, world.network, rng), views(view, enc.embed_dim, world.pois.size(), rng) {}

    void collect(ParameterSet<T>& ps) {
        encoder.collect(ps, "encoder");
        views.collect(ps, "views");
        temp.collect(ps, "temp");
    }
};

template <typename T>
struct PurposeLoss {
    Tensor<T> total, road, poi;
};

/// L = 1/2 (InfoNCE(z_T, z_road) + InfoNCE(z_T, z_poi)) over one batch.
template <typename T>
PurposeLoss<T> purpose_loss(PurposeModel<T>& model, const ViewGraph& graph, const PurposeData& data,
                            const std::vector<std::size_t>& batch, bool training) {
    std::vector<const PointInputs*> pts;
    std::vector<const TrajViewInputs*> vws;
    for (auto i : batch) {
        pts.push_back(&data.points.at(i));
        vws.push_back(&data.views.at(i));
    }
    auto z_t = model.encoder.encode_batch(pts);
    auto [z_road, z_poi] = model.views(graph, vws, training);
    PurposeLoss<T> l;
    l.road = infonce_pair_loss(z_t, z_road, model.temp);
    l.poi = infonce_pair_loss(z_t, z_poi, model.temp);
    l.total = scale(add(l.road, l.poi), T(0.5));
    return l;
}

template <typename T>
TrainResult purpose_pretrain(PurposeModel<T>& model, const ViewGraph& graph, const PurposeData& data,
                             const TrainConfig& cfg, const TrainHooks& hooks = {}) {
    cfg.validate();
    if (data.points.empty()) throw DataError("purpose_pretrain: no training trajectories");
    ParameterSet<T> ps;
    model.collect(ps);
    Adam<T> opt(ps, {.learning_rate = cfg.lr_purpose});
    auto echo = cfg.to_json();
    echo["procedure"] = "purpose";
    return train_detail::run_epochs<T>(
        data.points.size(), cfg, hooks, ps, opt, echo, 1,
        [&](std::size_t epoch, std::size_t b, const std::vector<std::size_t>& batch, Rng&) {
            const auto t0 = std::chrono::steady_clock::now();
            opt.zero_grad();
            auto l = purpose_loss(model, graph, data, batch, true);
            train_detail::check_finite_loss(l.total, epoch, b);
            const double total = static_cast<double>(l.total.item());
            const double road = static_cast<double>(l.road.item()), poi = static_cast<double>(l.poi.item());
            backward(l.total);
            opt.step();
            return nlohmann::json{{"epoch", epoch},     {"step", b},        {"loss", total},
                                  {"loss_road", road},  {"loss_poi", poi},  {"temperature", model.temp.multiplier()},
                                  {"wall_ms", train_detail::elapsed_ms(t0)}};
        });
}

/// Fraction of trajectories whose road view is the cosine-nearest among the
/// road views of its own batch (batches of `batch` in data order, eval mode).
template <typename T>
double inbatch_retrieval_acc(PurposeModel<T>& model, const ViewGraph& graph, const PurposeData& data,
                             std::size_t batch) {
    NoGradGuard ng;
    std::size_t hits = 0, total = 0;
    for (std::size_t s = 0; s < data.points.size(); s += batch) {
        std::vector<const PointInputs*> pts;
        std::vector<const TrajViewInputs*> vws;
        for (std::size_t i = s; i < std::min(data.points.size(), s + batch); ++i) {
            pts.push_back(&data.points[i]);
            vws.push_back(&data.views[i]);
        }
        auto sim = matmul(l2_normalize_rows(model.encoder.encode_batch(pts)),
                          transpose(l2_normalize_rows(model.views(graph, vws, false).first)));
        const std::size_t b = pts.size();
        for (std::size_t r = 0; r < b; ++r) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < b; ++c)
                if (sim.at(r, c) > sim.at(r, best)) best = c;
            hits += best == r;
            ++total;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

// ---------------------------------------------------------------- distillation

struct KdData {
    std::vector<PointInputs> full;  // teacher input: raw trajectories
    std::vector<PointInputs> pre;   // student input: after explicit-redundancy filtering
};

inline KdData prepare_kd_data(const std::vector<Trajectory>& trajs, std::size_t workers = 1,
                              const RedundancyThresholds& th = {}) {
    KdData d;
    d.full.resize(trajs.size());
    d.pre.resize(trajs.size());
    parallel_for(trajs.size(), workers, [&](std::size_t i) {
        if (trajs[i].size() < 2) throw DataError("kd: trajectory " + std::to_string(trajs[i].id) + " has < 2 points");
        d.full[i] = extract_point_inputs(trajs[i]);
        d.pre[i] = extract_point_inputs(filter_explicit_redundancy(trajs[i], th));
    });
    return d;
}

/// Student = weight copy of the teacher, plus a fresh mask generator.
template <typename T>
StudentModel<T> init_student(TrajMambaEncoder<T> teacher, const MaskConfig& mask, const RoadNetwork& net, Rng& rng) {
    StudentModel<T> m;
    m.student = TrajMambaEncoder<T>(teacher.config, net, rng, teacher.embedder.config.fourier_dim,
                                    teacher.embedder.config.road_embed_dim);
    ParameterSet<T> src, dst;
    teacher.collect(src, "encoder");
    m.student.collect(dst, "encoder");
    copy_parameter_values(src, dst);
    m.generator = MaskGenerator<T>(mask, net, rng);
    return m;
}

/// Teacher embeddings of every trajectory, [n x E], computed without a graph.
template <typename T>
Tensor<T> embed_all(const TrajMambaEncoder<T>& enc, const std::vector<PointInputs>& inputs, std::size_t workers = 1) {
    if (inputs.empty()) throw DataError("embed_all: no trajectories");
    const std::size_t e = enc.config.embed_dim;
    std::vector<T> out(inputs.size() * e);
    parallel_for(inputs.size(), workers, [&](std::size_t i) {
        NoGradGuard ng;
        auto z = enc.encode(inputs[i]);
        std::copy(z.data().begin(), z.data().end(), out.begin() + static_cast<std::ptrdiff_t>(i * e));
    });
    return Tensor<T>::from({inputs.size(), e}, std::move(out));
}

template <typename T>
struct KdLoss {
    Tensor<T> total, mec, mask;
    double mean_compressed_length = 0.0;  // hard-mask length at eval, endpoints kept
};

/// Student embedding of one preprocessed trajectory under the gate.
template <typename T>
Tensor<T> student_embedding(const StudentModel<T>& m, const PointInputs& pre, const Tensor<T>& gate) {
    return m.student.encode(apply_soft_mask(m.student.features(pre), gate));
}

template <typename T>
KdLoss<T> kd_loss(StudentModel<T>& m, const Tensor<T>& teacher_rows, const KdData& data,
                  const std::vector<std::size_t>& batch, const TrainConfig& cfg, Rng& noise) {
    std::vector<Tensor<T>> rows, mus;
    double kept = 0.0;
    for (auto i : batch) {
        const auto& pre = data.pre.at(i);
        auto mu = m.generator.compute_mu(pre);
        auto gate = stochastic_gate(mu, m.generator.config.delta, true, noise);
        rows.push_back(student_embedding(m, pre, gate));
        std::vector<T> eval(mu.data().begin(), mu.data().end());
        for (auto& v : eval) v = std::clamp(v, T(0), T(1));
        kept += static_cast<double>(hard_mask_indices(eval).size());
        mus.push_back(mu);
    }
    KdLoss<T> l;
    auto z_s = l2_normalize_rows(concat<T>(rows, 0));
    auto z_t = l2_normalize_rows(teacher_rows);
    l.mec = mec_loss(z_t, z_s, cfg.mec);
    l.mask = mask_loss(concat<T>(mus, 0), m.generator.config.delta);
    l.total = add(scale(l.mec, static_cast<T>(cfg.w_mec)), scale(l.mask, static_cast<T>(cfg.w_mask)));
    l.mean_compressed_length = kept / static_cast<double>(batch.size());
    return l;
}

/// Trains student + mask generator against a frozen teacher. The teacher's
/// tensors are switched to requires_grad = false for the duration.
template <typename T>
TrainResult kd_pretrain(StudentModel<T>& m, TrajMambaEncoder<T> teacher, const KdData& data, const TrainConfig& cfg,
                        const TrainHooks& hooks = {}) {
    cfg.validate();
    if (data.pre.empty()) throw DataError("kd_pretrain: no training trajectories");
    ParameterSet<T> teacher_ps;
    teacher.collect(teacher_ps, "teacher");
    teacher_ps.set_requires_grad(false);
    teacher_ps.clear_grad();
    const auto z_teacher = embed_all(teacher, data.full, hooks.workers);

    ParameterSet<T> ps;
    m.collect(ps);
    Adam<T> opt(ps, {.learning_rate = cfg.lr_kd});
    auto echo = cfg.to_json();
    echo["procedure"] = "kd";
    double length_sum = 0.0;
    std::size_t length_count = 0;
    TrainHooks h = hooks;
    h.on_epoch = [&](const nlohmann::json& rec) {
        auto r = rec;
        r["mean_compressed_length"] = length_count ? length_sum / static_cast<double>(length_count) : 0.0;
        length_sum = 0.0;
        length_count = 0;
        if (hooks.on_epoch) hooks.on_epoch(r);
    };
    return train_detail::run_epochs<T>(
        data.pre.size(), cfg, h, ps, opt, echo, 2,
        [&](std::size_t epoch, std::size_t b, const std::vector<std::size_t>& batch, Rng& rng) {
            const auto t0 = std::chrono::steady_clock::now();
            opt.zero_grad();
            auto l = kd_loss(m, index_rows(z_teacher, batch), data, batch, cfg, rng);
            train_detail::check_finite_loss(l.total, epoch, b);
            nlohmann::json rec{{"epoch", epoch},
                               {"step", b},
                               {"loss", static_cast<double>(l.total.item())},
                               {"loss_mec", static_cast<double>(l.mec.item())},
                               {"loss_mask", static_cast<double>(l.mask.item())},
                               {"mean_compressed_length", l.mean_compressed_length}};
            length_sum += l.mean_compressed_length * static_cast<double>(batch.size());
            length_count += batch.size();
            backward(l.total);
            opt.step();
            rec["wall_ms"] = train_detail::elapsed_ms(t0);
            return rec;
        });
}

/// Inference path of the student: explicit-redundancy filter, hard mask,
/// then encode. Returns the embedding and the compressed length.
template <typename T>
std::pair<std::vector<T>, std::size_t> embed_compressed(const StudentModel<T>& m, const Trajectory& traj,
                                                        const RedundancyThresholds& th = {}) {
    NoGradGuard ng;
    auto compressed = compress_trajectory(filter_explicit_redundancy(traj, th), m.generator);
    auto z = m.student.encode(compressed);
    return {std::vector<T>(z.data().begin(), z.data().end()), compressed.size()};
}

}  // namespace trajmamba
