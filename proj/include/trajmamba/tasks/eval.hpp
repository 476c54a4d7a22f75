#pragma once

// End-to-end evaluation of a distilled student on destination prediction,
// arrival time estimation and similar trajectory search.

#include <iostream>

#include "trajmamba/tasks/heads.hpp"
#include "trajmamba/tasks/sts.hpp"

namespace trajmamba {

struct EvalConfig {
    HeadTrainConfig head;
    bool finetune = false;
    RedundancyThresholds thresholds;
    StsConfig sts;
    std::size_t workers = 1;
    std::ostream* warn = &std::cerr;  // skipped-trajectory notices; null to silence
};

/// Explicit-redundancy filter then hard mask, as at inference.
template <typename T>
std::vector<PointInputs> compress_all(const StudentModel<T>& m, const std::vector<Trajectory>& trajs,
                                      const RedundancyThresholds& th, std::size_t workers,
                                      std::vector<std::size_t>* lengths = nullptr) {
    std::vector<PointInputs> out(trajs.size());
    std::vector<std::size_t> lens(trajs.size());
    parallel_for(trajs.size(), workers, [&](std::size_t i) {
        auto c = compress_trajectory(filter_explicit_redundancy(trajs[i], th), m.generator);
        lens[i] = c.size();
        out[i] = extract_point_inputs(c);
    });
    if (lengths) *lengths = std::move(lens);
    return out;
}

/// Independent copy of a student, for fine-tuning without touching the caller's.
template <typename T>
StudentModel<T> clone_student(StudentModel<T>& m, const RoadNetwork& net) {
    return load_student<T>(student_checkpoint(m, nlohmann::json::object()), net);
}

namespace eval_detail {

// Frozen: one embedding table per split. Fine-tune: encode on demand through
// the given student, whose parameters are returned for the optimizer.
template <typename T>
struct Providers {
    EmbedFn<T> train, valid, test;
    ParameterSet<T> extra;
};

/// Per-column shift and inverse scale fitted on the training embeddings, so
/// the head sees unit-variance inputs whatever the encoder's output scale.
/// Fixed once fitted; in fine-tune mode gradients pass through it.
template <typename T>
struct InputScaler {
    Tensor<T> shift, inv_scale;  // [1 x E]

    Tensor<T> operator()(const Tensor<T>& x) const { return mul(sub(x, shift), inv_scale); }
};

template <typename T>
InputScaler<T> fit_input_scaler(const Tensor<T>& table) {
    const std::size_t n = table.dim(0), e = table.dim(1);
    std::vector<T> shift(e), inv(e);
    for (std::size_t j = 0; j < e; ++j) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += static_cast<double>(table.at(i, j));
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(table.at(i, j)) - mean;
            var += d * d;
        }
        const double sd = std::sqrt(var / static_cast<double>(n));
        shift[j] = static_cast<T>(mean);
        inv[j] = static_cast<T>(sd > 1e-12 ? 1.0 / sd : 1.0);
    }
    return {Tensor<T>::from({1, e}, std::move(shift)), Tensor<T>::from({1, e}, std::move(inv))};
}

template <typename T>
Providers<T> make_providers(StudentModel<T>& m, const std::vector<PointInputs>& train,
                            const std::vector<PointInputs>& valid, const std::vector<PointInputs>& test,
                            bool finetune, std::size_t workers) {
    Providers<T> p;
    const auto train_table = embed_all(m.student, train, workers);
    const auto scaler = fit_input_scaler(train_table);
    if (!finetune) {
        NoGradGuard ng;
        p.train = constant_embeddings(scaler(train_table));
        p.valid = constant_embeddings(scaler(embed_all(m.student, valid, workers)));
        p.test = constant_embeddings(scaler(embed_all(m.student, test, workers)));
        return p;
    }
    auto over = [&m, scaler](const std::vector<PointInputs>& inputs) -> EmbedFn<T> {
        return [&m, &inputs, scaler](const std::vector<std::size_t>& rows) {
            std::vector<const PointInputs*> b;
            for (auto r : rows) b.push_back(&inputs.at(r));
            return scaler(m.student.encode_batch(b));
        };
    };
    p.train = over(train);
    p.valid = over(valid);
    p.test = over(test);
    m.student.collect(p.extra, "student");
    return p;
}

struct Truncation {
    std::vector<Trajectory> prefixes;
    std::vector<TrajPoint> destinations;
    std::size_t skipped = 0;
};

inline Truncation truncate_all(const std::vector<Trajectory>& trajs, const char* split, std::ostream* warn) {
    Truncation t;
    for (const auto& traj : trajs) {
        if (auto cut = truncate_for_prediction(traj)) {
            t.prefixes.push_back(std::move(cut->prefix));
            t.destinations.push_back(cut->destination);
        } else {
            ++t.skipped;
        }
    }
    if (t.skipped && warn)
        *warn << "warning: " << split << ": skipped " << t.skipped << " trajectories shorter than "
              << kPredictionHoldout + 2 << " points\n";
    if (t.prefixes.empty()) throw DataError(std::string("destination prediction: no usable ") + split + " trajectories");
    return t;
}

inline nlohmann::json head_summary(const HeadTrainResult& r) {
    return {{"epochs_run", r.epochs_run}, {"best_epoch", r.best_epoch}, {"best_valid_loss", r.best_valid_loss}};
}

}  // namespace eval_detail

/// Destination prediction with a GPS head and a road-segment head. The road
/// report includes the accuracy of always predicting the most frequent
/// training destination road.
template <typename T>
nlohmann::json run_destination_prediction(StudentModel<T>& model, const RoadNetwork& net, const Split& split,
                                          const EvalConfig& cfg) {
    using namespace eval_detail;
    const auto tr = truncate_all(split.train, "train", cfg.warn);
    const auto va = truncate_all(split.valid, "valid", cfg.warn);
    const auto te = truncate_all(split.test, "test", cfg.warn);
    const auto norm = network_gps_norm(net);
    const std::size_t e = model.student.config.embed_dim;

    auto gps_labels = [&](const Truncation& t) {
        TaskLabels l{HeadKind::gps, {}, {}};
        for (const auto& d : t.destinations) {
            l.values.push_back((d.lng - norm[0]) / norm[2]);
            l.values.push_back((d.lat - norm[1]) / norm[3]);
        }
        return l;
    };
    auto road_labels = [&](const Truncation& t) {
        TaskLabels l{HeadKind::road, {}, {}};
        for (const auto& d : t.destinations) l.classes.push_back(d.road);
        return l;
    };

    nlohmann::json report;
    report["skipped"] = {{"train", tr.skipped}, {"valid", va.skipped}, {"test", te.skipped}};
    for (HeadKind kind : {HeadKind::gps, HeadKind::road}) {
        StudentModel<T> ft_copy;
        StudentModel<T>* m = &model;
        if (cfg.finetune) {
            ft_copy = clone_student(model, net);
            m = &ft_copy;
        }
        const auto in_tr = compress_all(*m, tr.prefixes, cfg.thresholds, cfg.workers);
        const auto in_va = compress_all(*m, va.prefixes, cfg.thresholds, cfg.workers);
        const auto in_te = compress_all(*m, te.prefixes, cfg.thresholds, cfg.workers);
        auto prov = make_providers(*m, in_tr, in_va, in_te, cfg.finetune, cfg.workers);
        Rng rng(cfg.head.seed);
        if (kind == HeadKind::gps) {
            PredictorHead<T> head(kind, e, 2, rng);
            const auto res = train_head(head, prov.train, gps_labels(tr), prov.valid, gps_labels(va), cfg.head, prov.extra);
            const auto pred = predict_rows(head, prov.test, te.prefixes.size());
            std::vector<GeoPoint> p, truth;
            for (std::size_t i = 0; i < pred.size(); ++i) {
                p.push_back({pred[i][0] * norm[2] + norm[0], pred[i][1] * norm[3] + norm[1]});
                truth.push_back(te.destinations[i].geo());
            }
            report["gps"] = to_json(gps_metrics(p, truth));
            report["gps"]["training"] = head_summary(res);
        } else {
            PredictorHead<T> head(kind, e, net.edges.size(), rng);
            const auto res = train_head(head, prov.train, road_labels(tr), prov.valid, road_labels(va), cfg.head, prov.extra);
            const auto scores = predict_rows(head, prov.test, te.prefixes.size());
            const auto truth = road_labels(te).classes;
            std::map<std::size_t, std::size_t> freq;
            for (auto c : road_labels(tr).classes) ++freq[c];
            const auto majority = std::max_element(freq.begin(), freq.end(), [](const auto& a, const auto& b) {
                                      return a.second < b.second;
                                  })->first;
            const auto majority_acc =
                static_cast<double>(std::count(truth.begin(), truth.end(), majority)) / static_cast<double>(truth.size());
            report["road"] = to_json(class_metrics(scores, truth));
            report["road"]["majority_acc1"] = majority_acc;
            report["road"]["training"] = head_summary(res);
            report["road"]["training"]["best_valid_acc1"] = res.best_valid_acc1;
        }
    }
    return report;
}

/// Arrival time estimation from the route with timing removed.
template <typename T>
nlohmann::json run_arrival_time(StudentModel<T>& model, const RoadNetwork& net, const Split& split,
                                const EvalConfig& cfg) {
    using namespace eval_detail;
    auto prepare = [](const std::vector<Trajectory>& trajs) {
        std::pair<std::vector<Trajectory>, std::vector<double>> out;
        for (const auto& t : trajs) {
            out.first.push_back(strip_timing(t));
            out.second.push_back(travel_time_s(t));
        }
        return out;
    };
    const auto [x_tr, y_tr] = prepare(split.train);
    const auto [x_va, y_va] = prepare(split.valid);
    const auto [x_te, y_te] = prepare(split.test);
    if (x_tr.empty() || x_va.empty() || x_te.empty()) throw DataError("arrival time: empty split");
    const auto scaler = fit_scaler(y_tr);
    auto labels = [&](const std::vector<double>& y) {
        TaskLabels l{HeadKind::time, {}, {}};
        for (double v : y) l.values.push_back(scaler.to_unit(v));
        return l;
    };

    StudentModel<T> ft_copy;
    StudentModel<T>* m = &model;
    if (cfg.finetune) {
        ft_copy = clone_student(model, net);
        m = &ft_copy;
    }
    const auto in_tr = compress_all(*m, x_tr, cfg.thresholds, cfg.workers);
    const auto in_va = compress_all(*m, x_va, cfg.thresholds, cfg.workers);
    const auto in_te = compress_all(*m, x_te, cfg.thresholds, cfg.workers);
    auto prov = make_providers(*m, in_tr, in_va, in_te, cfg.finetune, cfg.workers);
    Rng rng(cfg.head.seed);
    PredictorHead<T> head(HeadKind::time, m->student.config.embed_dim, 1, rng);
    const auto res = train_head(head, prov.train, labels(y_tr), prov.valid, labels(y_va), cfg.head, prov.extra);
    std::vector<double> pred;
    for (const auto& row : predict_rows(head, prov.test, x_te.size())) pred.push_back(scaler.from_unit(row[0]));
    auto report = nlohmann::json{{"time", to_json(regression_metrics(pred, y_te))}};
    report["time"]["training"] = head_summary(res);
    return report;
}

/// Similar trajectory search over the test split with a fixed encoder.
template <typename T>
nlohmann::json run_similarity_search(const StudentModel<T>& m, const Split& split, const EvalConfig& cfg) {
    if (cfg.finetune) throw UsageError("similar trajectory search has no fine-tune variant");
    const auto& pool = split.test;
    const auto inst = sts_build_labels(pool, cfg.sts);

    // Halves of self-pair queries are embedded alongside the pool.
    std::vector<Trajectory> all = pool;
    std::vector<std::size_t> half_slot(pool.size(), 0);
    for (const auto& s : inst) {
        if (!s.self_pair) continue;
        auto [odd, even] = odd_even_halves(pool[s.query]);
        half_slot[s.query] = all.size();
        all.push_back(std::move(odd));
        all.push_back(std::move(even));
    }
    const auto inputs = compress_all(m, all, cfg.thresholds, cfg.workers);
    const auto table = embed_all(m.student, inputs, cfg.workers);
    const std::size_t e = table.dim(1);
    auto row = [&](std::size_t i) {
        return std::vector<double>(table.data().begin() + static_cast<std::ptrdiff_t>(i * e),
                                   table.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * e));
    };

    std::vector<std::size_t> ranks(inst.size());
    std::size_t self_pairs = 0;
    parallel_for(inst.size(), cfg.workers, [&](std::size_t k) {
        const auto& s = inst[k];
        const auto q = s.self_pair ? row(half_slot[s.query]) : row(s.query);
        std::vector<std::vector<double>> db{s.self_pair ? row(half_slot[s.query] + 1) : row(s.target)};
        std::vector<std::int64_t> ids{pool[s.target].id};
        for (auto j : s.negatives) {
            db.push_back(row(j));
            ids.push_back(pool[j].id);
        }
        const auto ranked = sts_search(q, db, ids);
        ranks[k] = static_cast<std::size_t>(std::find(ranked.begin(), ranked.end(), ids[0]) - ranked.begin()) + 1;
    });
    for (const auto& s : inst) self_pairs += s.self_pair;
    auto report = nlohmann::json{{"sts", to_json(ranking_metrics(ranks))}};
    report["sts"]["instances"] = inst.size();
    report["sts"]["negatives"] = cfg.sts.negatives;
    report["sts"]["self_pair_fraction"] = static_cast<double>(self_pairs) / static_cast<double>(inst.size());
    return report;
}

}  // namespace trajmamba
