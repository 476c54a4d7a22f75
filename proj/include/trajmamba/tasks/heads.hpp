#pragma once

// Supervised heads on trajectory embeddings: destination point (GPS),
// destination road segment, and travel time.

#include <array>
#include <functional>
#include <limits>
#include <optional>
#include <random>

#include "trajmamba/grad/adam.hpp"
#include "trajmamba/pretrain/train.hpp"
#include "trajmamba/tasks/metrics.hpp"

namespace trajmamba {

enum class HeadKind { gps, road, time };

inline const char* head_kind_name(HeadKind k) {
    switch (k) {
        case HeadKind::gps: return "gps";
        case HeadKind::road: return "road";
        default: return "time";
    }
}

/// E -> hidden (ReLU) -> out. Hidden width defaults to E.
template <typename T>
struct PredictorHead {
    HeadKind kind = HeadKind::gps;
    Linear<T> hidden, out;

    PredictorHead() = default;
    PredictorHead(HeadKind k, std::size_t e, std::size_t out_dim, Rng& rng, std::size_t hidden_dim = 0)
        : kind(k), hidden(e, hidden_dim ? hidden_dim : e, rng), out(hidden_dim ? hidden_dim : e, out_dim, rng) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return out(relu(hidden(x))); }

    void collect(ParameterSet<T>& ps, const std::string& prefix) const {
        hidden.collect(ps, prefix + ".hidden");
        out.collect(ps, prefix + ".out");
    }
};

/// Affine normalization of regression targets: (y - shift) / scale.
struct TargetScaler {
    double shift = 0.0, scale = 1.0;
    double to_unit(double y) const { return (y - shift) / scale; }
    double from_unit(double u) const { return u * scale + shift; }
};

inline TargetScaler fit_scaler(const std::vector<double>& y) {
    if (y.empty()) throw DataError("fit_scaler: no targets");
    double mean = 0.0, var = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    for (double v : y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(y.size());
    return {mean, var > 0.0 ? std::sqrt(var) : 1.0};
}

/// Targets of one split. `values` holds normalized regression targets, two
/// per row for GPS and one per row for time; `classes` holds road ids.
struct TaskLabels {
    HeadKind kind = HeadKind::gps;
    std::vector<double> values;
    std::vector<std::size_t> classes;

    std::size_t size() const {
        if (kind == HeadKind::road) return classes.size();
        return kind == HeadKind::gps ? values.size() / 2 : values.size();
    }
};

/// Mean squared error for GPS/time, mean cross-entropy for road.
template <typename T>
Tensor<T> head_loss(const Tensor<T>& pred, const TaskLabels& labels, const std::vector<std::size_t>& rows) {
    const std::size_t b = rows.size();
    if (pred.dim(0) != b) throw ShapeError("head_loss: prediction rows differ from batch size");
    if (labels.kind == HeadKind::road) {
        const std::size_t c = pred.dim(1);
        std::vector<T> onehot(b * c, T(0));
        for (std::size_t i = 0; i < b; ++i) {
            const auto y = labels.classes.at(rows[i]);
            if (y >= c) throw DataError("head_loss: class " + std::to_string(y) + " outside head width");
            onehot[i * c + y] = T(1);
        }
        auto picked = sum_all(mul(log_softmax(pred), Tensor<T>::from({b, c}, std::move(onehot))));
        return scale(picked, static_cast<T>(-1.0 / static_cast<double>(b)));
    }
    const std::size_t d = labels.kind == HeadKind::gps ? 2 : 1;
    if (pred.dim(1) != d) throw ShapeError("head_loss: regression head width mismatch");
    std::vector<T> y(b * d);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t k = 0; k < d; ++k) y[i * d + k] = static_cast<T>(labels.values.at(rows[i] * d + k));
    auto diff = sub(pred, Tensor<T>::from({b, d}, std::move(y)));
    return mean_all(mul(diff, diff));
}

struct HeadTrainConfig {
    std::size_t max_epochs = 200;
    std::size_t batch_size = 128;
    double lr = 1e-3;
    std::size_t patience = 20;  // epochs without validation improvement before stopping
    std::uint64_t seed = 7;
};

struct HeadTrainResult {
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_valid_loss = std::numeric_limits<double>::infinity();
    double best_valid_acc1 = 0.0;  // road heads only
    std::vector<double> valid_curve;
};

/// Embedding provider: rows of the requested trajectories, [b x E]. In
/// frozen mode it returns constants; in fine-tune mode it builds a graph
/// through the encoder, whose tensors are then passed as `extra`.
template <typename T>
using EmbedFn = std::function<Tensor<T>(const std::vector<std::size_t>&)>;

template <typename T>
double evaluate_head_loss(const PredictorHead<T>& head, const EmbedFn<T>& embed, const TaskLabels& labels,
                          std::size_t batch) {
    NoGradGuard ng;
    double sum = 0.0;
    const std::size_t n = labels.size();
    for (std::size_t s = 0; s < n; s += batch) {
        std::vector<std::size_t> rows;
        for (std::size_t i = s; i < std::min(n, s + batch); ++i) rows.push_back(i);
        sum += static_cast<double>(head_loss(head(embed(rows)), labels, rows).item()) * static_cast<double>(rows.size());
    }
    return sum / static_cast<double>(n);
}

/// Validation Acc@1 of a road head.
template <typename T>
double evaluate_head_acc1(const PredictorHead<T>& head, const EmbedFn<T>& embed, const TaskLabels& labels,
                          std::size_t batch) {
    NoGradGuard ng;
    std::size_t hits = 0;
    const std::size_t n = labels.size();
    for (std::size_t s = 0; s < n; s += batch) {
        std::vector<std::size_t> rows;
        for (std::size_t i = s; i < std::min(n, s + batch); ++i) rows.push_back(i);
        const auto p = head(embed(rows));
        const std::size_t c = p.dim(1);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto row = p.data().subspan(r * c, c);
            hits += static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) ==
                    labels.classes[rows[r]];
        }
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

/// Adam on the head (plus `extra` in fine-tune mode), early-stopped on the
/// validation loss, or for road heads on validation Acc@1 with the loss as
/// tie-break (cross-entropy keeps rising from overconfidence while accuracy
/// still improves). The best epoch's values are restored at the end.
template <typename T>
HeadTrainResult train_head(PredictorHead<T>& head, const EmbedFn<T>& train_embed, const TaskLabels& train,
                           const EmbedFn<T>& valid_embed, const TaskLabels& valid, const HeadTrainConfig& cfg,
                           ParameterSet<T> extra = {}) {
    if (train.size() == 0 || valid.size() == 0) throw DataError("train_head: empty train or validation split");
    if (cfg.batch_size == 0 || cfg.max_epochs == 0) throw UsageError("train_head: batch size and epochs must be >= 1");
    ParameterSet<T> ps;
    head.collect(ps, "head");
    ps.append(extra);
    Adam<T> opt(ps, {.learning_rate = cfg.lr});
    auto snapshot = [&] {
        std::vector<std::vector<T>> v;
        for (const auto& [_, t] : ps.params) v.emplace_back(t.data().begin(), t.data().end());
        return v;
    };
    auto best = snapshot();
    HeadTrainResult res;
    std::size_t since_best = 0;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        auto rng = epoch_rng(cfg.seed, epoch, 3);
        for (const auto& rows : epoch_batches(train.size(), cfg.batch_size, rng)) {
            opt.zero_grad();
            auto loss = head_loss(head(train_embed(rows)), train, rows);
            if (!std::isfinite(static_cast<double>(loss.item())))
                throw NumericError("train_head: non-finite loss at epoch " + std::to_string(epoch));
            backward(loss);
            opt.step();
        }
        const double v = evaluate_head_loss(head, valid_embed, valid, cfg.batch_size);
        const double acc = valid.kind == HeadKind::road ? evaluate_head_acc1(head, valid_embed, valid, cfg.batch_size) : 0.0;
        res.valid_curve.push_back(v);
        res.epochs_run = epoch + 1;
        const bool better = valid.kind == HeadKind::road
                                ? acc > res.best_valid_acc1 || (acc == res.best_valid_acc1 && v < res.best_valid_loss)
                                : v < res.best_valid_loss;
        if (better) {
            res.best_valid_loss = v;
            res.best_valid_acc1 = acc;
            res.best_epoch = epoch;
            best = snapshot();
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    for (std::size_t i = 0; i < ps.params.size(); ++i)
        std::copy(best[i].begin(), best[i].end(), ps.params[i].second.mutable_data().begin());
    return res;
}

/// Head outputs for every row, without a graph. [n x out]
template <typename T>
std::vector<std::vector<double>> predict_rows(const PredictorHead<T>& head, const EmbedFn<T>& embed, std::size_t n,
                                              std::size_t batch = 256) {
    NoGradGuard ng;
    std::vector<std::vector<double>> out;
    for (std::size_t s = 0; s < n; s += batch) {
        std::vector<std::size_t> rows;
        for (std::size_t i = s; i < std::min(n, s + batch); ++i) rows.push_back(i);
        auto p = head(embed(rows));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            std::vector<double> row(p.dim(1));
            for (std::size_t c = 0; c < row.size(); ++c) row[c] = static_cast<double>(p.at(r, c));
            out.push_back(std::move(row));
        }
    }
    return out;
}

/// Frozen-mode provider over a precomputed [n x E] matrix.
template <typename T>
EmbedFn<T> constant_embeddings(Tensor<T> table) {
    return [table](const std::vector<std::size_t>& rows) { return index_rows(table, rows); };
}

// ---------------------------------------------------------------- task inputs

inline constexpr std::size_t kPredictionHoldout = 5;

struct Truncated {
    Trajectory prefix;
    TrajPoint destination;
};

/// Drops the last five points; the withheld final point is the destination.
/// Returns nothing for trajectories shorter than 7 points.
inline std::optional<Truncated> truncate_for_prediction(const Trajectory& traj) {
    if (traj.size() < kPredictionHoldout + 2) return std::nullopt;
    Truncated t;
    t.destination = traj.points.back();
    t.prefix.id = traj.id;
    t.prefix.points.assign(traj.points.begin(), traj.points.end() - static_cast<std::ptrdiff_t>(kPredictionHoldout));
    return t;
}

/// Removes timing information except the departure time: point i is stamped
/// t0 + i seconds, so no feature carries the true travel time.
inline Trajectory strip_timing(const Trajectory& traj) {
    Trajectory out = traj;
    if (traj.points.empty()) return out;
    const auto t0 = traj.points.front().t;
    for (std::size_t i = 0; i < out.points.size(); ++i) out.points[i].t = t0 + static_cast<std::int64_t>(i);
    return out;
}

inline double travel_time_s(const Trajectory& traj) {
    return static_cast<double>(traj.points.back().t - traj.points.front().t);
}

}  // namespace trajmamba
