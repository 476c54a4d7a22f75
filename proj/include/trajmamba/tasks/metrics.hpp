#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "json.hpp"
#include "trajmamba/traj/geo.hpp"

namespace trajmamba {

struct GpsMetrics {
    double mae_m = 0, rmse_m = 0;
};

/// Great-circle error between predicted and true points, in metres.
inline GpsMetrics gps_metrics(const std::vector<GeoPoint>& pred, const std::vector<GeoPoint>& truth) {
    if (pred.size() != truth.size() || pred.empty()) throw ShapeError("gps_metrics: misaligned or empty inputs");
    GpsMetrics m;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = haversine(pred[i], truth[i]);
        m.mae_m += d;
        m.rmse_m += d * d;
    }
    const auto n = static_cast<double>(pred.size());
    m.mae_m /= n;
    m.rmse_m = std::sqrt(m.rmse_m / n);
    return m;
}

struct ClassMetrics {
    double acc1 = 0, acc5 = 0, macro_recall = 0;
};

/// Rank of the true class among the scores of one row (1 = best). Ties
/// count against the truth, so a constant score vector gives the worst rank.
inline std::size_t rank_of(const std::vector<double>& scores, std::size_t truth) {
    std::size_t rank = 1;
    for (std::size_t c = 0; c < scores.size(); ++c)
        if (c != truth && scores[c] >= scores[truth]) ++rank;
    return rank;
}

/// Acc@1, Acc@5 and the unweighted mean of per-class recall over the classes
/// present in `truth`.
inline ClassMetrics class_metrics(const std::vector<std::vector<double>>& scores, const std::vector<std::size_t>& truth) {
    if (scores.size() != truth.size() || truth.empty()) throw ShapeError("class_metrics: misaligned or empty inputs");
    ClassMetrics m;
    std::map<std::size_t, std::pair<std::size_t, std::size_t>> per_class;  // class -> (hits, total)
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= scores[i].size()) throw ShapeError("class_metrics: label outside score range");
        const auto r = rank_of(scores[i], truth[i]);
        m.acc1 += r == 1;
        m.acc5 += r <= 5;
        auto& [hit, tot] = per_class[truth[i]];
        hit += r == 1;
        ++tot;
    }
    const auto n = static_cast<double>(truth.size());
    m.acc1 /= n;
    m.acc5 /= n;
    for (const auto& [_, ht] : per_class) m.macro_recall += static_cast<double>(ht.first) / static_cast<double>(ht.second);
    m.macro_recall /= static_cast<double>(per_class.size());
    return m;
}

struct RegressionMetrics {
    double mae = 0, rmse = 0, mape = 0;  // mape in percent, zero-truth rows excluded
};

inline RegressionMetrics regression_metrics(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size() || pred.empty()) throw ShapeError("regression_metrics: misaligned or empty inputs");
    RegressionMetrics m;
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - truth[i];
        m.mae += std::abs(e);
        m.rmse += e * e;
        if (truth[i] != 0.0) {
            m.mape += std::abs(e / truth[i]);
            ++nonzero;
        }
    }
    const auto n = static_cast<double>(pred.size());
    m.mae /= n;
    m.rmse = std::sqrt(m.rmse / n);
    m.mape = nonzero ? 100.0 * m.mape / static_cast<double>(nonzero) : 0.0;
    return m;
}

struct RankingMetrics {
    double acc1 = 0, acc5 = 0, mean_rank = 0;
};

/// From 1-based ranks of each query's target.
inline RankingMetrics ranking_metrics(const std::vector<std::size_t>& ranks) {
    if (ranks.empty()) throw ShapeError("ranking_metrics: no queries");
    RankingMetrics m;
    for (auto r : ranks) {
        if (r == 0) throw ShapeError("ranking_metrics: ranks are 1-based");
        m.acc1 += r == 1;
        m.acc5 += r <= 5;
        m.mean_rank += static_cast<double>(r);
    }
    const auto n = static_cast<double>(ranks.size());
    m.acc1 /= n;
    m.acc5 /= n;
    m.mean_rank /= n;
    return m;
}

inline nlohmann::json to_json(const GpsMetrics& m) { return {{"mae_m", m.mae_m}, {"rmse_m", m.rmse_m}}; }
inline nlohmann::json to_json(const ClassMetrics& m) {
    return {{"acc1", m.acc1}, {"acc5", m.acc5}, {"macro_recall", m.macro_recall}};
}
inline nlohmann::json to_json(const RegressionMetrics& m) {
    return {{"mae", m.mae}, {"rmse", m.rmse}, {"mape", m.mape}};
}
inline nlohmann::json to_json(const RankingMetrics& m) {
    return {{"acc1", m.acc1}, {"acc5", m.acc5}, {"mean_rank", m.mean_rank}};
}

}  // namespace trajmamba
