#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "trajmamba/grad/nn.hpp"

namespace trajmamba {

/// Log-parameterized multiplier on InfoNCE logits; exp(log_t) stays positive.
template <typename T>
struct LearnableTemperature {
    Tensor<T> log_t;  // [1]

    explicit LearnableTemperature(double init = std::log(1.0 / 0.07))
        : log_t(Tensor<T>::full({1}, static_cast<T>(init), true)) {}

    double multiplier() const { return std::exp(static_cast<double>(log_t[0])); }

    void collect(ParameterSet<T>& ps, const std::string& prefix) const { ps.add(prefix + ".log_t", log_t); }
};

template <typename T>
Tensor<T> identity_matrix(std::size_t n) {
    auto t = Tensor<T>::zeros({n, n});
    auto d = t.mutable_data();
    for (std::size_t i = 0; i < n; ++i) d[i * n + i] = T(1);
    return t;
}

/// Mean cross-entropy of each anchor against all positives, with its own
/// positive as the target class. Rows are L2-normalized first.
template <typename T>
Tensor<T> infonce_pair_loss(const Tensor<T>& anchors, const Tensor<T>& positives, const LearnableTemperature<T>& temp) {
    if (anchors.rank() != 2 || anchors.shape() != positives.shape())
        throw ShapeError("infonce: anchors " + shape_str(anchors.shape()) + " vs positives " +
                         shape_str(positives.shape()));
    const std::size_t b = anchors.dim(0);
    auto logits = mul(matmul(l2_normalize_rows(anchors), transpose(l2_normalize_rows(positives))), exp(temp.log_t));
    auto picked = sum_all(mul(log_softmax(logits), identity_matrix<T>(b)));
    return scale(picked, static_cast<T>(-1.0 / static_cast<double>(b)));
}

struct MecOptions {
    std::size_t order = 4;  // K, terms of the log-det Taylor series
    double eps = 0.0;       // 0 selects eps^2 = E, so lambda = 1/B
    bool literal = false;   // drop the matrix power, as the equation is printed
};

/// Maximum-entropy-coding loss between two row-normalized [B x E] batches:
///   -mu_c * tr( sum_k (-1)^(k+1)/k M^k ),  M = lambda Zt^T Zs,
///   mu_c = (B + E)/2,  lambda = E / (B eps^2).
template <typename T>
Tensor<T> mec_loss(const Tensor<T>& z_teacher, const Tensor<T>& z_student, const MecOptions& opt = {}) {
    if (z_teacher.rank() != 2 || z_teacher.shape() != z_student.shape())
        throw ShapeError("mec_loss: teacher " + shape_str(z_teacher.shape()) + " vs student " +
                         shape_str(z_student.shape()));
    if (opt.order == 0) throw UsageError("mec_loss: order K must be >= 1");
    const double b = static_cast<double>(z_teacher.dim(0)), e = static_cast<double>(z_teacher.dim(1));
    const double eps_sq = opt.eps > 0.0 ? opt.eps * opt.eps : e;
    const double lambda = e / (b * eps_sq);
    const double mu_c = (b + e) / 2.0;
    auto m = scale(matmul(transpose(z_teacher), z_student), static_cast<T>(lambda));
    Tensor<T> series;
    if (opt.literal) {
        double coef = 0.0;
        for (std::size_t k = 1; k <= opt.order; ++k) coef += (k % 2 == 1 ? 1.0 : -1.0) / static_cast<double>(k);
        series = scale(m, static_cast<T>(coef));
    } else {
        auto power = m;
        series = m;
        for (std::size_t k = 2; k <= opt.order; ++k) {
            power = matmul(power, m);
            series = add(series, scale(power, static_cast<T>((k % 2 == 1 ? 1.0 : -1.0) / static_cast<double>(k))));
        }
    }
    return scale(trace(series), static_cast<T>(-mu_c));
}

/// Expected keep-probability of the Gaussian gate, averaged over all points:
/// mean(1/2 + 1/2 erf(mu / (sqrt(2) delta))).
template <typename T>
Tensor<T> mask_loss(const Tensor<T>& mu, double delta) {
    if (!(delta > 0.0)) throw UsageError("mask_loss: delta must be positive");
    auto e = erf(scale(mu, static_cast<T>(1.0 / (std::numbers::sqrt2 * delta))));
    return mean_all(add_scalar(scale(e, T(0.5)), T(0.5)));
}

}  // namespace trajmamba
