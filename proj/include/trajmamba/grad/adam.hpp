#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "trajmamba/grad/nn.hpp"

namespace trajmamba {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed ParameterSet. Moments are kept in the
/// parameter's scalar type.
template <typename T>
class Adam {
public:
    Adam(ParameterSet<T> params, AdamConfig config) : params_(std::move(params)), config_(config) {
        for (const auto& [_, t] : params_.params) {
            first_moment_.emplace_back(t.numel(), T(0));
            second_moment_.emplace_back(t.numel(), T(0));
        }
    }

    void zero_grad() { params_.zero_grad(); }

    /// Applies one update. Every parameter must carry a gradient.
    void step() {
        for (const auto& [name, t] : params_.params) {
            if (!t.has_grad()) throw UsageError("adam_step: parameter '" + name + "' has no gradient");
        }
        ++step_count_;
        const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
        const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
        for (std::size_t p = 0; p < params_.params.size(); ++p) {
            auto& t = params_.params[p].second;
            auto data = t.mutable_data();
            auto g = t.grad();
            auto& m = first_moment_[p];
            auto& v = second_moment_[p];
            for (std::size_t i = 0; i < data.size(); ++i) {
                m[i] = b1 * m[i] + (T(1) - b1) * g[i];
                v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
                const double mhat = static_cast<double>(m[i]) / bc1;
                const double vhat = static_cast<double>(v[i]) / bc2;
                data[i] -= static_cast<T>(config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon));
            }
        }
    }

    std::size_t step_count() const { return step_count_; }
    void set_step_count(std::size_t s) { step_count_ = s; }
    const AdamConfig& config() const { return config_; }
    ParameterSet<T>& parameters() { return params_; }

    std::vector<std::vector<T>>& first_moment() { return first_moment_; }
    std::vector<std::vector<T>>& second_moment() { return second_moment_; }

private:
    ParameterSet<T> params_;
    AdamConfig config_;
    std::vector<std::vector<T>> first_moment_;
    std::vector<std::vector<T>> second_moment_;
    std::size_t step_count_ = 0;
};

}  // namespace trajmamba
