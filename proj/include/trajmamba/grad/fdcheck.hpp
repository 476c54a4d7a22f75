#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "trajmamba/grad/nn.hpp"

namespace trajmamba {

struct FdParamResult {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    bool finite = true;
};

struct FdReport {
    std::vector<FdParamResult> per_param;
    std::vector<FdParamResult> failures;  // over tolerance or non-finite

    bool passed() const { return failures.empty(); }
    double max_rel_error() const {
        double m = 0.0;
        for (const auto& p : per_param) m = std::max(m, p.max_rel_error);
        return m;
    }
};

struct FdOptions {
    double step = 1e-5;
    double tolerance = 1e-6;
    /// Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
    /// near-zero gradients from turning rounding noise into huge ratios.
    double floor = 1e-6;
    /// 0 checks every element; otherwise an evenly spaced subset per tensor.
    std::size_t max_elements_per_param = 0;
};

/// Central-difference check of the analytic gradient of a scalar function
/// with respect to every named parameter. The function must be deterministic.
inline FdReport finite_difference_check(const std::function<Tensor<double>()>& f,
                                        ParameterSet<double>& params, const FdOptions& opt = {}) {
    params.zero_grad();
    {
        auto loss = f();
        backward(loss);
    }
    FdReport report;
    for (auto& [name, t] : params.params) {
        FdParamResult res;
        res.name = name;
        std::vector<double> analytic(t.grad().begin(), t.grad().end());
        auto data = t.mutable_data();
        std::size_t stride = 1;
        if (opt.max_elements_per_param > 0 && data.size() > opt.max_elements_per_param) {
            stride = (data.size() + opt.max_elements_per_param - 1) / opt.max_elements_per_param;
        }
        for (std::size_t i = 0; i < data.size(); i += stride) {
            const double saved = data[i];
            double fp = 0.0, fm = 0.0;
            {
                NoGradGuard guard;
                data[i] = saved + opt.step;
                fp = f().item();
                data[i] = saved - opt.step;
                fm = f().item();
            }
            data[i] = saved;
            const double numeric = (fp - fm) / (2.0 * opt.step);
            const double a = analytic[i];
            if (!std::isfinite(a) || !std::isfinite(numeric)) {
                res.finite = false;
                res.worst_index = i;
                res.analytic = a;
                res.numeric = numeric;
                res.max_rel_error = std::numeric_limits<double>::infinity();
                break;
            }
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.floor});
            if (i == 0 || rel > res.max_rel_error) {
                res.max_rel_error = rel;
                res.worst_index = i;
                res.analytic = a;
                res.numeric = numeric;
            }
        }
        if (!res.finite || res.max_rel_error > opt.tolerance) report.failures.push_back(res);
        report.per_param.push_back(std::move(res));
    }
    params.clear_grad();
    return report;
}

}  // namespace trajmamba
