#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gpas/autodiff.hpp"

namespace gpas::ad {

struct NamedParameter {
    std::string name;
    Parameter *param = nullptr;
};

/// Builds a scalar on the supplied tape. Must be a pure function of the
/// parameter values: any RngStream it uses has to be re-seeded on each call.
using ScalarFunction = std::function<Var(Tape &)>;

struct GradCheckOptions {
    double eps = 1e-5;
    double tol = 1e-4;
    std::size_t keep_worst = 10;
};

struct GradCheckEntry {
    std::string name;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    bool passed = true;
    /// Sorted by decreasing relative error.
    std::vector<GradCheckEntry> worst;
    /// Max relative error per named parameter group.
    std::map<std::string, double> per_group;
};

/// Compares reverse-mode gradients of f against central differences
/// (f(x+eps) - f(x-eps)) / (2 eps) for every scalar of every parameter,
/// using |g_ad - g_fd| / max(1, |g_ad|, |g_fd|) as the error measure.
/// Throws OracleInvalidError if two evaluations of f at the same point differ.
GradCheckReport grad_check(const ScalarFunction &f, std::span<const NamedParameter> params,
                           const GradCheckOptions &options = {});

} // namespace gpas::ad
