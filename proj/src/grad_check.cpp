#include "gpas/grad_check.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "gpas/errors.hpp"

namespace gpas::ad {

namespace {

double evaluate(const ScalarFunction &f) {
    Tape tape;
    return f(tape).item();
}

} // namespace

GradCheckReport grad_check(const ScalarFunction &f, std::span<const NamedParameter> params,
                           const GradCheckOptions &options) {
    for (const auto &np : params) {
        if (np.param == nullptr) throw ConfigError("grad_check: null parameter '" + np.name + "'");
        np.param->zero_grad();
    }

    const double base = evaluate(f);
    if (std::bit_cast<std::uint64_t>(evaluate(f)) != std::bit_cast<std::uint64_t>(base)) {
        throw OracleInvalidError("grad_check: function is not deterministic (two evaluations differ)");
    }

    {
        Tape tape;
        Var loss = f(tape);
        tape.backward(loss);
    }

    GradCheckReport report;
    std::vector<GradCheckEntry> entries;
    for (const auto &np : params) {
        Parameter &p = *np.param;
        double group_max = 0.0;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double saved = p.value[i];
            p.value[i] = saved + options.eps;
            const double plus = evaluate(f);
            p.value[i] = saved - options.eps;
            const double minus = evaluate(f);
            p.value[i] = saved;

            const double numeric = (plus - minus) / (2.0 * options.eps);
            const double analytic = p.grad[i];
            const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
            double rel = std::abs(analytic - numeric) / denom;
            if (!std::isfinite(rel)) rel = std::numeric_limits<double>::infinity();
            entries.push_back({np.name, i, analytic, numeric, rel});
            group_max = std::max(group_max, rel);
            ++report.checked;
        }
        report.per_group[np.name] = group_max;
        report.max_rel_error = std::max(report.max_rel_error, group_max);
    }
    report.passed = report.max_rel_error <= options.tol;

    const std::size_t keep = std::min(options.keep_worst, entries.size());
    std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(keep), entries.end(),
                      [](const GradCheckEntry &a, const GradCheckEntry &b) { return a.rel_error > b.rel_error; });
    entries.resize(keep);
    report.worst = std::move(entries);
    return report;
}

} // namespace gpas::ad
