#include <cmath>
#include <functional>
#include <optional>

#include "matchri/error.h"
#include "matchri/inference.h"

namespace matchri {

std::string to_string(TestMethod method) {
    switch (method) {
        case TestMethod::kAi: return "ai";
        case TestMethod::kSign: return "sign";
        case TestMethod::kPerm: return "perm";
    }
    return "?";
}

TestMethod parse_test_method(const std::string& name) {
    if (name == "ai") return TestMethod::kAi;
    if (name == "sign") return TestMethod::kSign;
    if (name == "perm") return TestMethod::kPerm;
    throw ConfigError("unknown test method '" + name + "' (expected ai, sign or perm)");
}

ConfidenceInterval invert_ci(const Sample& sample, const MatchSpec& spec, const TestConfig& config,
                             TestMethod method, const CiSearch& search, int j_var, AiVarianceForm form) {
    validate(config);
    if (!(search.lo < search.hi) || !std::isfinite(search.lo) || !std::isfinite(search.hi)) {
        throw ConfigError("confidence interval search range must satisfy lo < hi");
    }
    if (search.grid_points < 3) {
        throw ConfigError("confidence interval grid needs at least 3 points");
    }

    MatchSpec base = spec;
    base.center = 0.0;
    const Estimate est = estimate(sample, base);
    const OutcomeModel* model = est.model ? &*est.model : nullptr;
    std::optional<AiVariance> variance;
    if (method == TestMethod::kAi) {
        variance = ai_variance(sample, est.sets, est.effects, base, j_var, form);
    }

    const std::function<bool(double)> rejects = [&](double c) {
        const UnitEffects fx = recenter(est.effects, c);
        switch (method) {
            case TestMethod::kAi: return ai_test(fx, *variance, config.alpha).reject;
            case TestMethod::kSign: return sign_changes_test(fx, est.sets.components, config).reject;
            case TestMethod::kPerm: {
                MatchSpec at = base;
                at.center = c;
                return permutation_test(sample, est.sets, at, config, model).reject;
            }
        }
        return true;
    };

    const int n = search.grid_points;
    const double step = (search.hi - search.lo) / (n - 1);
    auto grid = [&](int i) { return i == n - 1 ? search.hi : search.lo + step * i; };
    std::vector<char> rejected(static_cast<std::size_t>(n));
    int first = -1;
    int last = -1;
    for (int i = 0; i < n; ++i) {
        rejected[static_cast<std::size_t>(i)] = rejects(grid(i));
        if (!rejected[static_cast<std::size_t>(i)]) {
            if (first < 0) first = i;
            last = i;
        }
    }
    if (first < 0) {
        throw DataError("empty confidence set: every grid value is rejected on [" + std::to_string(search.lo) + ", " +
                        std::to_string(search.hi) + "]");
    }

    ConfidenceInterval ci;
    ci.alpha = config.alpha;
    ci.method = method;
    ci.grid_points = n;
    ci.tolerance = (search.hi - search.lo) / 1e4;
    for (int i = first; i <= last; ++i) {
        if (rejected[static_cast<std::size_t>(i)]) ci.contiguous = false;
    }

    // Bisect between a rejected and an accepted value; returns the accepted end.
    auto refine = [&](double rej, double acc) {
        while (std::fabs(acc - rej) > ci.tolerance) {
            const double mid = 0.5 * (rej + acc);
            (rejects(mid) ? rej : acc) = mid;
        }
        return acc;
    };
    if (first == 0) {
        ci.lower = search.lo;
        ci.lower_censored = true;
    } else {
        ci.lower = refine(grid(first - 1), grid(first));
    }
    if (last == n - 1) {
        ci.upper = search.hi;
        ci.upper_censored = true;
    } else {
        ci.upper = refine(grid(last + 1), grid(last));
    }
    return ci;
}

}  // namespace matchri
