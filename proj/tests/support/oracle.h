#pragma once

// Test-side reference implementations. They share nothing with the library's
// group machinery: every transformation is materialized explicitly and each
// statistic is recomputed from scratch with two-pass formulas.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <vector>

#include "matchri/matching.h"
#include "matchri/sample.h"

namespace oracle {

struct Enumeration {
    std::uint64_t k = 0;      // admissible transformations
    std::uint64_t count = 0;  // transformations with T >= T(observed)
    double p() const { return static_cast<double>(count) / static_cast<double>(k); }
    double observed = 0.0;
};

inline double studentized(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (sd == 0.0) return mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::fabs(mean) / sd;
}

inline double abs_mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return std::fabs(s / static_cast<double>(v.size()));
}

// Relative slack when comparing statistics computed in different summation
// orders by the library and by the oracle.
inline bool at_least(double t, double observed) {
    if (std::isinf(observed)) return std::isinf(t);
    return t >= observed - 1e-9 * std::max(1.0, std::fabs(observed));
}

/// Every sign vector over {-1,1}^N1, kept when units sharing a matched
/// control carry the same sign.
inline Enumeration sign_changes(const std::vector<double>& tau, const std::vector<std::vector<std::size_t>>& linked) {
    const std::size_t n = tau.size();
    Enumeration e;
    e.observed = studentized(tau);
    std::vector<double> v(n);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        bool ok = true;
        for (const auto& group : linked) {
            for (std::size_t i = 1; i < group.size(); ++i) {
                if (((mask >> group[i]) & 1U) != ((mask >> group[0]) & 1U)) ok = false;
            }
        }
        if (!ok) continue;
        for (std::size_t i = 0; i < n; ++i) v[i] = (mask >> i) & 1U ? -tau[i] : tau[i];
        ++e.k;
        if (at_least(studentized(v), e.observed)) ++e.count;
    }
    return e;
}

/// Treated units grouped by shared matched controls, rebuilt from the raw
/// neighbor lists by repeated merging.
inline std::vector<std::vector<std::size_t>> linked_units(const matchri::MatchedSets& sets) {
    const std::size_t n = sets.n_treated();
    std::vector<std::size_t> label(n);
    for (std::size_t i = 0; i < n; ++i) label[i] = i;
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = a + 1; b < n; ++b) {
                bool share = false;
                for (const auto& na : sets.neighbors[a]) {
                    for (const auto& nb : sets.neighbors[b]) share |= na.row == nb.row;
                }
                if (share && label[a] != label[b]) {
                    const std::size_t lo = std::min(label[a], label[b]);
                    const std::size_t hi = std::max(label[a], label[b]);
                    for (auto& l : label) {
                        if (l == hi) l = lo;
                    }
                    changed = true;
                }
            }
        }
    }
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[label[i]].push_back(i);
    std::vector<std::vector<std::size_t>> out;
    for (auto& [l, g] : groups) out.push_back(g);
    return out;
}

/// Every assignment of the treated role within each matched set, (M+1)^N1 in
/// total, dropping those where a shared control is treated in one set and a
/// control in another. Unadjusted outcomes; c is attached to the treated slot.
inline Enumeration permutation(const matchri::Sample& s, const matchri::MatchedSets& sets, double c,
                               bool standardized) {
    const std::size_t n = sets.n_treated();
    const std::size_t width = static_cast<std::size_t>(sets.m) + 1;
    std::vector<std::vector<double>> w(n);
    std::vector<std::vector<std::size_t>> member(n);
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t row = s.treated[t];
        w[t].push_back(s.y[static_cast<Eigen::Index>(row)] - c);
        member[t].push_back(row);
        for (const auto& nb : sets.neighbors[t]) {
            w[t].push_back(s.y[static_cast<Eigen::Index>(nb.row)]);
            member[t].push_back(nb.row);
        }
    }
    auto effects = [&](const std::vector<std::size_t>& pick) {
        std::vector<double> out(n);
        for (std::size_t t = 0; t < n; ++t) {
            double rest = 0.0;
            for (std::size_t j = 0; j < width; ++j) {
                if (j != pick[t]) rest += w[t][j];
            }
            out[t] = w[t][pick[t]] - rest / static_cast<double>(width - 1);
        }
        return out;
    };
    auto stat = [&](const std::vector<double>& v) { return standardized ? studentized(v) : abs_mean(v); };

    Enumeration e;
    std::vector<std::size_t> pick(n, 0);
    e.observed = stat(effects(pick));
    std::uint64_t total = 1;
    for (std::size_t t = 0; t < n; ++t) total *= width;
    for (std::uint64_t code = 0; code < total; ++code) {
        std::uint64_t rest = code;
        for (std::size_t t = 0; t < n; ++t) {
            pick[t] = rest % width;
            rest /= width;
        }
        // role of each control row: 1 treated, 0 control, per set containing it
        std::map<std::size_t, int> role;
        bool ok = true;
        for (std::size_t t = 0; t < n && ok; ++t) {
            for (std::size_t j = 1; j < width; ++j) {
                const int r = pick[t] == j ? 1 : 0;
                const auto [it, fresh] = role.emplace(member[t][j], r);
                if (!fresh && it->second != r) ok = false;
            }
        }
        if (!ok) continue;
        ++e.k;
        if (at_least(stat(effects(pick)), e.observed)) ++e.count;
    }
    return e;
}

/// Random one-covariate sample with `n1` treated and `n0` controls.
inline matchri::Sample random_sample(std::mt19937_64& g, std::size_t n1, std::size_t n0, std::size_t k = 1) {
    std::normal_distribution<double> z;
    const std::size_t n = n1 + n0;
    std::vector<double> y(n);
    std::vector<int> w(n);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = i < n1 ? 1 : 0;
        for (std::size_t j = 0; j < k; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = z(g);
        y[i] = x(static_cast<Eigen::Index>(i), 0) + z(g) + (w[i] ? 0.3 : 0.0);
    }
    return matchri::make_sample(y, w, x);
}

}  // namespace oracle
