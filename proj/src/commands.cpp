#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>

#include "matchri/error.h"
#include "matchri/io.h"

namespace matchri::io {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

AiVarianceForm ai_form(const RunConfig& c) { return parse_ai_variance_form(c.ai_variance); }

std::size_t shared_count(const MatchedSets& sets) {
    return static_cast<std::size_t>(
        std::count_if(sets.components.begin(), sets.components.end(), [](const auto& c) { return c.size() > 1; }));
}

std::vector<TestMethod> methods_of(const RunConfig& c, std::vector<TestMethod> fallback) {
    if (c.methods.empty()) return fallback;
    std::vector<TestMethod> out;
    for (const auto& m : c.methods) {
        const TestMethod t = parse_test_method(m);
        if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    }
    return out;
}

struct Loaded {
    Sample sample;
    MatchSpec spec;
};

Loaded load(const RunConfig& c, Report& r) {
    Loaded l{load_csv(c.input, c.columns, &r.warnings), {}};
    l.spec = match_spec(c, &l.sample);
    return l;
}

std::string join_ids(const std::vector<Neighbor>& nb) {
    std::string s;
    for (const auto& n : nb) {
        if (!s.empty()) s += ';';
        s += std::to_string(n.row_id);
    }
    return s;
}

}  // namespace

Report cmd_estimate(const RunConfig& c) {
    Report r{c.echo(), {}, {}};
    const Loaded l = load(c, r);
    const Estimate est = estimate(l.sample, l.spec);

    Table summary{"estimate",
                  {"tau_hat", "n1", "n0", "m", "c", "bias_adjusted", "components", "shared_components", "max_reuse"},
                  {}};
    const int max_reuse = *std::max_element(est.sets.k_count.begin(), est.sets.k_count.end());
    summary.rows.push_back({est.effects.tau_hat, l.sample.n_treated(), l.sample.n_controls(), l.spec.m, l.spec.center,
                            est.effects.bias_adjusted, est.sets.components.size(), shared_count(est.sets), max_reuse});
    r.tables.push_back(std::move(summary));

    Table units{"units", {"row_id", "tau_i", "neighbors", "component"}, {}};
    std::vector<std::size_t> comp(est.sets.n_treated());
    for (std::size_t g = 0; g < est.sets.components.size(); ++g) {
        for (std::size_t t : est.sets.components[g]) comp[t] = g;
    }
    for (std::size_t t = 0; t < est.sets.n_treated(); ++t) {
        units.rows.push_back({est.sets.treated_row_id[t], est.effects.tau_i[t], join_ids(est.sets.neighbors[t]), comp[t]});
    }
    r.tables.push_back(std::move(units));
    return r;
}

Report cmd_test(const RunConfig& c) {
    Report r{c.echo(), {}, {}};
    const Loaded l = load(c, r);
    const TestConfig tc = test_config(c);
    const Estimate est = estimate(l.sample, l.spec);
    const OutcomeModel* model = est.model ? &*est.model : nullptr;
    const bool all = c.methods.empty();

    Table t{"tests",
            {"method", "tau_hat", "statistic", "p_value", "reject", "group_size", "reference_size", "enumerated",
             "critical_value", "min_attainable_p", "std_error", "components", "shared_components", "note"},
            {}};
    const std::size_t comps = est.sets.components.size();
    const std::size_t shared = shared_count(est.sets);
    for (TestMethod m : methods_of(c, {TestMethod::kAi, TestMethod::kSign, TestMethod::kPerm})) {
        const std::string name = to_string(m);
        try {
            if (m == TestMethod::kAi) {
                const AiVariance v = ai_variance(l.sample, est.sets, est.effects, l.spec, c.j_var, ai_form(c));
                const AsymptoticResult a = ai_test(est.effects, v, c.alpha);
                t.rows.push_back({name, est.effects.tau_hat, std::fabs(a.z), a.p_value, a.reject, nullptr, nullptr,
                                  nullptr, nullptr, nullptr, a.std_error, comps, shared, ""});
                continue;
            }
            const RandomizationResult res = m == TestMethod::kSign
                                                ? sign_changes_test(est.effects, est.sets.components, tc)
                                                : permutation_test(l.sample, est.sets, l.spec, tc, model);
            t.rows.push_back({name, est.effects.tau_hat, res.statistic, res.p_value, res.reject, res.group_size,
                              res.reference_size, res.enumerated, res.critical_value, res.min_attainable_p, nullptr,
                              comps, shared, ""});
        } catch (const Error& e) {
            // Requested methods fail loudly; the default "all methods" run
            // reports the failure in its row and keeps the others.
            if (!all) throw;
            t.rows.push_back({name, est.effects.tau_hat, nullptr, nullptr, nullptr, nullptr, nullptr, nullptr, nullptr,
                              nullptr, nullptr, comps, shared, std::string("unavailable: ") + e.what()});
        }
    }
    r.tables.push_back(std::move(t));
    return r;
}

Report cmd_ci(const RunConfig& c) {
    Report r{c.echo(), {}, {}};
    const Loaded l = load(c, r);
    const TestConfig tc = test_config(c);
    const CiSearch search{c.ci_lo, c.ci_hi, c.grid};

    Table t{"ci",
            {"method", "lower", "upper", "alpha", "lower_censored", "upper_censored", "range_censored", "contiguous",
             "grid_points", "tolerance", "note"},
            {}};
    for (TestMethod m : methods_of(c, {TestMethod::kSign})) {
        const ConfidenceInterval ci = invert_ci(l.sample, l.spec, tc, m, search, c.j_var, ai_form(c));
        std::string note;
        if (ci.range_censored()) note = "interval reaches the search range; widen --ci-lo/--ci-hi";
        if (!ci.contiguous) note += std::string(note.empty() ? "" : "; ") + "rejected points inside the interval";
        t.rows.push_back({to_string(m), ci.lower, ci.upper, ci.alpha, ci.lower_censored, ci.upper_censored,
                          ci.range_censored(), ci.contiguous, ci.grid_points, ci.tolerance, note});
    }
    r.tables.push_back(std::move(t));
    return r;
}

namespace {

McConfig mc_config(const RunConfig& c, int m) {
    McConfig mc;
    mc.reps = c.reps;
    mc.master_seed = c.seed;
    RunConfig one = c;
    one.m = {m};
    mc.match = match_spec(one, nullptr);
    mc.test = test_config(c);
    mc.j_var = c.j_var;
    mc.ai_form = ai_form(c);
    mc.threads = c.threads;
    const auto methods = methods_of(c, {TestMethod::kAi, TestMethod::kSign});
    mc.tests.ai = std::find(methods.begin(), methods.end(), TestMethod::kAi) != methods.end();
    mc.tests.sign = std::find(methods.begin(), methods.end(), TestMethod::kSign) != methods.end();
    mc.tests.perm = std::find(methods.begin(), methods.end(), TestMethod::kPerm) != methods.end();
    return mc;
}

DgpSpec dgp_of(const RunConfig& c, const std::string& name, int n1) {
    DgpSpec d = panel(name, static_cast<std::size_t>(n1), static_cast<std::size_t>(c.n0));
    d.k = static_cast<std::size_t>(c.k);
    d.tau = c.tau;
    validate(d);
    return d;
}

std::string rate_note(const RateSummary& s) { return s.se == 0.0 ? "degenerate se" : ""; }

}  // namespace

Report cmd_mc(const RunConfig& c) {
    Report r{c.echo(), {}, {}};
    Table t{"mc", {"panel", "n1", "n0", "m", "tau", "test", "rate", "se", "rejections", "reps", "seed", "note"}, {}};
    for (const auto& p : c.panel) {
        for (int n1 : c.n1) {
            for (int m : c.m) {
                const DgpSpec d = dgp_of(c, p, n1);
                const McConfig mc = mc_config(c, m);
                const McResult res = run_mc_size(d, mc);
                const std::pair<const char*, const std::optional<RateSummary>*> rows[] = {
                    {"ai", &res.ai}, {"sign", &res.sign}, {"perm", &res.perm}};
                for (const auto& [name, s] : rows) {
                    if (!*s) continue;
                    t.rows.push_back({p, n1, c.n0, m, d.tau, name, (*s)->rate, (*s)->se, (*s)->rejections, res.reps,
                                      c.seed, rate_note(**s)});
                }
            }
        }
    }
    r.tables.push_back(std::move(t));
    return r;
}

Report cmd_power(const RunConfig& c) {
    Report r{c.echo(), {}, {}};
    Table t{"power",
            {"panel", "n1", "n0", "m", "tau", "test", "rate", "se", "rejections", "reps", "seed", "critical_value",
             "note"},
            {}};
    for (const auto& p : c.panel) {
        for (int n1 : c.n1) {
            for (int m : c.m) {
                const DgpSpec d = dgp_of(c, p, n1);
                const McConfig mc = mc_config(c, m);
                const bool adjust = c.size_adjust && mc.tests.ai;
                const PowerCurve curve = run_mc_power(d, c.taus, mc, adjust);
                const Json crit = curve.ai_critical_value ? Json(*curve.ai_critical_value) : Json(nullptr);
                for (const auto& pt : curve.points) {
                    auto add = [&](const char* name, const RateSummary& s, const Json& cv) {
                        t.rows.push_back({p, n1, c.n0, m, pt.tau, name, s.rate, s.se, s.rejections, pt.result.reps,
                                          c.seed, cv, rate_note(s)});
                    };
                    if (pt.result.ai) add("ai", *pt.result.ai, nullptr);
                    if (pt.ai_size_adjusted) add("ai_size_adjusted", *pt.ai_size_adjusted, crit);
                    if (pt.result.sign) add("sign", *pt.result.sign, nullptr);
                    if (pt.result.perm) add("perm", *pt.result.perm, nullptr);
                }
            }
        }
    }
    r.tables.push_back(std::move(t));
    return r;
}

Report cmd_draw(const RunConfig& c) {
    const DgpSpec d = dgp_of(c, c.panel.front(), c.n1.front());
    const Sample s = draw_sample(d, c.seed);
    Report r{c.echo(), {}, {}};
    Table t{"sample", {"y", "w"}, {}};
    for (std::size_t j = 0; j < s.n_covariates(); ++j) t.columns.push_back("x" + std::to_string(j + 1));
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        std::vector<Json> cells{s.y[row], static_cast<int>(s.w[i])};
        for (Eigen::Index j = 0; j < s.x.cols(); ++j) cells.emplace_back(s.x(row, j));
        t.rows.push_back(std::move(cells));
    }
    r.tables.push_back(std::move(t));
    return r;
}

Report run(const RunConfig& c) {
    check(c);
    if (c.subcommand == "estimate") return cmd_estimate(c);
    if (c.subcommand == "test") return cmd_test(c);
    if (c.subcommand == "ci") return cmd_ci(c);
    if (c.subcommand == "mc") return cmd_mc(c);
    if (c.subcommand == "power") return cmd_power(c);
    return cmd_draw(c);
}

}  // namespace matchri::io
