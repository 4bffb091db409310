#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "matchri/error.h"
#include "matchri/inference.h"
#include "matchri/io.h"
#include "matchri/simulation.h"
#include "matchri/statfun.h"

namespace py = pybind11;
using namespace matchri;

namespace {

MatchSpec make_spec(int m, const std::string& metric, std::optional<Eigen::MatrixXd> v,
                    std::vector<std::size_t> exact, const std::string& bias_adjust, double c) {
    MatchSpec s;
    s.m = m;
    if (metric == "mahalanobis") {
        s.metric = Metric::kMahalanobis;
    } else if (metric != "euclid") {
        throw ConfigError("unknown metric '" + metric + "' (expected euclid or mahalanobis)");
    }
    s.v = std::move(v);
    s.exact_columns = std::move(exact);
    if (bias_adjust == "all") {
        s.bias_adjust = BiasAdjust::kAllControls;
    } else if (bias_adjust == "neighbors") {
        s.bias_adjust = BiasAdjust::kNeighborsOnly;
    } else if (bias_adjust != "off") {
        throw ConfigError("unknown bias adjustment '" + bias_adjust + "' (expected off, all or neighbors)");
    }
    s.center = c;
    return s;
}

TestConfig make_test(double alpha, std::uint64_t max_enumeration, std::uint64_t n_draws, const std::string& stat,
                     std::uint64_t seed) {
    TestConfig t{alpha, max_enumeration, n_draws, PermStat::kAbsMean, seed};
    if (stat == "std" || stat == "standardized") {
        t.stat = PermStat::kStandardized;
    } else if (stat != "absmean") {
        throw ConfigError("unknown statistic '" + stat + "' (expected absmean or std)");
    }
    validate(t);
    return t;
}

py::dict rate_dict(const std::optional<RateSummary>& r) {
    py::dict d;
    if (r) {
        d["rate"] = r->rate;
        d["se"] = r->se;
        d["rejections"] = r->rejections;
    }
    return d;
}

}  // namespace

PYBIND11_MODULE(_matchri, m) {
    m.doc() = "Nearest-neighbor matching with randomization inference";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());

    py::class_<Sample>(m, "Sample")
        .def(py::init([](const std::vector<double>& y, const std::vector<int>& w, const Eigen::MatrixXd& x,
                         const std::vector<std::int64_t>& row_id) { return make_sample(y, w, x, row_id); }),
             py::arg("y"), py::arg("w"), py::arg("x"), py::arg("row_id") = std::vector<std::int64_t>{})
        .def_readonly("y", &Sample::y)
        .def_readonly("x", &Sample::x)
        .def_readonly("row_id", &Sample::row_id)
        .def_property_readonly("w", [](const Sample& s) { return std::vector<int>(s.w.begin(), s.w.end()); })
        .def_property_readonly("n_treated", &Sample::n_treated)
        .def_property_readonly("n_controls", &Sample::n_controls)
        .def("__len__", &Sample::size);

    py::class_<MatchSpec>(m, "MatchSpec")
        .def(py::init(&make_spec), py::arg("m") = 1, py::arg("metric") = "euclid", py::arg("v") = py::none(),
             py::arg("exact") = std::vector<std::size_t>{}, py::arg("bias_adjust") = "off", py::arg("c") = 0.0)
        .def_readwrite("m", &MatchSpec::m)
        .def_readwrite("c", &MatchSpec::center);

    py::class_<TestConfig>(m, "TestConfig")
        .def(py::init(&make_test), py::arg("alpha") = 0.10, py::arg("max_enumeration") = std::uint64_t{1} << 20,
             py::arg("n_draws") = 9999, py::arg("stat") = "absmean", py::arg("seed") = 0)
        .def_readwrite("alpha", &TestConfig::alpha)
        .def_readwrite("seed", &TestConfig::seed);

    py::class_<UnitEffects>(m, "UnitEffects")
        .def_readonly("tau_i", &UnitEffects::tau_i)
        .def_readonly("tau_hat", &UnitEffects::tau_hat)
        .def_readonly("center", &UnitEffects::center)
        .def_readonly("bias_adjusted", &UnitEffects::bias_adjusted);

    py::class_<MatchedSets>(m, "MatchedSets")
        .def_property_readonly("neighbors",
                               [](const MatchedSets& s) {
                                   std::vector<std::vector<std::int64_t>> out;
                                   for (const auto& nb : s.neighbors) {
                                       std::vector<std::int64_t> ids;
                                       for (const auto& n : nb) ids.push_back(n.row_id);
                                       out.push_back(std::move(ids));
                                   }
                                   return out;
                               })
        .def_readonly("k_count", &MatchedSets::k_count)
        .def_readonly("components", &MatchedSets::components)
        .def_property_readonly("has_shared_neighbors", &MatchedSets::has_shared_neighbors);

    py::class_<Estimate>(m, "Estimate")
        .def_readonly("sets", &Estimate::sets)
        .def_readonly("effects", &Estimate::effects)
        .def_property_readonly("tau_hat", [](const Estimate& e) { return e.effects.tau_hat; });

    py::class_<RandomizationResult>(m, "RandomizationResult")
        .def_readonly("statistic", &RandomizationResult::statistic)
        .def_readonly("p_value", &RandomizationResult::p_value)
        .def_readonly("reject", &RandomizationResult::reject)
        .def_readonly("group_size", &RandomizationResult::group_size)
        .def_readonly("reference_size", &RandomizationResult::reference_size)
        .def_readonly("enumerated", &RandomizationResult::enumerated)
        .def_readonly("critical_value", &RandomizationResult::critical_value)
        .def_readonly("min_attainable_p", &RandomizationResult::min_attainable_p);

    py::class_<AsymptoticResult>(m, "AsymptoticResult")
        .def_readonly("estimate", &AsymptoticResult::estimate)
        .def_readonly("std_error", &AsymptoticResult::std_error)
        .def_readonly("z", &AsymptoticResult::z)
        .def_readonly("p_value", &AsymptoticResult::p_value)
        .def_readonly("reject", &AsymptoticResult::reject)
        .def_property_readonly("conditional_variance", [](const AsymptoticResult& a) { return a.variance.conditional; })
        .def_property_readonly("heterogeneity_variance",
                               [](const AsymptoticResult& a) { return a.variance.heterogeneity; });

    py::class_<ConfidenceInterval>(m, "ConfidenceInterval")
        .def_readonly("lower", &ConfidenceInterval::lower)
        .def_readonly("upper", &ConfidenceInterval::upper)
        .def_readonly("alpha", &ConfidenceInterval::alpha)
        .def_readonly("tolerance", &ConfidenceInterval::tolerance)
        .def_readonly("lower_censored", &ConfidenceInterval::lower_censored)
        .def_readonly("upper_censored", &ConfidenceInterval::upper_censored)
        .def_readonly("contiguous", &ConfidenceInterval::contiguous)
        .def_property_readonly("range_censored", &ConfidenceInterval::range_censored);

    m.def("estimate", &estimate, py::arg("sample"), py::arg("spec") = MatchSpec{});

    m.def(
        "sign_changes_test",
        [](const Sample& s, const MatchSpec& spec, const TestConfig& cfg) {
            const Estimate e = estimate(s, spec);
            return sign_changes_test(e.effects, e.sets.components, cfg);
        },
        py::arg("sample"), py::arg("spec") = MatchSpec{}, py::arg("config") = TestConfig{});

    m.def(
        "permutation_test",
        [](const Sample& s, const MatchSpec& spec, const TestConfig& cfg) {
            const Estimate e = estimate(s, spec);
            return permutation_test(s, e.sets, spec, cfg, e.model ? &*e.model : nullptr);
        },
        py::arg("sample"), py::arg("spec") = MatchSpec{}, py::arg("config") = TestConfig{});

    m.def(
        "ai_test",
        [](const Sample& s, const MatchSpec& spec, double alpha, int j_var, const std::string& form) {
            const Estimate e = estimate(s, spec);
            const AiVariance v = ai_variance(s, e.sets, e.effects, spec, j_var, parse_ai_variance_form(form));
            return ai_test(e.effects, v, alpha);
        },
        py::arg("sample"), py::arg("spec") = MatchSpec{}, py::arg("alpha") = 0.10, py::arg("j_var") = 1,
        py::arg("variance") = "combined");

    m.def(
        "confidence_interval",
        [](const Sample& s, const MatchSpec& spec, const TestConfig& cfg, const std::string& method, double lo,
           double hi, int grid) { return invert_ci(s, spec, cfg, parse_test_method(method), CiSearch{lo, hi, grid}); },
        py::arg("sample"), py::arg("spec") = MatchSpec{}, py::arg("config") = TestConfig{}, py::arg("method") = "sign",
        py::arg("lo") = -10.0, py::arg("hi") = 10.0, py::arg("grid") = 201);

    m.def(
        "draw_sample",
        [](const std::string& name, std::size_t n1, std::size_t n0, std::uint64_t seed, double tau, std::size_t k) {
            DgpSpec d = panel(name, n1, n0);
            d.tau = tau;
            d.k = k;
            validate(d);
            return draw_sample(d, seed);
        },
        py::arg("panel"), py::arg("n1"), py::arg("n0"), py::arg("seed") = 0, py::arg("tau") = 0.0, py::arg("k") = 1);

    m.def(
        "mc_size",
        [](const std::string& name, std::size_t n1, std::size_t n0, int mm, std::size_t reps, std::uint64_t seed,
           double tau, double alpha, bool perm, unsigned threads) {
            DgpSpec d = panel(name, n1, n0);
            d.tau = tau;
            validate(d);
            McConfig mc;
            mc.reps = reps;
            mc.master_seed = seed;
            mc.match.m = mm;
            mc.test.alpha = alpha;
            mc.tests.perm = perm;
            mc.threads = threads;
            McResult r;
            {
                py::gil_scoped_release release;
                r = run_mc_size(d, mc);
            }
            py::dict out;
            out["reps"] = r.reps;
            out["ai"] = rate_dict(r.ai);
            out["sign"] = rate_dict(r.sign);
            out["perm"] = rate_dict(r.perm);
            out["mean_tau_hat"] = r.mean_tau_hat;
            out["sd_tau_hat"] = r.sd_tau_hat;
            out["shared_share"] = r.shared_share;
            return out;
        },
        py::arg("panel"), py::arg("n1"), py::arg("n0") = 1000, py::arg("m") = 1, py::arg("reps") = 2000,
        py::arg("seed") = 0, py::arg("tau") = 0.0, py::arg("alpha") = 0.10, py::arg("perm") = false,
        py::arg("threads") = 0);

    m.def(
        "load_csv", [](const std::string& path) { return io::load_csv(path); }, py::arg("path"));
    m.def("write_csv", &io::write_sample_csv, py::arg("sample"), py::arg("path"));

    m.def("norm_cdf", &statfun::norm_cdf, py::arg("x"));
    m.def("norm_quantile", &statfun::norm_quantile, py::arg("u"));
    m.def("chi2_cdf", &statfun::chi2_cdf, py::arg("x"), py::arg("dof"));
    m.def("chi2_quantile", &statfun::chi2_quantile, py::arg("u"), py::arg("dof"));
}
