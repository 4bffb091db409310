#include <cmath>
#include <string>

#include "matchri/error.h"
#include "matchri/inference.h"
#include "matchri/statfun.h"

namespace matchri {

namespace {

// sigma^2(X_i, W_i) from the j closest same-group units.
double local_variance(const Sample& sample, const Eigen::MatrixXd& coords, std::size_t row, int j_var) {
    const auto nbs = nearest_in_group(sample, coords, row, j_var);
    double mean = 0.0;
    for (const Neighbor& nb : nbs) mean += sample.y[static_cast<Eigen::Index>(nb.row)];
    mean /= static_cast<double>(j_var);
    const double dev = sample.y[static_cast<Eigen::Index>(row)] - mean;
    return static_cast<double>(j_var) / (j_var + 1.0) * dev * dev;
}

}  // namespace

std::string to_string(AiVarianceForm form) { return form == AiVarianceForm::kFloored ? "floored" : "combined"; }

AiVarianceForm parse_ai_variance_form(const std::string& name) {
    if (name == "combined") return AiVarianceForm::kCombined;
    if (name == "floored") return AiVarianceForm::kFloored;
    throw ConfigError("unknown AI variance form '" + name + "' (expected combined or floored)");
}

AiVariance ai_variance(const Sample& sample, const MatchedSets& sets, const UnitEffects& effects,
                       const MatchSpec& spec, int j_var, AiVarianceForm form) {
    if (j_var < 1) {
        throw ConfigError("j_var must be at least 1");
    }
    const std::size_t n1 = sample.n_treated();
    if (n1 < static_cast<std::size_t>(j_var) + 1 || sample.n_controls() < static_cast<std::size_t>(j_var) + 1) {
        throw DataError("AI variance needs at least j_var + 1 units in each treatment group");
    }
    const Eigen::MatrixXd coords = metric_coordinates(sample, spec);
    const double m = sets.m;

    // Unmatched controls carry zero weight, so only treated units and matched
    // controls need a conditional-variance estimate.
    std::vector<double> sigma2(sample.size(), 0.0);
    double conditional = 0.0;
    for (std::size_t t : sample.treated) {
        sigma2[t] = local_variance(sample, coords, t, j_var);
        conditional += sigma2[t];
    }
    for (std::size_t c : sample.controls) {
        if (sets.k_count[c] == 0) continue;
        sigma2[c] = local_variance(sample, coords, c, j_var);
        const double wgt = sets.k_count[c] / m;
        conditional += wgt * wgt * sigma2[c];
    }

    double mean_tau = 0.0;
    for (double t : effects.tau_i) mean_tau += t;
    mean_tau /= static_cast<double>(n1);
    double heterogeneity = 0.0;
    for (std::size_t t = 0; t < n1; ++t) {
        const double dev = effects.tau_i[t] - mean_tau;
        double nb_var = 0.0;
        for (const Neighbor& nb : sets.neighbors[t]) nb_var += sigma2[nb.row];
        heterogeneity += dev * dev - (sigma2[sample.treated[t]] + nb_var / (m * m));
    }
    const double n1sq = static_cast<double>(n1) * static_cast<double>(n1);
    return AiVariance{conditional / n1sq, heterogeneity / n1sq, form};
}

AsymptoticResult ai_test(const UnitEffects& effects, const AiVariance& variance, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("alpha must lie in (0, 1)");
    }
    const double v = variance.total();
    if (!(v > 0.0)) {
        throw NumericError("AI variance estimate is zero");
    }
    AsymptoticResult r;
    r.variance = variance;
    r.estimate = effects.tau_hat;
    r.std_error = std::sqrt(v);
    double centered = 0.0;
    for (double t : effects.tau_i) centered += t;
    centered /= static_cast<double>(effects.tau_i.size());
    r.z = centered / r.std_error;
    r.p_value = 2.0 * statfun::norm_cdf(-std::fabs(r.z));
    r.reject = r.p_value <= alpha;
    return r;
}

}  // namespace matchri
