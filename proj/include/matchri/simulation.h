#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "matchri/inference.h"
#include "matchri/matching.h"
#include "matchri/sample.h"

namespace matchri {

enum class Mu1Kind {
    kZero,    // mu1(x) = tau
    kLinear,  // mu1(x) = tau + x
    kChi2,    // mu1(x) = tau + (Q^{-1}(Phi(x); p) - p) / sqrt(2p)
};

enum class ErrorKind {
    kNormal,  // N(0, 1)
    kChi2,    // scale * (chi2_p - p) / sqrt(2p)
};

// Synthetic design: X | W ~ N(shift * W, I_k), Y(0) = mu0_slope * x1 + N(0, 1),
// Y(1) = mu0_slope * x1 + mu1(x1) + error. Columns 2..k are pure noise.
struct DgpSpec {
    std::size_t n1 = 5;
    std::size_t n0 = 1000;
    Mu1Kind mu1 = Mu1Kind::kLinear;
    int mu1_dof = 8;
    ErrorKind error = ErrorKind::kNormal;
    int error_dof = 1;
    double error_scale = 1.0;
    double tau = 0.0;
    std::size_t k = 1;
    double treated_x_shift = 0.0;
    double mu0_slope = 0.0;
};

void validate(const DgpSpec& dgp);

/// Named designs: "A".."E" (symmetry-relaxation panels), "ZA", "ZB", "ZC"
/// (mu1 = 0 with normal, (chi2_8 - 8)/4 and (chi2_1 - 1)/sqrt(2) errors) and
/// "SEL" (treated covariate shifted by +1, mu0(x) = x, mu1 = 0).
DgpSpec panel(const std::string& name, std::size_t n1, std::size_t n0);

Sample draw_sample(const DgpSpec& dgp, std::uint64_t seed);

struct McTests {
    bool ai = true;
    bool sign = true;
    bool perm = false;
};

struct McConfig {
    std::size_t reps = 2000;
    std::uint64_t master_seed = 0;
    McTests tests;
    MatchSpec match;
    TestConfig test;
    int j_var = 1;
    AiVarianceForm ai_form = AiVarianceForm::kCombined;
    unsigned threads = 0;  // 0: hardware concurrency. Never affects results.
};

/// Seed of replication `index` under `master`.
std::uint64_t replication_seed(std::uint64_t master, std::size_t index);

struct ReplicationOutcome {
    double tau_hat = 0.0;
    double naive_diff = 0.0;  // mean treated outcome - mean control outcome
    double ai_z = 0.0;
    bool ai_reject = false;
    bool sign_reject = false;
    bool perm_reject = false;
    bool shared = false;  // some treated units share a matched control
    std::vector<double> tau_i;
};

/// Runs every replication; results are indexed by replication and do not
/// depend on the thread count. A failing replication aborts the study with
/// its index in the message.
std::vector<ReplicationOutcome> simulate(const DgpSpec& dgp, const McConfig& mc);

struct RateSummary {
    double rate = 0.0;
    double se = 0.0;  // sqrt(rate (1 - rate) / reps)
    std::size_t rejections = 0;
};

RateSummary rate_summary(std::size_t rejections, std::size_t reps);

struct McResult {
    std::size_t reps = 0;
    std::optional<RateSummary> ai;
    std::optional<RateSummary> sign;
    std::optional<RateSummary> perm;
    double mean_tau_hat = 0.0;
    double sd_tau_hat = 0.0;
    double shared_share = 0.0;
};

McResult summarize(const std::vector<ReplicationOutcome>& outcomes, const McTests& tests);

McResult run_mc_size(const DgpSpec& dgp, const McConfig& mc);

struct PowerPoint {
    double tau = 0.0;
    McResult result;
    std::optional<RateSummary> ai_size_adjusted;
};

struct PowerCurve {
    std::vector<PowerPoint> points;
    std::optional<double> ai_critical_value;  // empirical null quantile of |z|
};

/// Empirical (1 - alpha) quantile of |z|: the order statistic at
/// ceil(R (1 - alpha)), so that |z| > value rejects at most alpha R times.
double empirical_critical_value(std::vector<double> abs_z, double alpha);

/// Power at each tau in `taus` (dgp.tau is ignored). With size_adjust, a
/// tau = 0 companion run on the same seeds fixes the AI critical value.
PowerCurve run_mc_power(const DgpSpec& dgp, std::span<const double> taus, const McConfig& mc, bool size_adjust);

struct BiasSummary {
    std::size_t reps = 0;
    double bias = 0.0;  // mean(tau_hat) - tau
    double se = 0.0;
    double naive_bias = 0.0;
    double naive_se = 0.0;
};

BiasSummary mc_bias(const DgpSpec& dgp, const McConfig& mc);

/// Share of replications with at least one non-singleton shared-neighbor component.
double shared_nn_rate(const DgpSpec& dgp, const McConfig& mc);

}  // namespace matchri
