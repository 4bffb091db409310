#include "matchri/simulation.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "matchri/error.h"
#include "matchri/rng.h"
#include "matchri/statfun.h"

namespace matchri {

namespace {

// Stream offsets inside one replication.
constexpr std::uint64_t kSignStream = 1;
constexpr std::uint64_t kPermStream = 2;

double chi2_centered(rng::Engine& g, rng::NormalSampler& normal, int dof) {
    double s = 0.0;
    for (int i = 0; i < dof; ++i) {
        const double z = normal(g);
        s += z * z;
    }
    return (s - dof) / std::sqrt(2.0 * dof);
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

ReplicationOutcome run_replication(const DgpSpec& dgp, const McConfig& mc, std::size_t index) {
    const std::uint64_t seed = replication_seed(mc.master_seed, index);
    const Sample sample = draw_sample(dgp, seed);
    const Estimate est = estimate(sample, mc.match);

    ReplicationOutcome out;
    out.tau_hat = est.effects.tau_hat;
    out.tau_i = est.effects.tau_i;
    out.shared = est.sets.has_shared_neighbors();
    double yt = 0.0;
    double yc = 0.0;
    for (std::size_t t : sample.treated) yt += sample.y[static_cast<Eigen::Index>(t)];
    for (std::size_t c : sample.controls) yc += sample.y[static_cast<Eigen::Index>(c)];
    out.naive_diff = yt / static_cast<double>(sample.n_treated()) - yc / static_cast<double>(sample.n_controls());

    if (mc.tests.ai) {
        const AiVariance var = ai_variance(sample, est.sets, est.effects, mc.match, mc.j_var, mc.ai_form);
        const AsymptoticResult r = ai_test(est.effects, var, mc.test.alpha);
        out.ai_z = r.z;
        out.ai_reject = r.reject;
    }
    if (mc.tests.sign) {
        TestConfig cfg = mc.test;
        cfg.seed = rng::stream_seed(seed, kSignStream);
        out.sign_reject = sign_changes_test(est.effects, est.sets.components, cfg).reject;
    }
    if (mc.tests.perm) {
        TestConfig cfg = mc.test;
        cfg.seed = rng::stream_seed(seed, kPermStream);
        const OutcomeModel* model = est.model ? &*est.model : nullptr;
        out.perm_reject = permutation_test(sample, est.sets, mc.match, cfg, model).reject;
    }
    return out;
}

}  // namespace

void validate(const DgpSpec& dgp) {
    if (dgp.n1 < 2) throw ConfigError("DGP needs n1 >= 2");
    if (dgp.n0 < 1) throw ConfigError("DGP needs n0 >= 1");
    if (dgp.k < 1) throw ConfigError("DGP needs k >= 1");
    if (dgp.mu1 == Mu1Kind::kChi2 && dgp.mu1_dof < 1) throw ConfigError("chi-squared dof must be >= 1");
    if (dgp.error == ErrorKind::kChi2 && dgp.error_dof < 1) throw ConfigError("chi-squared dof must be >= 1");
    if (!(dgp.error_scale > 0.0)) throw ConfigError("error scale must be positive");
}

DgpSpec panel(const std::string& name, std::size_t n1, std::size_t n0) {
    DgpSpec d;
    d.n1 = n1;
    d.n0 = n0;
    if (name == "A") {
        d.mu1 = Mu1Kind::kLinear;
    } else if (name == "B") {
        d.mu1 = Mu1Kind::kChi2;
        d.mu1_dof = 8;
    } else if (name == "C" || name == "D" || name == "E") {
        d.mu1 = Mu1Kind::kChi2;
        d.mu1_dof = 1;
        if (name != "C") {
            d.error = ErrorKind::kChi2;
            d.error_dof = 1;
            d.error_scale = name == "D" ? 1.0 : 2.0;
        }
    } else if (name == "ZA" || name == "ZB" || name == "ZC") {
        d.mu1 = Mu1Kind::kZero;
        if (name != "ZA") {
            d.error = ErrorKind::kChi2;
            d.error_dof = name == "ZB" ? 8 : 1;
        }
    } else if (name == "SEL") {
        d.mu1 = Mu1Kind::kZero;
        d.treated_x_shift = 1.0;
        d.mu0_slope = 1.0;
    } else {
        throw ConfigError("unknown panel '" + name + "' (expected A-E, ZA, ZB, ZC or SEL)");
    }
    return d;
}

Sample draw_sample(const DgpSpec& dgp, std::uint64_t seed) {
    validate(dgp);
    rng::Engine g(seed);
    rng::NormalSampler normal;
    const std::size_t n = dgp.n1 + dgp.n0;
    const auto k = static_cast<Eigen::Index>(dgp.k);

    Sample s;
    s.y.resize(static_cast<Eigen::Index>(n));
    s.x.resize(static_cast<Eigen::Index>(n), k);
    s.w.resize(n);
    s.row_id.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const bool treated = i < dgp.n1;
        for (Eigen::Index j = 0; j < k; ++j) s.x(r, j) = normal(g);
        if (treated) s.x(r, 0) += dgp.treated_x_shift;
        const double x1 = s.x(r, 0);
        double y = dgp.mu0_slope * x1;
        if (treated) {
            switch (dgp.mu1) {
                case Mu1Kind::kZero: y += dgp.tau; break;
                case Mu1Kind::kLinear: y += dgp.tau + x1; break;
                case Mu1Kind::kChi2: y += dgp.tau + statfun::chi2_transform(x1, dgp.mu1_dof); break;
            }
            y += dgp.error == ErrorKind::kNormal ? normal(g)
                                                 : dgp.error_scale * chi2_centered(g, normal, dgp.error_dof);
        } else {
            y += normal(g);
        }
        s.y[r] = y;
        s.w[i] = treated ? 1 : 0;
        s.row_id[i] = static_cast<std::int64_t>(i);
        (treated ? s.treated : s.controls).push_back(i);
    }
    return s;
}

std::uint64_t replication_seed(std::uint64_t master, std::size_t index) { return rng::stream_seed(master, index); }

std::vector<ReplicationOutcome> simulate(const DgpSpec& dgp, const McConfig& mc) {
    validate(dgp);
    validate(mc.test);
    if (mc.reps < 1) throw ConfigError("reps must be at least 1");

    std::vector<ReplicationOutcome> results(mc.reps);
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::size_t failed_index = mc.reps;
    std::exception_ptr failure;

    auto worker = [&]() {
        for (std::size_t i = next++; i < mc.reps; i = next++) {
            try {
                results[i] = run_replication(dgp, mc, i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    unsigned n_threads = mc.threads ? mc.threads : std::max(1U, std::thread::hardware_concurrency());
    n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, mc.reps));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    if (failure) {
        try {
            std::rethrow_exception(failure);
        } catch (const NumericError& e) {
            throw NumericError("replication " + std::to_string(failed_index) + ": " + e.what());
        } catch (const ConfigError& e) {
            throw ConfigError("replication " + std::to_string(failed_index) + ": " + e.what());
        } catch (const std::exception& e) {
            throw DataError("replication " + std::to_string(failed_index) + ": " + e.what());
        }
    }
    return results;
}

RateSummary rate_summary(std::size_t rejections, std::size_t reps) {
    RateSummary r;
    r.rejections = rejections;
    r.rate = static_cast<double>(rejections) / static_cast<double>(reps);
    r.se = std::sqrt(r.rate * (1.0 - r.rate) / static_cast<double>(reps));
    return r;
}

McResult summarize(const std::vector<ReplicationOutcome>& outcomes, const McTests& tests) {
    McResult res;
    res.reps = outcomes.size();
    std::size_t ai = 0, sign = 0, perm = 0, shared = 0;
    std::vector<double> taus;
    taus.reserve(outcomes.size());
    for (const auto& o : outcomes) {
        ai += o.ai_reject;
        sign += o.sign_reject;
        perm += o.perm_reject;
        shared += o.shared;
        taus.push_back(o.tau_hat);
    }
    if (tests.ai) res.ai = rate_summary(ai, res.reps);
    if (tests.sign) res.sign = rate_summary(sign, res.reps);
    if (tests.perm) res.perm = rate_summary(perm, res.reps);
    res.mean_tau_hat = mean_of(taus);
    res.sd_tau_hat = sd_of(taus, res.mean_tau_hat);
    res.shared_share = static_cast<double>(shared) / static_cast<double>(res.reps);
    return res;
}

McResult run_mc_size(const DgpSpec& dgp, const McConfig& mc) { return summarize(simulate(dgp, mc), mc.tests); }

double empirical_critical_value(std::vector<double> abs_z, double alpha) {
    if (abs_z.empty()) throw ConfigError("empirical critical value needs at least one replication");
    std::sort(abs_z.begin(), abs_z.end());
    const double kd = static_cast<double>(abs_z.size());
    auto k = static_cast<std::size_t>(std::ceil(kd * (1.0 - alpha) - 1e-9));
    k = std::clamp<std::size_t>(k, 1, abs_z.size());
    return abs_z[k - 1];
}

PowerCurve run_mc_power(const DgpSpec& dgp, std::span<const double> taus, const McConfig& mc, bool size_adjust) {
    PowerCurve curve;
    if (size_adjust) {
        if (!mc.tests.ai) throw ConfigError("size adjustment needs the AI test");
        DgpSpec null_dgp = dgp;
        null_dgp.tau = 0.0;
        McConfig null_mc = mc;
        null_mc.tests = McTests{true, false, false};
        const auto null_run = simulate(null_dgp, null_mc);
        std::vector<double> abs_z;
        abs_z.reserve(null_run.size());
        for (const auto& o : null_run) abs_z.push_back(std::fabs(o.ai_z));
        curve.ai_critical_value = empirical_critical_value(std::move(abs_z), mc.test.alpha);
    }
    for (double tau : taus) {
        DgpSpec at = dgp;
        at.tau = tau;
        const auto outcomes = simulate(at, mc);
        PowerPoint pt;
        pt.tau = tau;
        pt.result = summarize(outcomes, mc.tests);
        if (curve.ai_critical_value) {
            std::size_t rej = 0;
            for (const auto& o : outcomes) rej += std::fabs(o.ai_z) > *curve.ai_critical_value;
            pt.ai_size_adjusted = rate_summary(rej, outcomes.size());
        }
        curve.points.push_back(std::move(pt));
    }
    return curve;
}

BiasSummary mc_bias(const DgpSpec& dgp, const McConfig& mc) {
    McConfig est_only = mc;
    est_only.tests = McTests{false, false, false};
    const auto outcomes = simulate(dgp, est_only);
    std::vector<double> tau, naive;
    for (const auto& o : outcomes) {
        tau.push_back(o.tau_hat);
        naive.push_back(o.naive_diff);
    }
    BiasSummary b;
    b.reps = outcomes.size();
    const double rt = std::sqrt(static_cast<double>(b.reps));
    const double mt = mean_of(tau);
    const double mn = mean_of(naive);
    b.bias = mt - dgp.tau;
    b.se = sd_of(tau, mt) / rt;
    b.naive_bias = mn - dgp.tau;
    b.naive_se = sd_of(naive, mn) / rt;
    return b;
}

double shared_nn_rate(const DgpSpec& dgp, const McConfig& mc) {
    McConfig est_only = mc;
    est_only.tests = McTests{false, false, false};
    return summarize(simulate(dgp, est_only), est_only.tests).shared_share;
}

}  // namespace matchri
