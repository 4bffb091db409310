#include <gtest/gtest.h>

#include <cmath>

#include "matchri/error.h"
#include "matchri/rng.h"
#include "matchri/simulation.h"
#include "matchri/statfun.h"

using namespace matchri;

TEST(Rng, StreamsAndHelpers) {
    EXPECT_NE(rng::stream_seed(1, 0), rng::stream_seed(1, 1));
    EXPECT_NE(rng::stream_seed(1, 0), rng::stream_seed(2, 0));
    rng::Engine g(5);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng::uniform01(g);
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        EXPECT_LT(rng::bounded(g, 7), 7u);
    }
}

TEST(DrawSample, DeterministicLayout) {
    DgpSpec d = panel("A", 5, 40);
    d.k = 3;
    const Sample a = draw_sample(d, 9);
    const Sample b = draw_sample(d, 9);
    EXPECT_EQ(a.y, b.y);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.n_treated(), 5u);
    EXPECT_EQ(a.n_controls(), 40u);
    EXPECT_EQ(a.n_covariates(), 3u);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(a.w[i], 1);
    EXPECT_NE(draw_sample(d, 10).y, a.y);
}

TEST(DrawSample, Panels) {
    for (const char* p : {"A", "B", "C", "D", "E", "ZA", "ZB", "ZC", "SEL"}) {
        EXPECT_NO_THROW(draw_sample(panel(p, 3, 10), 1)) << p;
    }
    EXPECT_THROW(panel("Q", 3, 10), ConfigError);
    DgpSpec bad = panel("A", 1, 10);
    EXPECT_THROW(validate(bad), ConfigError);
    bad = panel("E", 5, 10);
    bad.error_scale = 0.0;
    EXPECT_THROW(validate(bad), ConfigError);
}

TEST(DrawSample, Chi2TransformMoments) {
    rng::Engine g(123);
    rng::NormalSampler z;
    const int n = 1000000;
    double s = 0.0;
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = statfun::chi2_transform(z(g), 8);
        s += v;
        ss += v * v;
    }
    const double mean = s / n;
    const double var = ss / n - mean * mean;
    EXPECT_LT(std::fabs(mean), 3.0 / std::sqrt(n));
    // kurtosis of the standardized chi2_8 is 3 + 12/8
    EXPECT_LT(std::fabs(var - 1.0), 3.0 * std::sqrt(3.5 / n));
}

TEST(Simulate, IndependentOfThreadCount) {
    const DgpSpec d = panel("C", 6, 80);
    McConfig mc;
    mc.reps = 60;
    mc.master_seed = 4;
    mc.tests.perm = true;
    mc.threads = 1;
    const auto a = simulate(d, mc);
    mc.threads = 3;
    const auto b = simulate(d, mc);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t r = 0; r < a.size(); ++r) {
        EXPECT_EQ(a[r].tau_hat, b[r].tau_hat);
        EXPECT_EQ(a[r].ai_z, b[r].ai_z);
        EXPECT_EQ(a[r].sign_reject, b[r].sign_reject);
        EXPECT_EQ(a[r].perm_reject, b[r].perm_reject);
    }
}

TEST(Simulate, FailingReplicationIsNamed) {
    DgpSpec d = panel("A", 5, 3);
    McConfig mc;
    mc.reps = 3;
    mc.match.m = 4;
    try {
        simulate(d, mc);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("replication 0"), std::string::npos) << e.what();
    }
}

TEST(RateSummary, Degenerate) {
    const RateSummary one = rate_summary(1, 1);
    EXPECT_EQ(one.rate, 1.0);
    EXPECT_EQ(one.se, 0.0);
    const RateSummary r = rate_summary(25, 100);
    EXPECT_DOUBLE_EQ(r.se, std::sqrt(0.25 * 0.75 / 100));
}

TEST(RunMcSize, SingleReplication) {
    McConfig mc;
    mc.reps = 1;
    const McResult r = run_mc_size(panel("A", 5, 50), mc);
    ASSERT_TRUE(r.ai && r.sign);
    EXPECT_TRUE(r.sign->rate == 0.0 || r.sign->rate == 1.0);
    EXPECT_EQ(r.sign->se, 0.0);
    EXPECT_FALSE(r.perm);
}

TEST(RunMcSize, SignTestSizeUnderSymmetry) {
    McConfig mc;
    mc.reps = 400;
    mc.master_seed = 8;
    mc.tests.ai = false;
    const McResult r = run_mc_size(panel("A", 10, 300), mc);
    EXPECT_LE(r.sign->rate, 0.10 + 3.0 * std::sqrt(0.09 / 400));
}

TEST(EmpiricalCriticalValue, RejectsAtMostAlphaShare) {
    std::vector<double> z;
    for (int i = 1; i <= 20; ++i) z.push_back(i * 0.1);
    const double cv = empirical_critical_value(z, 0.10);
    EXPECT_DOUBLE_EQ(cv, 1.8);
    int rejections = 0;
    for (double v : z) rejections += v > cv;
    EXPECT_EQ(rejections, 2);
}

TEST(RunMcPower, NullSizeAdjustedRateIsAlpha) {
    McConfig mc;
    mc.reps = 200;
    mc.master_seed = 3;
    const std::vector<double> taus{0.0, 1.0};
    const PowerCurve curve = run_mc_power(panel("A", 10, 100), taus, mc, true);
    ASSERT_TRUE(curve.ai_critical_value);
    ASSERT_EQ(curve.points.size(), 2u);
    EXPECT_LE(curve.points[0].ai_size_adjusted->rate, 0.10);
    EXPECT_GE(curve.points[0].ai_size_adjusted->rate, 0.09);
    EXPECT_GT(curve.points[1].result.sign->rate, curve.points[0].result.sign->rate);
}

TEST(McBias, SelectionDesign) {
    McConfig mc;
    mc.reps = 300;
    mc.master_seed = 5;
    mc.tests = {false, false, false};
    const BiasSummary b = mc_bias(panel("SEL", 25, 1000), mc);
    EXPECT_NEAR(b.naive_bias, 1.0, 4.0 * b.naive_se);
    EXPECT_LE(std::fabs(b.bias), 3.0 * b.se + 0.05);
}

TEST(McBias, SaturatedMatchingEqualsNaive) {
    McConfig mc;
    mc.reps = 20;
    mc.tests = {false, false, false};
    mc.match.m = 15;
    const auto out = simulate(panel("SEL", 4, 15), mc);
    for (const auto& o : out) EXPECT_NEAR(o.tau_hat, o.naive_diff, 1e-12);
}

TEST(SharedNnRate, Extremes) {
    McConfig mc;
    mc.reps = 50;
    mc.tests = {false, false, false};
    mc.match.m = 10;
    EXPECT_GT(shared_nn_rate(panel("A", 5, 50), mc), 0.9);
    mc.match.m = 5;
    EXPECT_EQ(shared_nn_rate(panel("A", 2, 5), mc), 1.0);
    mc.match.m = 1;
    mc.reps = 20;
    EXPECT_LT(shared_nn_rate(panel("A", 5, 100000), mc), 0.1);
}
