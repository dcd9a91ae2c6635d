#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gnstk/simulator.hpp"

using namespace gnstk;

namespace {

struct MeanStderr {
    double mean = 0.0;
    double std_error = 0.0;
};

MeanStderr mean_stderr(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= (n - 1.0);
    return {mean, std::sqrt(var / n)};
}

}  // namespace

TEST_SUITE("simulator") {
    TEST_CASE("config validation") {
        CHECK_THROWS_AS(make_sim_config(0, 1.0, 4, 1, 10, 1), std::invalid_argument);
        CHECK_THROWS_AS(make_sim_config(4, 1.0, 4, 4, 10, 1), std::invalid_argument);   // b_big == b_small
        CHECK_THROWS_AS(make_sim_config(4, 1.0, 6, 4, 10, 1), std::invalid_argument);   // not divisible
        CHECK_THROWS_AS(make_sim_config(4, -1.0, 4, 1, 10, 1), std::invalid_argument);  // negative target
        const SimConfig cfg = make_sim_config(16, 2.5, 8, 2, 10, 1);
        CHECK(target_gns(cfg) == doctest::Approx(2.5).epsilon(1e-12));
    }

    TEST_CASE("zero noise gives exactly zero S every step") {
        const SimConfig cfg = make_sim_config(8, 0.0, 8, 2, 0, 3);
        GaussianStream rng(cfg.seed);
        for (int i = 0; i < 50; ++i) {
            const GradStats stats = simulate_step(cfg, rng);
            CHECK(estimate_s(stats) == 0.0);
            CHECK(estimate_g2(stats) == doctest::Approx(1.0).epsilon(1e-12));
        }
    }

    TEST_CASE("estimators are unbiased in the Gaussian model") {
        // dim=1, G=1, Sigma=1, B_big=2, B_small=1
        SimConfig cfg;
        cfg.dim = 1;
        cfg.g_true = Tensor({1}, {1.0});
        cfg.sigma_diag = Tensor({1}, {1.0});
        cfg.b_big = 2;
        cfg.b_small = 1;
        cfg.seed = 5;
        GaussianStream rng(cfg.seed);
        const int n = 100000;
        std::vector<double> g2s, ss;
        g2s.reserve(n);
        ss.reserve(n);
        for (int i = 0; i < n; ++i) {
            const GradStats stats = simulate_step(cfg, rng);
            g2s.push_back(estimate_g2(stats));
            ss.push_back(estimate_s(stats));
        }
        const MeanStderr g2 = mean_stderr(g2s);
        const MeanStderr s = mean_stderr(ss);
        CHECK(std::abs(g2.mean - 1.0) < 4.0 * g2.std_error);
        CHECK(std::abs(s.mean - 1.0) < 4.0 * s.std_error);
    }

    TEST_CASE("long-run smoothed GNS lands on the configured target of 1") {
        const SimConfig cfg = make_sim_config(100, 1.0, 16, 1, 0, 21);
        GaussianStream rng(cfg.seed);
        double sum_s = 0.0, sum_g2 = 0.0;
        EmaState g2_ema{0.005}, s_ema{0.005};
        for (int i = 0; i < 20000; ++i) {
            const GradStats stats = simulate_step(cfg, rng);
            sum_s += estimate_s(stats);
            sum_g2 += estimate_g2(stats);
            g2_ema = ema_update(g2_ema, estimate_g2(stats));
            s_ema = ema_update(s_ema, estimate_s(stats));
        }
        // offline aggregation (ratio of means) and the EMA-smoothed ratio
        CHECK(sum_s / sum_g2 == doctest::Approx(1.0).epsilon(0.05));
        const GnsEstimate smoothed = smoothed_gns(g2_ema, s_ema);
        CHECK(smoothed.b_simple_defined);
        CHECK(smoothed.b_simple == doctest::Approx(1.0).epsilon(0.05));
    }

    TEST_CASE("variance study is deterministic") {
        std::vector<SimConfig> cfgs = {make_sim_config(8, 1.0, 8, 1, 0, 9), make_sim_config(8, 1.0, 8, 2, 0, 9)};
        const auto a = variance_study(cfgs, 4096);
        const auto b = variance_study(cfgs, 4096);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].gns_hat == b[i].gns_hat);
            CHECK(a[i].std_error == b[i].std_error);
            CHECK(a[i].trials == b[i].trials);
        }
        CHECK(a[0].trials == 512);
    }

    TEST_CASE("budget must cover at least one step") {
        std::vector<SimConfig> cfgs = {make_sim_config(8, 1.0, 64, 1, 0, 9)};
        CHECK_THROWS_AS(variance_study(cfgs, 32), std::invalid_argument);
    }

    TEST_CASE("zero-noise study has zero stderr") {
        std::vector<SimConfig> cfgs = {make_sim_config(8, 0.0, 8, 1, 0, 9)};
        const auto rows = variance_study(cfgs, 4096);
        CHECK(rows[0].std_error == 0.0);
        CHECK(rows[0].gns_hat == 0.0);
    }

    TEST_CASE("mean stderr is non-increasing as b_small shrinks") {
        // equal budget per config, averaged over 20 seeds
        const Index b_big = 64;
        const Index budget = 16384;
        const std::vector<Index> smalls = {16, 8, 4, 2, 1};
        std::vector<double> mean_se(smalls.size(), 0.0);
        const int n_seeds = 20;
        for (int seed = 1; seed <= n_seeds; ++seed) {
            std::vector<SimConfig> cfgs;
            for (Index bs : smalls)
                cfgs.push_back(make_sim_config(16, 1.0, b_big, bs, 0, static_cast<std::uint64_t>(seed)));
            const auto rows = variance_study(cfgs, budget);
            for (std::size_t i = 0; i < rows.size(); ++i) mean_se[i] += rows[i].std_error;
        }
        for (double& se : mean_se) se /= n_seeds;
        for (std::size_t i = 0; i + 1 < mean_se.size(); ++i) CHECK(mean_se[i] >= mean_se[i + 1]);
    }

    TEST_CASE("b_big hardly moves the stderr at fixed budget") {
        const std::vector<Index> bigs = {16, 64, 256};
        std::vector<double> mean_se(bigs.size(), 0.0);
        const int n_seeds = 20;
        for (int seed = 1; seed <= n_seeds; ++seed) {
            std::vector<SimConfig> cfgs;
            for (Index bb : bigs) cfgs.push_back(make_sim_config(16, 1.0, bb, 1, 0, static_cast<std::uint64_t>(seed)));
            const auto rows = variance_study(cfgs, 16384);
            for (std::size_t i = 0; i < rows.size(); ++i) mean_se[i] += rows[i].std_error;
        }
        for (double& se : mean_se) se /= n_seeds;
        const double lo = *std::min_element(mean_se.begin(), mean_se.end());
        const double hi = *std::max_element(mean_se.begin(), mean_se.end());
        CHECK(hi / lo < 1.25);
    }
}
