#include "gnstk/simulator.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace gnstk {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::invalid_argument("simulator: " + msg);
}

}  // namespace

SimConfig make_sim_config(Index dim, double gns_target, Index b_big, Index b_small, Index n_steps,
                          std::uint64_t seed) {
    if (dim < 1) fail("dim must be positive");
    if (gns_target < 0.0) fail("gns target must be non-negative");
    SimConfig cfg;
    cfg.dim = dim;
    const double d = static_cast<double>(dim);
    cfg.g_true = Tensor::full({dim}, 1.0 / std::sqrt(d));
    cfg.sigma_diag = Tensor::full({dim}, gns_target / d);
    cfg.b_big = b_big;
    cfg.b_small = b_small;
    cfg.n_steps = n_steps;
    cfg.seed = seed;
    validate(cfg);
    return cfg;
}

void validate(const SimConfig& cfg) {
    if (cfg.dim < 1) fail("dim must be positive");
    if (cfg.g_true.shape() != Shape{cfg.dim}) fail("g_true extent does not match dim");
    if (cfg.sigma_diag.shape() != Shape{cfg.dim}) fail("sigma_diag extent does not match dim");
    for (Index i = 0; i < cfg.dim; ++i)
        if (cfg.sigma_diag[i] < 0.0) fail("sigma_diag must be elementwise non-negative");
    if (cfg.b_small < 1) fail("b_small must be >= 1");
    if (cfg.b_big <= cfg.b_small) fail("b_big must exceed b_small");
    if (cfg.b_big % cfg.b_small != 0) fail("b_small must divide b_big");
}

double target_gns(const SimConfig& cfg) {
    double tr = 0.0, g2 = 0.0;
    for (Index i = 0; i < cfg.dim; ++i) {
        tr += cfg.sigma_diag[i];
        g2 += cfg.g_true[i] * cfg.g_true[i];
    }
    if (g2 == 0.0) fail("target GNS undefined for zero g_true");
    return tr / g2;
}

GradStats simulate_step(const SimConfig& cfg, GaussianStream& rng) {
    validate(cfg);
    const Index dim = cfg.dim;
    const Index n_blocks = cfg.b_big / cfg.b_small;

    std::vector<double> noise_std(static_cast<std::size_t>(dim));
    for (Index i = 0; i < dim; ++i) noise_std[static_cast<std::size_t>(i)] = std::sqrt(cfg.sigma_diag[i]);

    std::vector<double> total_sum(static_cast<std::size_t>(dim), 0.0);
    std::vector<double> block_sum(static_cast<std::size_t>(dim));
    const double bs = static_cast<double>(cfg.b_small);
    const double bb = static_cast<double>(cfg.b_big);

    double small_acc = 0.0;
    for (Index blk = 0; blk < n_blocks; ++blk) {
        std::fill(block_sum.begin(), block_sum.end(), 0.0);
        for (Index i = 0; i < cfg.b_small; ++i)
            for (Index d = 0; d < dim; ++d)
                block_sum[static_cast<std::size_t>(d)] +=
                    cfg.g_true[d] + noise_std[static_cast<std::size_t>(d)] * rng.next();
        double block_sqnorm = 0.0;
        for (Index d = 0; d < dim; ++d) {
            const double m = block_sum[static_cast<std::size_t>(d)] / bs;
            block_sqnorm += m * m;
            total_sum[static_cast<std::size_t>(d)] += block_sum[static_cast<std::size_t>(d)];
        }
        small_acc += block_sqnorm;
    }

    GradStats stats;
    stats.b_big = cfg.b_big;
    stats.b_small = cfg.b_small;
    stats.n_small = n_blocks;
    stats.g_small_sqnorm_mean = small_acc / static_cast<double>(n_blocks);
    double big_sqnorm = 0.0;
    for (Index d = 0; d < dim; ++d) {
        const double m = total_sum[static_cast<std::size_t>(d)] / bb;
        big_sqnorm += m * m;
    }
    stats.g_big_sqnorm = big_sqnorm;
    return stats;
}

std::vector<VarianceRow> variance_study(std::span<const SimConfig> cfgs, Index samples_budget) {
    std::vector<VarianceRow> rows;
    rows.reserve(cfgs.size());
    for (std::size_t idx = 0; idx < cfgs.size(); ++idx) {
        const SimConfig& cfg = cfgs[idx];
        validate(cfg);
        const Index n_steps = samples_budget / cfg.b_big;
        if (n_steps < 1) fail("samples budget smaller than one step");

        GaussianStream rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(idx)));
        std::vector<std::pair<double, double>> pairs;
        pairs.reserve(static_cast<std::size_t>(n_steps));
        for (Index step = 0; step < n_steps; ++step) {
            GradStats stats = simulate_step(cfg, rng);
            pairs.emplace_back(estimate_s(stats), estimate_g2(stats));
        }
        JackknifeResult jk = jackknife_ratio_stderr(pairs);

        VarianceRow row;
        row.b_big = cfg.b_big;
        row.b_small = cfg.b_small;
        row.trials = n_steps;
        row.gns_hat = jk.ratio;
        row.std_error = jk.std_error;
        row.seed = cfg.seed;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace gnstk
