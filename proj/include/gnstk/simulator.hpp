#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gnstk/gns.hpp"
#include "gnstk/rng.hpp"
#include "gnstk/tensor.hpp"

namespace gnstk {

/// Gaussian gradient model: per-example gradients are G + eps with
/// eps ~ N(0, diag(sigma_diag)). b_small must divide b_big; small-batch norms
/// come from disjoint consecutive blocks so every draw is used exactly once.
struct SimConfig {
    Index dim = 0;
    Tensor g_true;      // dim
    Tensor sigma_diag;  // dim, elementwise >= 0
    Index b_big = 0;
    Index b_small = 0;
    Index n_steps = 0;
    std::uint64_t seed = 0;
};

/// Config with ||G||^2 = 1 spread evenly over dim and tr(Sigma) = gns_target.
SimConfig make_sim_config(Index dim, double gns_target, Index b_big, Index b_small, Index n_steps,
                          std::uint64_t seed);

void validate(const SimConfig& cfg);

double target_gns(const SimConfig& cfg);

/// Draws b_big per-example gradients and reduces them into one GradStats.
GradStats simulate_step(const SimConfig& cfg, GaussianStream& rng);

struct VarianceRow {
    Index b_big = 0;
    Index b_small = 0;
    Index trials = 0;  // GradStats samples taken
    double gns_hat = 0.0;
    double std_error = 0.0;
    std::uint64_t seed = 0;
};

/// Equal-cost comparison: every config consumes samples_budget per-example
/// draws (so trials = samples_budget / b_big steps). Each config gets a
/// private stream derived from (cfg.seed, index). Reports the ratio-of-means
/// GNS estimate and its jackknife standard error per config.
std::vector<VarianceRow> variance_study(std::span<const SimConfig> cfgs, Index samples_budget);

}  // namespace gnstk
