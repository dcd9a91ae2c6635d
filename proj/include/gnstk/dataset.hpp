#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gnstk/rng.hpp"
#include "gnstk/tensor.hpp"

namespace gnstk {

/// First-order Markov token stream over a row-stochastic V x V transition
/// matrix. Sequences start from a uniform i.i.d. token and follow the chain;
/// the same seed reproduces the same stream. Stands in for a text corpus at
/// desk scale.
class MarkovDataset {
public:
    /// Random transitions: rows are Dirichlet(1/2) draws (normalized squared
    /// gaussians), which gives rows peaked enough to leave a learnable gap
    /// below the uniform-prediction loss ln V.
    MarkovDataset(Index vocab, std::uint64_t seed);

    /// Explicit transition matrix (rows must be non-negative and sum to ~1).
    MarkovDataset(Tensor transition, std::uint64_t seed);

    Index vocab() const { return vocab_; }
    const Tensor& transition() const { return transition_; }

    /// Fills out with one sequence, advancing the stream.
    void fill_sequence(std::span<std::int32_t> out);

    /// Entropy rate sum_v pi_v H(row_v) with pi the stationary distribution;
    /// the best achievable next-token cross-entropy once the chain has mixed.
    double entropy_rate() const;

private:
    Index vocab_ = 0;
    Tensor transition_;            // V x V
    std::vector<double> row_cdf_;  // V x V cumulative rows
    SplitMix64 stream_;

    void build_cdf();
};

}  // namespace gnstk
