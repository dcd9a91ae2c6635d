#include "gnstk/dataset.hpp"

#include <cmath>
#include <stdexcept>

namespace gnstk {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::invalid_argument("dataset: " + msg);
}

constexpr std::uint64_t kTransitionTag = 0x7472616e73ull;  // stream for matrix
constexpr std::uint64_t kSequenceTag = 0x73657175ull;      // stream for tokens

}  // namespace

MarkovDataset::MarkovDataset(Index vocab, std::uint64_t seed) : vocab_(vocab), stream_(mix_seed(seed, kSequenceTag)) {
    if (vocab < 2) fail("vocab must be >= 2");
    transition_ = Tensor({vocab, vocab});
    GaussianStream gen(mix_seed(seed, kTransitionTag));
    for (Index r = 0; r < vocab; ++r) {
        double total = 0.0;
        for (Index c = 0; c < vocab; ++c) {
            const double z = gen.next();
            const double w = z * z;
            transition_[r * vocab + c] = w;
            total += w;
        }
        if (total <= 0.0) total = 1.0;
        for (Index c = 0; c < vocab; ++c) transition_[r * vocab + c] /= total;
    }
    build_cdf();
}

MarkovDataset::MarkovDataset(Tensor transition, std::uint64_t seed)
    : transition_(std::move(transition)), stream_(mix_seed(seed, kSequenceTag)) {
    if (transition_.rank() != 2 || transition_.shape()[0] != transition_.shape()[1])
        fail("transition matrix must be square");
    vocab_ = transition_.shape()[0];
    if (vocab_ < 2) fail("vocab must be >= 2");
    for (Index r = 0; r < vocab_; ++r) {
        double total = 0.0;
        for (Index c = 0; c < vocab_; ++c) {
            const double p = transition_[r * vocab_ + c];
            if (p < 0.0) fail("transition probabilities must be non-negative");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-9) fail("transition rows must sum to 1");
    }
    build_cdf();
}

void MarkovDataset::build_cdf() {
    row_cdf_.assign(static_cast<std::size_t>(vocab_ * vocab_), 0.0);
    for (Index r = 0; r < vocab_; ++r) {
        double acc = 0.0;
        for (Index c = 0; c < vocab_; ++c) {
            acc += transition_[r * vocab_ + c];
            row_cdf_[static_cast<std::size_t>(r * vocab_ + c)] = acc;
        }
        row_cdf_[static_cast<std::size_t>(r * vocab_ + vocab_ - 1)] = 1.0;
    }
}

void MarkovDataset::fill_sequence(std::span<std::int32_t> out) {
    if (out.empty()) return;
    auto state = static_cast<Index>(stream_.next_below(static_cast<std::uint64_t>(vocab_)));
    out[0] = static_cast<std::int32_t>(state);
    for (std::size_t i = 1; i < out.size(); ++i) {
        const double u = stream_.next_unit();
        const double* cdf = row_cdf_.data() + state * vocab_;
        Index next = vocab_ - 1;
        for (Index c = 0; c < vocab_; ++c) {
            if (u < cdf[c]) {
                next = c;
                break;
            }
        }
        state = next;
        out[i] = static_cast<std::int32_t>(state);
    }
}

double MarkovDataset::entropy_rate() const {
    // stationary distribution by power iteration
    std::vector<double> pi(static_cast<std::size_t>(vocab_), 1.0 / static_cast<double>(vocab_));
    std::vector<double> next(static_cast<std::size_t>(vocab_));
    for (int iter = 0; iter < 500; ++iter) {
        std::fill(next.begin(), next.end(), 0.0);
        for (Index r = 0; r < vocab_; ++r)
            for (Index c = 0; c < vocab_; ++c)
                next[static_cast<std::size_t>(c)] += pi[static_cast<std::size_t>(r)] * transition_[r * vocab_ + c];
        double delta = 0.0;
        for (Index c = 0; c < vocab_; ++c) {
            delta += std::abs(next[static_cast<std::size_t>(c)] - pi[static_cast<std::size_t>(c)]);
            pi[static_cast<std::size_t>(c)] = next[static_cast<std::size_t>(c)];
        }
        if (delta < 1e-14) break;
    }
    double h = 0.0;
    for (Index r = 0; r < vocab_; ++r) {
        double row_h = 0.0;
        for (Index c = 0; c < vocab_; ++c) {
            const double p = transition_[r * vocab_ + c];
            if (p > 0.0) row_h -= p * std::log(p);
        }
        h += pi[static_cast<std::size_t>(r)] * row_h;
    }
    return h;
}

}  // namespace gnstk
