#pragma once

#include <cmath>
#include <cstdint>

namespace gnstk {

/// splitmix64: a 64-bit counter stream (Weyl increment) pushed through an
/// avalanche finalizer. Fully specified here so that runs are portable across
/// platforms, unlike std::normal_distribution.
struct SplitMix64 {
    std::uint64_t state = 0;

    SplitMix64() = default;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1), 53 random bits.
    double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1]; safe as a log argument.
    double next_unit_open() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        // 53-bit uniform scaled; bias is negligible for the small n used here
        // and the result is platform-stable, which is what we care about.
        auto v = static_cast<std::uint64_t>(next_unit() * static_cast<double>(n));
        return v >= n ? n - 1 : v;
    }
};

/// Derive an independent stream seed from a base seed and a tag/index.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    SplitMix64 s(seed ^ (0x9e3779b97f4a7c15ull * (tag + 1)));
    return s.next();
}

/// Standard normal draws via Box-Muller on top of SplitMix64.
struct GaussianStream {
    SplitMix64 rng;
    bool has_spare = false;
    double spare = 0.0;

    GaussianStream() = default;
    explicit GaussianStream(std::uint64_t seed) : rng(seed) {}

    double next() {
        if (has_spare) {
            has_spare = false;
            return spare;
        }
        const double u1 = rng.next_unit_open();
        const double u2 = rng.next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare = r * std::sin(a);
        has_spare = true;
        return r * std::cos(a);
    }
};

}  // namespace gnstk
