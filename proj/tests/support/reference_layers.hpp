#pragma once

// Naive reference paths used as test oracles: direct loops written
// independently of the library's layer code.

#include <cstdint>
#include <span>
#include <vector>

#include "gnstk/tensor.hpp"

namespace gnstk::testing {

// (B, M, K) extents of a rank >= 2 tensor, collapsing middle axes
struct Bmk {
    Index b = 0, m = 0, k = 0;
};

inline Bmk bmk(const Tensor& t) {
    Index m = 1;
    for (Index d = 1; d + 1 < t.rank(); ++d) m *= t.shape()[static_cast<std::size_t>(d)];
    return {t.shape().front(), m, t.shape().back()};
}

// standard (non-per-example) weight-gradient contraction: sum over batch and
// middle axes of x (x) g outer products
inline Tensor ref_linear_weight_grad(const Tensor& x, const Tensor& g) {
    const Bmk vx = bmk(x), vg = bmk(g);
    Tensor w({vx.k, vg.k});
    for (Index b = 0; b < vx.b; ++b)
        for (Index m = 0; m < vx.m; ++m)
            for (Index i = 0; i < vx.k; ++i)
                for (Index j = 0; j < vg.k; ++j)
                    w[i * vg.k + j] += x[(b * vx.m + m) * vx.k + i] * g[(b * vg.m + m) * vg.k + j];
    return w;
}

// single-example weight gradient of example b, from the same upstream g
inline Tensor ref_linear_single_example_grad(const Tensor& x, const Tensor& g, Index b) {
    const Bmk vx = bmk(x), vg = bmk(g);
    Tensor w({vx.k, vg.k});
    for (Index m = 0; m < vx.m; ++m)
        for (Index i = 0; i < vx.k; ++i)
            for (Index j = 0; j < vg.k; ++j)
                w[i * vg.k + j] += x[(b * vx.m + m) * vx.k + i] * g[(b * vg.m + m) * vg.k + j];
    return w;
}

inline Tensor ref_layernorm_single_example_gamma_grad(const Tensor& normalized, const Tensor& g, Index b) {
    const Bmk v = bmk(g);
    Tensor out({v.k});
    for (Index m = 0; m < v.m; ++m)
        for (Index i = 0; i < v.k; ++i)
            out[i] += normalized[(b * v.m + m) * v.k + i] * g[(b * v.m + m) * v.k + i];
    return out;
}

inline Tensor ref_layernorm_single_example_beta_grad(const Tensor& g, Index b) {
    const Bmk v = bmk(g);
    Tensor out({v.k});
    for (Index m = 0; m < v.m; ++m)
        for (Index i = 0; i < v.k; ++i) out[i] += g[(b * v.m + m) * v.k + i];
    return out;
}

// dense one-hot embedding gradient for example b: V x D
inline Tensor ref_embedding_single_example_grad(std::span<const std::int32_t> ids, const Tensor& g, Index vocab,
                                                Index b) {
    const Index t_len = g.shape()[1];
    const Index d = g.shape()[2];
    Tensor out({vocab, d});
    for (Index v = 0; v < vocab; ++v)
        for (Index t = 0; t < t_len; ++t) {
            const double onehot = ids[static_cast<std::size_t>(b * t_len + t)] == v ? 1.0 : 0.0;
            for (Index j = 0; j < d; ++j) out[v * d + j] += onehot * g[(b * t_len + t) * d + j];
        }
    return out;
}

inline double ref_sqnorm(const Tensor& t) {
    double acc = 0.0;
    for (Index i = 0; i < t.size(); ++i) acc += t[i] * t[i];
    return acc;
}

}  // namespace gnstk::testing
