#include "gnstk/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gnstk {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::invalid_argument("layers: " + msg);
}

// Flattened (B, M, K) view of a B x ... x K tensor. M collapses any middle
// axes (1 when the tensor is rank 2).
struct BmkView {
    Index b, m, k;
};

BmkView bmk_view(const Tensor& t) {
    if (t.rank() < 2) fail("expected rank >= 2");
    Index m = 1;
    for (Index d = 1; d + 1 < t.rank(); ++d) m *= t.shape()[static_cast<std::size_t>(d)];
    return {t.shape().front(), m, t.shape().back()};
}

void check_same_leading(const Tensor& x, const Tensor& g) {
    if (x.rank() != g.rank()) fail("x and g rank mismatch");
    for (Index d = 0; d + 1 < x.rank(); ++d)
        if (x.shape()[static_cast<std::size_t>(d)] != g.shape()[static_cast<std::size_t>(d)])
            fail("x and g leading shape mismatch");
}

// Per-example gradients of a mean-reduced loss carry a 1/B factor; the mean
// of their squared norms is corrected by B^2: 1/B * sum_b ||theta'_b||^2 * B^2.
double corrected_mean_sqnorm(double sum_sq, Index batch) {
    const double b = static_cast<double>(batch);
    return sum_sq / b * (b * b);
}

double row_sqnorm(const double* p, Index n) {
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) acc += p[i] * p[i];
    return acc;
}

}  // namespace

Tensor linear_forward(const LinearLayer& layer, const Tensor& x) {
    const Index k = layer.weight.shape()[0];
    const Index l = layer.weight.shape()[1];
    BmkView v = bmk_view(x);
    if (v.k != k) fail("input trailing extent does not match weight rows");
    if (layer.bias && layer.bias->shape() != Shape{l}) fail("bias extent does not match weight columns");

    Shape out_shape = x.shape();
    out_shape.back() = l;
    Tensor y(out_shape);

    const double* w = layer.weight.data();
    for (Index row = 0; row < v.b * v.m; ++row) {
        const double* xr = x.data() + row * k;
        double* yr = y.data() + row * l;
        for (Index i = 0; i < k; ++i) {
            const double xv = xr[i];
            const double* wr = w + i * l;
            for (Index j = 0; j < l; ++j) yr[j] += xv * wr[j];
        }
        if (layer.bias) {
            const double* bias = layer.bias->data();
            for (Index j = 0; j < l; ++j) yr[j] += bias[j];
        }
    }
    return y;
}

LinearBackwardResult linear_backward_simultaneous(const LinearLayer& layer, const Tensor& x, const Tensor& g) {
    const Index k = layer.weight.shape()[0];
    const Index l = layer.weight.shape()[1];
    check_same_leading(x, g);
    BmkView vx = bmk_view(x);
    BmkView vg = bmk_view(g);
    if (vx.k != k) fail("input trailing extent does not match weight rows");
    if (vg.k != l) fail("gradient trailing extent does not match weight columns");
    const Index batch = vx.b;
    if (batch == 0) fail("empty batch");

    LinearBackwardResult res;
    res.grads.batch_size = batch;
    Tensor wgrad({k, l});
    Tensor w_raw({batch});
    std::vector<double> scratch(static_cast<std::size_t>(k * l));

    Tensor bgrad;
    Tensor b_raw;
    std::vector<double> bias_scratch;
    if (layer.bias) {
        bgrad = Tensor({l});
        b_raw = Tensor({batch});
        bias_scratch.assign(static_cast<std::size_t>(l), 0.0);
    }

    double w_sum = 0.0, b_sum = 0.0;
    for (Index b = 0; b < batch; ++b) {
        std::fill(scratch.begin(), scratch.end(), 0.0);
        if (layer.bias) std::fill(bias_scratch.begin(), bias_scratch.end(), 0.0);
        for (Index m = 0; m < vx.m; ++m) {
            const double* xr = x.data() + (b * vx.m + m) * k;
            const double* gr = g.data() + (b * vg.m + m) * l;
            for (Index i = 0; i < k; ++i) {
                const double xv = xr[i];
                double* srow = scratch.data() + i * l;
                for (Index j = 0; j < l; ++j) srow[j] += xv * gr[j];
            }
            if (layer.bias)
                for (Index j = 0; j < l; ++j) bias_scratch[static_cast<std::size_t>(j)] += gr[j];
        }
        const double sb = row_sqnorm(scratch.data(), k * l);
        w_raw[b] = sb;
        w_sum += sb;
        for (Index i = 0; i < k * l; ++i) wgrad[i] += scratch[static_cast<std::size_t>(i)];
        if (layer.bias) {
            const double bb = row_sqnorm(bias_scratch.data(), l);
            b_raw[b] = bb;
            b_sum += bb;
            for (Index j = 0; j < l; ++j) bgrad[j] += bias_scratch[static_cast<std::size_t>(j)];
        }
    }

    res.grads.weight_grads["weight"] = std::move(wgrad);
    res.grads.per_example_sqnorms["weight"] = corrected_mean_sqnorm(w_sum, batch);
    res.grads.per_example_sqnorms_raw["weight"] = std::move(w_raw);
    if (layer.bias) {
        res.grads.weight_grads["bias"] = std::move(bgrad);
        res.grads.per_example_sqnorms["bias"] = corrected_mean_sqnorm(b_sum, batch);
        res.grads.per_example_sqnorms_raw["bias"] = std::move(b_raw);
    }

    // dL/dx = g . w^T
    Tensor xgrad(x.shape());
    const double* w = layer.weight.data();
    for (Index row = 0; row < vx.b * vx.m; ++row) {
        const double* gr = g.data() + row * l;
        double* xr = xgrad.data() + row * k;
        for (Index i = 0; i < k; ++i) {
            const double* wr = w + i * l;
            double acc = 0.0;
            for (Index j = 0; j < l; ++j) acc += gr[j] * wr[j];
            xr[i] = acc;
        }
    }
    res.input_grad = std::move(xgrad);
    return res;
}

Tensor linear_perexample_sqnorm_frobenius(const Tensor& x, const Tensor& g) {
    if (x.rank() != 3 || g.rank() != 3) fail("frobenius path expects strictly 3-axis inputs");
    if (x.shape()[0] != g.shape()[0] || x.shape()[1] != g.shape()[1]) fail("x and g leading shape mismatch");
    const Index batch = x.shape()[0];
    const Index t_len = x.shape()[1];
    const Index k = x.shape()[2];
    const Index l = g.shape()[2];

    Tensor out({batch});
    std::vector<double> xx(static_cast<std::size_t>(t_len * t_len));
    std::vector<double> gg(static_cast<std::size_t>(t_len * t_len));
    for (Index b = 0; b < batch; ++b) {
        const double* xb = x.data() + b * t_len * k;
        const double* gb = g.data() + b * t_len * l;
        for (Index t = 0; t < t_len; ++t)
            for (Index u = 0; u < t_len; ++u) {
                double accx = 0.0;
                for (Index i = 0; i < k; ++i) accx += xb[t * k + i] * xb[u * k + i];
                xx[static_cast<std::size_t>(t * t_len + u)] = accx;
                double accg = 0.0;
                for (Index j = 0; j < l; ++j) accg += gb[t * l + j] * gb[u * l + j];
                gg[static_cast<std::size_t>(t * t_len + u)] = accg;
            }
        double acc = 0.0;
        for (Index i = 0; i < t_len * t_len; ++i) acc += xx[static_cast<std::size_t>(i)] * gg[static_cast<std::size_t>(i)];
        out[b] = acc;
    }
    return out;
}

LayerNormForwardResult layernorm_forward(const LayerNormLayer& layer, const Tensor& x) {
    const Index k = layer.gamma.shape()[0];
    if (layer.beta.shape() != Shape{k}) fail("gamma/beta extent mismatch");
    if (layer.epsilon <= 0.0) fail("epsilon must be positive");
    if (x.rank() < 1 || x.shape().back() != k) fail("input trailing extent does not match gamma");
    if (k < 2) fail("layernorm needs trailing extent >= 2");

    Index rows = 1;
    for (Index d = 0; d + 1 < x.rank(); ++d) rows *= x.shape()[static_cast<std::size_t>(d)];

    LayerNormForwardResult res;
    res.output = Tensor(x.shape());
    res.cache.normalized = Tensor(x.shape());
    Shape row_shape(x.shape().begin(), x.shape().end() - 1);
    res.cache.inv_std = Tensor(row_shape);

    const double* gamma = layer.gamma.data();
    const double* beta = layer.beta.data();
    const double kd = static_cast<double>(k);
    for (Index r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * k;
        double mean = 0.0;
        for (Index i = 0; i < k; ++i) mean += xr[i];
        mean /= kd;
        double var = 0.0;
        for (Index i = 0; i < k; ++i) {
            const double d = xr[i] - mean;
            var += d * d;
        }
        var /= kd;
        const double inv = 1.0 / std::sqrt(var + layer.epsilon);
        res.cache.inv_std[r] = inv;
        double* nr = res.cache.normalized.data() + r * k;
        double* yr = res.output.data() + r * k;
        for (Index i = 0; i < k; ++i) {
            nr[i] = (xr[i] - mean) * inv;
            yr[i] = gamma[i] * nr[i] + beta[i];
        }
    }
    return res;
}

LayerNormBackwardResult layernorm_backward_simultaneous(const LayerNormLayer& layer, const LayerNormCache& cache,
                                                        const Tensor& g) {
    const Index k = layer.gamma.shape()[0];
    if (!cache.normalized.same_shape(g)) fail("cache/gradient shape mismatch");
    if (g.rank() < 2) fail("backward expects a leading batch axis");
    BmkView v = bmk_view(g);
    if (v.k != k) fail("gradient trailing extent does not match gamma");
    const Index batch = v.b;
    if (batch == 0) fail("empty batch");

    LayerNormBackwardResult res;
    res.grads.batch_size = batch;
    Tensor ggrad({k}), bgrad({k});
    Tensor g_raw({batch}), b_raw({batch});
    std::vector<double> grow(static_cast<std::size_t>(k)), brow(static_cast<std::size_t>(k));

    double g_sum = 0.0, b_sum = 0.0;
    for (Index b = 0; b < batch; ++b) {
        std::fill(grow.begin(), grow.end(), 0.0);
        std::fill(brow.begin(), brow.end(), 0.0);
        for (Index m = 0; m < v.m; ++m) {
            const double* nr = cache.normalized.data() + (b * v.m + m) * k;
            const double* gr = g.data() + (b * v.m + m) * k;
            for (Index i = 0; i < k; ++i) {
                grow[static_cast<std::size_t>(i)] += nr[i] * gr[i];
                brow[static_cast<std::size_t>(i)] += gr[i];
            }
        }
        const double sg = row_sqnorm(grow.data(), k);
        const double sb = row_sqnorm(brow.data(), k);
        g_raw[b] = sg;
        b_raw[b] = sb;
        g_sum += sg;
        b_sum += sb;
        for (Index i = 0; i < k; ++i) {
            ggrad[i] += grow[static_cast<std::size_t>(i)];
            bgrad[i] += brow[static_cast<std::size_t>(i)];
        }
    }
    res.grads.weight_grads["gamma"] = std::move(ggrad);
    res.grads.weight_grads["beta"] = std::move(bgrad);
    res.grads.per_example_sqnorms["gamma"] = corrected_mean_sqnorm(g_sum, batch);
    res.grads.per_example_sqnorms["beta"] = corrected_mean_sqnorm(b_sum, batch);
    res.grads.per_example_sqnorms_raw["gamma"] = std::move(g_raw);
    res.grads.per_example_sqnorms_raw["beta"] = std::move(b_raw);

    // dL/dx = inv_std * (h - mean(h) - xhat * mean(h * xhat)), h = gamma * g
    res.input_grad = Tensor(g.shape());
    const double* gamma = layer.gamma.data();
    const double kd = static_cast<double>(k);
    std::vector<double> h(static_cast<std::size_t>(k));
    for (Index row = 0; row < v.b * v.m; ++row) {
        const double* nr = cache.normalized.data() + row * k;
        const double* gr = g.data() + row * k;
        double* dr = res.input_grad.data() + row * k;
        const double inv = cache.inv_std[row];
        double mh = 0.0, mhx = 0.0;
        for (Index i = 0; i < k; ++i) {
            h[static_cast<std::size_t>(i)] = gamma[i] * gr[i];
            mh += h[static_cast<std::size_t>(i)];
            mhx += h[static_cast<std::size_t>(i)] * nr[i];
        }
        mh /= kd;
        mhx /= kd;
        for (Index i = 0; i < k; ++i) dr[i] = inv * (h[static_cast<std::size_t>(i)] - mh - nr[i] * mhx);
    }
    return res;
}

Tensor embedding_forward(const EmbeddingLayer& layer, std::span<const std::int32_t> ids, Index batch, Index t_len) {
    const Index v = layer.vocab();
    const Index d = layer.dim();
    if (static_cast<Index>(ids.size()) != batch * t_len) fail("id count does not match batch * t_len");
    Tensor out({batch, t_len, d});
    for (Index i = 0; i < batch * t_len; ++i) {
        const Index id = ids[static_cast<std::size_t>(i)];
        if (id < 0 || id >= v) fail("id out of range");
        const double* row = layer.weight.data() + id * d;
        double* dst = out.data() + i * d;
        std::copy(row, row + d, dst);
    }
    return out;
}

LayerGradOutput embedding_backward_simultaneous(const EmbeddingLayer& layer, std::span<const std::int32_t> ids,
                                                Index batch, Index t_len, const Tensor& g) {
    const Index v = layer.vocab();
    const Index d = layer.dim();
    if (static_cast<Index>(ids.size()) != batch * t_len) fail("id count does not match batch * t_len");
    if (g.shape() != Shape{batch, t_len, d}) fail("gradient shape mismatch");
    if (batch == 0) fail("empty batch");

    LayerGradOutput out;
    out.batch_size = batch;
    Tensor wgrad({v, d});
    Tensor raw({batch});

    // Per example, accumulate rows keyed by id instead of materializing the
    // B x T x V one-hot. Scratch rows are zeroed on release, and the row order
    // of the reductions is kept ascending so results match the dense
    // contraction bit for bit.
    std::vector<double> scratch(static_cast<std::size_t>(v * d), 0.0);
    std::vector<Index> touched;
    std::vector<bool> seen(static_cast<std::size_t>(v), false);

    double sum_sq = 0.0;
    for (Index b = 0; b < batch; ++b) {
        touched.clear();
        for (Index t = 0; t < t_len; ++t) {
            const Index id = ids[static_cast<std::size_t>(b * t_len + t)];
            if (id < 0 || id >= v) fail("id out of range");
            if (!seen[static_cast<std::size_t>(id)]) {
                seen[static_cast<std::size_t>(id)] = true;
                touched.push_back(id);
            }
            const double* gr = g.data() + (b * t_len + t) * d;
            double* row = scratch.data() + id * d;
            for (Index j = 0; j < d; ++j) row[j] += gr[j];
        }
        std::sort(touched.begin(), touched.end());
        double sb = 0.0;
        for (Index row : touched) {
            double* src = scratch.data() + row * d;
            for (Index j = 0; j < d; ++j) sb += src[j] * src[j];  // one flat accumulator
            double* dst = wgrad.data() + row * d;
            for (Index j = 0; j < d; ++j) dst[j] += src[j];
            std::fill(src, src + d, 0.0);
            seen[static_cast<std::size_t>(row)] = false;
        }
        raw[b] = sb;
        sum_sq += sb;
    }

    out.weight_grads["weight"] = std::move(wgrad);
    out.per_example_sqnorms["weight"] = corrected_mean_sqnorm(sum_sq, batch);
    out.per_example_sqnorms_raw["weight"] = std::move(raw);
    return out;
}

}  // namespace gnstk
