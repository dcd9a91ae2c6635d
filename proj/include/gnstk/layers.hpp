#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>

#include "gnstk/tensor.hpp"

namespace gnstk {

/// Affine map x -> x.w + bias with weight of shape (K, L).
struct LinearLayer {
    Tensor weight;               // K x L
    std::optional<Tensor> bias;  // L
};

struct LayerNormLayer {
    Tensor gamma;  // K
    Tensor beta;   // K
    double epsilon = 1e-5;
};

struct EmbeddingLayer {
    Tensor weight;  // V x D
    Index vocab() const { return weight.shape()[0]; }
    Index dim() const { return weight.shape()[1]; }
};

/// Result of a backward pass that also carries per-example gradient norms.
/// `per_example_sqnorms` holds, per parameter, the corrected mean of
/// per-example squared norms: (1/B) * sum_b ||theta'_b||^2 * B^2, where the
/// upstream gradient came from a mean-reduced loss over B examples.
/// `per_example_sqnorms_raw` keeps the B uncorrected values for each
/// parameter, useful for cross-checking against other norm paths.
struct LayerGradOutput {
    std::map<std::string, Tensor> weight_grads;
    std::map<std::string, double> per_example_sqnorms;
    std::map<std::string, Tensor> per_example_sqnorms_raw;
    Index batch_size = 0;
};

struct LinearBackwardResult {
    LayerGradOutput grads;
    Tensor input_grad;
};

struct LayerNormCache {
    Tensor normalized;  // same shape as the input
    Tensor inv_std;     // input shape without the trailing axis
};

struct LayerNormForwardResult {
    Tensor output;
    LayerNormCache cache;
};

struct LayerNormBackwardResult {
    LayerGradOutput grads;
    Tensor input_grad;
};

/// y = x.w (+ bias). x has shape B x ... x K, output B x ... x L.
Tensor linear_forward(const LinearLayer& layer, const Tensor& x);

/// Weight (and bias) gradients plus corrected per-example squared norms,
/// computed in one pass by keeping the batch-indexed intermediate. g must be
/// the gradient of a mean-reduced loss over the B leading-axis examples.
LinearBackwardResult linear_backward_simultaneous(const LinearLayer& layer, const Tensor& x, const Tensor& g);

/// Per-example squared gradient norms of a linear layer's weight via the
/// Gram-matrix inner product <X_b X_b^T, G_b G_b^T>_F. Strictly 3-axis
/// inputs (B x T x K and B x T x L); returns B uncorrected values.
Tensor linear_perexample_sqnorm_frobenius(const Tensor& x, const Tensor& g);

/// Normalizes the trailing axis: y = gamma * (x - mu) / sqrt(var + eps) + beta.
LayerNormForwardResult layernorm_forward(const LayerNormLayer& layer, const Tensor& x);

LayerNormBackwardResult layernorm_backward_simultaneous(const LayerNormLayer& layer, const LayerNormCache& cache,
                                                        const Tensor& g);

/// Row lookup: out[b,t,:] = weight[ids[b*t_len+t],:].
Tensor embedding_forward(const EmbeddingLayer& layer, std::span<const std::int32_t> ids, Index batch, Index t_len);

/// Gradient of the embedding table plus corrected per-example squared norms.
/// Uses id-bucketed accumulation; results equal the dense one-hot contraction.
LayerGradOutput embedding_backward_simultaneous(const EmbeddingLayer& layer, std::span<const std::int32_t> ids,
                                                Index batch, Index t_len, const Tensor& g);

}  // namespace gnstk
