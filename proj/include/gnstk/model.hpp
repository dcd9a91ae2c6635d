#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gnstk/gns.hpp"
#include "gnstk/layers.hpp"

namespace gnstk {

/// Residual MLP language model over the three instrumented layer types:
/// embedding -> n_blocks x [LayerNorm -> linear -> tanh -> linear + residual]
/// -> LayerNorm -> linear head. Next-token softmax cross-entropy loss.
struct ToyModel {
    struct Block {
        LayerNormLayer ln;
        LinearLayer fc1;  // D -> H
        LinearLayer fc2;  // H -> D
    };

    EmbeddingLayer embed;  // V x D
    std::vector<Block> blocks;
    LayerNormLayer final_ln;
    LinearLayer head;  // D -> V

    Index vocab() const { return embed.vocab(); }
    Index dim() const { return embed.dim(); }
};

ToyModel make_toy_model(Index vocab, Index model_dim, Index hidden_multiplier, Index n_blocks, std::uint64_t seed);

/// Named mutable handle on one parameter tensor.
struct ParamRef {
    LayerKey layer;
    std::string param;  // "weight" | "bias" | "gamma" | "beta"
    Tensor* tensor;
};

/// Every parameter in a fixed traversal order (embed, blocks, final_ln, head).
std::vector<ParamRef> model_params(ToyModel& model);

/// Gradients of the mean-reduced cross-entropy over one slice of examples,
/// with per-example norms from the simultaneous layer ops. loss_sum is the
/// sum over examples of the per-example mean-token loss (times loss_scale);
/// divide by the slice size for the mean loss the gradients correspond to.
struct SliceBackward {
    double loss_sum = 0.0;
    std::vector<std::pair<LayerKey, LayerGradOutput>> layer_grads;
};

SliceBackward model_backward(const ToyModel& model, std::span<const std::int32_t> inputs,
                             std::span<const std::int32_t> targets, Index batch, Index t_len, double loss_scale);

/// Forward-only mean loss over the slice (matches the loss model_backward
/// differentiates).
double model_loss(const ToyModel& model, std::span<const std::int32_t> inputs, std::span<const std::int32_t> targets,
                  Index batch, Index t_len, double loss_scale);

}  // namespace gnstk
