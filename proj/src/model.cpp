#include "gnstk/model.hpp"

#include <cmath>
#include <stdexcept>

#include "gnstk/rng.hpp"

namespace gnstk {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::invalid_argument("model: " + msg);
}

constexpr std::uint64_t kInitTag = 0x696e6974ull;

Tensor gaussian_tensor(Shape shape, double stddev, GaussianStream& g) {
    Tensor t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t[i] = stddev * g.next();
    return t;
}

std::string block_name(std::size_t i, const char* part) {
    return "block" + std::to_string(i) + "." + part;
}

}  // namespace

ToyModel make_toy_model(Index vocab, Index model_dim, Index hidden_multiplier, Index n_blocks, std::uint64_t seed) {
    if (vocab < 2 || model_dim < 2 || hidden_multiplier < 1 || n_blocks < 1) fail("invalid model dims");
    const Index hidden = model_dim * hidden_multiplier;
    GaussianStream g(mix_seed(seed, kInitTag));

    ToyModel model;
    model.embed.weight = gaussian_tensor({vocab, model_dim}, 1.0, g);
    model.blocks.resize(static_cast<std::size_t>(n_blocks));
    for (auto& block : model.blocks) {
        block.ln.gamma = Tensor::full({model_dim}, 1.0);
        block.ln.beta = Tensor({model_dim});
        block.ln.epsilon = 1e-5;
        block.fc1.weight = gaussian_tensor({model_dim, hidden}, 1.0 / std::sqrt(static_cast<double>(model_dim)), g);
        block.fc1.bias = Tensor({hidden});
        block.fc2.weight = gaussian_tensor({hidden, model_dim}, 1.0 / std::sqrt(static_cast<double>(hidden)), g);
        block.fc2.bias = Tensor({model_dim});
    }
    model.final_ln.gamma = Tensor::full({model_dim}, 1.0);
    model.final_ln.beta = Tensor({model_dim});
    model.final_ln.epsilon = 1e-5;
    model.head.weight = gaussian_tensor({model_dim, vocab}, 1.0 / std::sqrt(static_cast<double>(model_dim)), g);
    model.head.bias = Tensor({vocab});
    return model;
}

std::vector<ParamRef> model_params(ToyModel& model) {
    std::vector<ParamRef> out;
    out.push_back({{"embed", LayerType::Embedding}, "weight", &model.embed.weight});
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        auto& b = model.blocks[i];
        out.push_back({{block_name(i, "ln"), LayerType::LayerNorm}, "gamma", &b.ln.gamma});
        out.push_back({{block_name(i, "ln"), LayerType::LayerNorm}, "beta", &b.ln.beta});
        out.push_back({{block_name(i, "fc1"), LayerType::Linear}, "weight", &b.fc1.weight});
        out.push_back({{block_name(i, "fc1"), LayerType::Linear}, "bias", &*b.fc1.bias});
        out.push_back({{block_name(i, "fc2"), LayerType::Linear}, "weight", &b.fc2.weight});
        out.push_back({{block_name(i, "fc2"), LayerType::Linear}, "bias", &*b.fc2.bias});
    }
    out.push_back({{"final_ln", LayerType::LayerNorm}, "gamma", &model.final_ln.gamma});
    out.push_back({{"final_ln", LayerType::LayerNorm}, "beta", &model.final_ln.beta});
    out.push_back({{"head", LayerType::Linear}, "weight", &model.head.weight});
    out.push_back({{"head", LayerType::Linear}, "bias", &*model.head.bias});
    return out;
}

namespace {

struct ForwardState {
    std::vector<Tensor> block_inputs;           // x entering each block
    std::vector<LayerNormCache> block_ln_cache;
    std::vector<Tensor> block_ln_out;
    std::vector<Tensor> block_tanh_out;
    Tensor final_input;
    LayerNormCache final_cache;
    Tensor final_out;
    Tensor logits;
};

ForwardState run_forward(const ToyModel& model, std::span<const std::int32_t> inputs, Index batch, Index t_len) {
    ForwardState st;
    Tensor x = embedding_forward(model.embed, inputs, batch, t_len);
    for (const auto& block : model.blocks) {
        st.block_inputs.push_back(x);
        LayerNormForwardResult ln = layernorm_forward(block.ln, x);
        st.block_ln_cache.push_back(std::move(ln.cache));
        st.block_ln_out.push_back(ln.output);
        Tensor a = linear_forward(block.fc1, ln.output);
        for (Index i = 0; i < a.size(); ++i) a[i] = std::tanh(a[i]);
        st.block_tanh_out.push_back(a);
        Tensor r = linear_forward(block.fc2, a);
        Tensor next(x.shape());
        for (Index i = 0; i < x.size(); ++i) next[i] = x[i] + r[i];
        x = std::move(next);
    }
    st.final_input = x;
    LayerNormForwardResult fln = layernorm_forward(model.final_ln, x);
    st.final_cache = std::move(fln.cache);
    st.final_out = fln.output;
    st.logits = linear_forward(model.head, fln.output);
    return st;
}

// Per-example mean-token cross entropies and, optionally, dL/dlogits at the
// given upstream scale. Returns the sum over examples of per-example losses.
double cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets, Index batch, Index t_len,
                     double loss_scale, double upstream_scale, Tensor* dlogits) {
    const Index v = logits.shape().back();
    double loss_sum = 0.0;
    for (Index b = 0; b < batch; ++b) {
        double example_ce = 0.0;
        for (Index t = 0; t < t_len; ++t) {
            const Index row = b * t_len + t;
            const double* lr = logits.data() + row * v;
            const auto target = static_cast<Index>(targets[static_cast<std::size_t>(row)]);
            if (target < 0 || target >= v) fail("target id out of range");
            double max_logit = lr[0];
            for (Index c = 1; c < v; ++c) max_logit = std::max(max_logit, lr[c]);
            double denom = 0.0;
            for (Index c = 0; c < v; ++c) denom += std::exp(lr[c] - max_logit);
            example_ce += std::log(denom) + max_logit - lr[target];
            if (dlogits) {
                double* dr = dlogits->data() + row * v;
                for (Index c = 0; c < v; ++c) {
                    const double p = std::exp(lr[c] - max_logit) / denom;
                    dr[c] = (p - (c == target ? 1.0 : 0.0)) * upstream_scale;
                }
            }
        }
        loss_sum += example_ce / static_cast<double>(t_len) * loss_scale;
    }
    return loss_sum;
}

}  // namespace

SliceBackward model_backward(const ToyModel& model, std::span<const std::int32_t> inputs,
                             std::span<const std::int32_t> targets, Index batch, Index t_len, double loss_scale) {
    if (batch < 1 || t_len < 1) fail("batch and t_len must be positive");
    if (static_cast<Index>(inputs.size()) != batch * t_len || inputs.size() != targets.size())
        fail("inputs/targets size mismatch");

    ForwardState st = run_forward(model, inputs, batch, t_len);

    SliceBackward out;
    Tensor dlogits(st.logits.shape());
    const double upstream_scale =
        loss_scale * (1.0 / static_cast<double>(t_len)) / static_cast<double>(batch);
    out.loss_sum = cross_entropy(st.logits, targets, batch, t_len, loss_scale, upstream_scale, &dlogits);

    LinearBackwardResult head_bw = linear_backward_simultaneous(model.head, st.final_out, dlogits);
    LayerNormBackwardResult fln_bw =
        layernorm_backward_simultaneous(model.final_ln, st.final_cache, head_bw.input_grad);

    Tensor dx = std::move(fln_bw.input_grad);
    std::vector<std::pair<LayerKey, LayerGradOutput>> block_grads;
    for (std::size_t i = model.blocks.size(); i-- > 0;) {
        const auto& block = model.blocks[i];
        // residual: dx is the gradient at the block output, flowing both into
        // the block branch and straight through
        LinearBackwardResult fc2_bw = linear_backward_simultaneous(block.fc2, st.block_tanh_out[i], dx);
        Tensor da(fc2_bw.input_grad.shape());
        const Tensor& z = st.block_tanh_out[i];
        for (Index n = 0; n < da.size(); ++n) da[n] = fc2_bw.input_grad[n] * (1.0 - z[n] * z[n]);
        LinearBackwardResult fc1_bw = linear_backward_simultaneous(block.fc1, st.block_ln_out[i], da);
        LayerNormBackwardResult ln_bw =
            layernorm_backward_simultaneous(block.ln, st.block_ln_cache[i], fc1_bw.input_grad);
        for (Index n = 0; n < dx.size(); ++n) dx[n] = dx[n] + ln_bw.input_grad[n];

        block_grads.emplace_back(LayerKey{block_name(i, "fc2"), LayerType::Linear}, std::move(fc2_bw.grads));
        block_grads.emplace_back(LayerKey{block_name(i, "fc1"), LayerType::Linear}, std::move(fc1_bw.grads));
        block_grads.emplace_back(LayerKey{block_name(i, "ln"), LayerType::LayerNorm}, std::move(ln_bw.grads));
    }
    LayerGradOutput embed_grads = embedding_backward_simultaneous(model.embed, inputs, batch, t_len, dx);

    out.layer_grads.emplace_back(LayerKey{"embed", LayerType::Embedding}, std::move(embed_grads));
    for (auto it = block_grads.rbegin(); it != block_grads.rend(); ++it) out.layer_grads.push_back(std::move(*it));
    out.layer_grads.emplace_back(LayerKey{"final_ln", LayerType::LayerNorm}, std::move(fln_bw.grads));
    out.layer_grads.emplace_back(LayerKey{"head", LayerType::Linear}, std::move(head_bw.grads));
    return out;
}

double model_loss(const ToyModel& model, std::span<const std::int32_t> inputs, std::span<const std::int32_t> targets,
                  Index batch, Index t_len, double loss_scale) {
    if (batch < 1 || t_len < 1) fail("batch and t_len must be positive");
    if (static_cast<Index>(inputs.size()) != batch * t_len || inputs.size() != targets.size())
        fail("inputs/targets size mismatch");
    ForwardState st = run_forward(model, inputs, batch, t_len);
    const double loss_sum = cross_entropy(st.logits, targets, batch, t_len, loss_scale, 0.0, nullptr);
    return loss_sum / static_cast<double>(batch);
}

}  // namespace gnstk
