#include "gnstk/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace gnstk {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::invalid_argument("trainer: " + msg);
}

Index round_half_up_min1(double x) {
    const double r = std::floor(x + 0.5);
    return r < 1.0 ? 1 : static_cast<Index>(r);
}

}  // namespace

Index scheduled_batch(const ScheduleSpec& spec, std::int64_t tokens_processed) {
    if (spec.kind == ScheduleKind::Fixed) return spec.b;
    const double frac =
        std::min(static_cast<double>(tokens_processed) / static_cast<double>(spec.ramp_tokens), 1.0);
    const double b = static_cast<double>(spec.b_start) +
                     (static_cast<double>(spec.b_end) - static_cast<double>(spec.b_start)) * frac;
    return round_half_up_min1(b);
}

void validate(const TrainConfig& cfg) {
    if (cfg.vocab < 2) fail("vocab must be >= 2");
    if (cfg.model_dim < 2) fail("model_dim must be >= 2");
    if (cfg.hidden_multiplier < 1) fail("hidden_multiplier must be >= 1");
    if (cfg.n_blocks < 1) fail("n_blocks must be >= 1");
    if (cfg.seq_len < 1) fail("seq_len must be >= 1");
    if (cfg.total_tokens < 1) fail("total_tokens must be >= 1");
    if (cfg.learning_rate < 0.0) fail("learning_rate must be >= 0");
    if (!(cfg.ema_alpha > 0.0) || cfg.ema_alpha > 1.0) fail("ema_alpha must be in (0, 1]");
    if (cfg.loss_scale <= 0.0) fail("loss_scale must be positive");
    if (cfg.lr_schedule.kind == LrScheduleKind::Cosine &&
        (cfg.lr_schedule.min_ratio < 0.0 || cfg.lr_schedule.min_ratio > 1.0))
        fail("lr min_ratio must be in [0, 1]");

    const ScheduleSpec& bs = cfg.batch_schedule;
    if (bs.kind == ScheduleKind::Fixed) {
        if (bs.b < 1) fail("batch size must be >= 1");
    } else {
        if (bs.b_start < 1 || bs.b_end < bs.b_start) fail("ramp requires 1 <= b_start <= b_end");
        if (bs.ramp_tokens < 1) fail("ramp_tokens must be >= 1");
        if (bs.ramp_tokens > cfg.total_tokens) fail("ramp_tokens must not exceed total_tokens");
    }

    const EstimationMode& em = cfg.estimation_mode;
    switch (em.kind) {
        case EstimationKind::PerExample:
            break;
        case EstimationKind::Microbatch:
            if (em.m < 2) fail("microbatch mode needs m >= 2");
            break;
        case EstimationKind::Subbatch:
            if (em.m < 2) fail("subbatch mode needs m >= 2");
            if (em.j < 1 || em.j >= em.m) fail("subbatch needs 1 <= j < m");
            break;
    }
}

// ---------------------------------------------------------------------------
// config JSON

namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) fail(std::string("unknown config key '") + key + "' in " + where);
    }
}

}  // namespace

TrainConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j,
               {"schema_version", "vocab", "model_dim", "hidden_multiplier", "n_blocks", "seq_len", "total_tokens",
                "optimizer", "learning_rate", "lr_schedule", "batch_schedule", "estimation_mode", "ema_alpha", "seed",
                "loss_scale"},
               "config");
    if (!j.contains("schema_version") || j["schema_version"] != 1) fail("config must declare schema_version 1");

    TrainConfig cfg;
    cfg.vocab = j.at("vocab").get<Index>();
    cfg.model_dim = j.at("model_dim").get<Index>();
    cfg.hidden_multiplier = j.at("hidden_multiplier").get<Index>();
    cfg.n_blocks = j.at("n_blocks").get<Index>();
    cfg.seq_len = j.at("seq_len").get<Index>();
    cfg.total_tokens = j.at("total_tokens").get<std::int64_t>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.ema_alpha = j.at("ema_alpha").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.loss_scale = j.value("loss_scale", 1.0);

    const json& opt = j.at("optimizer");
    check_keys(opt, {"kind", "beta1", "beta2", "eps"}, "optimizer");
    const std::string opt_kind = opt.at("kind").get<std::string>();
    if (opt_kind == "sgd") {
        cfg.optimizer.kind = OptimizerKind::Sgd;
    } else if (opt_kind == "adam") {
        cfg.optimizer.kind = OptimizerKind::Adam;
        cfg.optimizer.beta1 = opt.value("beta1", 0.9);
        cfg.optimizer.beta2 = opt.value("beta2", 0.999);
        cfg.optimizer.eps = opt.value("eps", 1e-8);
    } else {
        fail("optimizer kind must be 'sgd' or 'adam'");
    }

    if (j.contains("lr_schedule")) {
        const json& lrs = j.at("lr_schedule");
        check_keys(lrs, {"kind", "min_ratio"}, "lr_schedule");
        const std::string kind = lrs.at("kind").get<std::string>();
        if (kind == "constant") {
            cfg.lr_schedule.kind = LrScheduleKind::Constant;
        } else if (kind == "cosine") {
            cfg.lr_schedule.kind = LrScheduleKind::Cosine;
            cfg.lr_schedule.min_ratio = lrs.value("min_ratio", 0.1);
        } else {
            fail("lr_schedule kind must be 'constant' or 'cosine'");
        }
    }

    const json& bs = j.at("batch_schedule");
    check_keys(bs, {"kind", "b", "b_start", "b_end", "ramp_tokens"}, "batch_schedule");
    const std::string bs_kind = bs.at("kind").get<std::string>();
    if (bs_kind == "fixed") {
        cfg.batch_schedule.kind = ScheduleKind::Fixed;
        cfg.batch_schedule.b = bs.at("b").get<Index>();
    } else if (bs_kind == "linear_ramp") {
        cfg.batch_schedule.kind = ScheduleKind::LinearRamp;
        cfg.batch_schedule.b_start = bs.at("b_start").get<Index>();
        cfg.batch_schedule.b_end = bs.at("b_end").get<Index>();
        cfg.batch_schedule.ramp_tokens = bs.at("ramp_tokens").get<std::int64_t>();
    } else {
        fail("batch_schedule kind must be 'fixed' or 'linear_ramp'");
    }

    const json& em = j.at("estimation_mode");
    check_keys(em, {"kind", "m", "j"}, "estimation_mode");
    const std::string em_kind = em.at("kind").get<std::string>();
    if (em_kind == "per_example") {
        cfg.estimation_mode.kind = EstimationKind::PerExample;
    } else if (em_kind == "microbatch") {
        cfg.estimation_mode.kind = EstimationKind::Microbatch;
        cfg.estimation_mode.m = em.at("m").get<Index>();
    } else if (em_kind == "subbatch") {
        cfg.estimation_mode.kind = EstimationKind::Subbatch;
        cfg.estimation_mode.m = em.at("m").get<Index>();
        cfg.estimation_mode.j = em.at("j").get<Index>();
    } else {
        fail("estimation_mode kind must be 'per_example', 'microbatch' or 'subbatch'");
    }

    validate(cfg);
    return cfg;
}

std::string config_to_json_text(const TrainConfig& cfg) {
    json j;
    j["schema_version"] = 1;
    j["vocab"] = cfg.vocab;
    j["model_dim"] = cfg.model_dim;
    j["hidden_multiplier"] = cfg.hidden_multiplier;
    j["n_blocks"] = cfg.n_blocks;
    j["seq_len"] = cfg.seq_len;
    j["total_tokens"] = cfg.total_tokens;
    j["learning_rate"] = cfg.learning_rate;
    j["ema_alpha"] = cfg.ema_alpha;
    j["seed"] = cfg.seed;
    j["loss_scale"] = cfg.loss_scale;
    if (cfg.optimizer.kind == OptimizerKind::Sgd) {
        j["optimizer"] = {{"kind", "sgd"}};
    } else {
        j["optimizer"] = {{"kind", "adam"},
                          {"beta1", cfg.optimizer.beta1},
                          {"beta2", cfg.optimizer.beta2},
                          {"eps", cfg.optimizer.eps}};
    }
    if (cfg.lr_schedule.kind == LrScheduleKind::Constant)
        j["lr_schedule"] = {{"kind", "constant"}};
    else
        j["lr_schedule"] = {{"kind", "cosine"}, {"min_ratio", cfg.lr_schedule.min_ratio}};
    if (cfg.batch_schedule.kind == ScheduleKind::Fixed)
        j["batch_schedule"] = {{"kind", "fixed"}, {"b", cfg.batch_schedule.b}};
    else
        j["batch_schedule"] = {{"kind", "linear_ramp"},
                               {"b_start", cfg.batch_schedule.b_start},
                               {"b_end", cfg.batch_schedule.b_end},
                               {"ramp_tokens", cfg.batch_schedule.ramp_tokens}};
    switch (cfg.estimation_mode.kind) {
        case EstimationKind::PerExample: j["estimation_mode"] = {{"kind", "per_example"}}; break;
        case EstimationKind::Microbatch:
            j["estimation_mode"] = {{"kind", "microbatch"}, {"m", cfg.estimation_mode.m}};
            break;
        case EstimationKind::Subbatch:
            j["estimation_mode"] = {{"kind", "subbatch"}, {"m", cfg.estimation_mode.m}, {"j", cfg.estimation_mode.j}};
            break;
    }
    return j.dump(2) + "\n";
}

TrainConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open config file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return config_from_json_text(buf.str());
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const TrainConfig& cfg) : cfg_(cfg), data_(cfg.vocab, cfg.seed) {
    validate(cfg_);
    model_ = make_toy_model(cfg_.vocab, cfg_.model_dim, cfg_.hidden_multiplier, cfg_.n_blocks, cfg_.seed);
    for (auto& g : ema_) {
        g.g2.alpha = cfg_.ema_alpha;
        g.s.alpha = cfg_.ema_alpha;
    }
}

double Trainer::current_lr() const {
    if (cfg_.lr_schedule.kind == LrScheduleKind::Constant) return cfg_.learning_rate;
    const double frac = std::min(static_cast<double>(tokens_) / static_cast<double>(cfg_.total_tokens), 1.0);
    const double min_ratio = cfg_.lr_schedule.min_ratio;
    const double w = 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
    return cfg_.learning_rate * (min_ratio + (1.0 - min_ratio) * w);
}

void Trainer::apply_update(std::map<LayerKey, LayerGradOutput>& grads, double lr) {
    auto params = model_params(model_);
    if (cfg_.optimizer.kind == OptimizerKind::Sgd) {
        for (auto& p : params) {
            const Tensor& g = grads.at(p.layer).weight_grads.at(p.param);
            for (Index i = 0; i < g.size(); ++i) (*p.tensor)[i] -= lr * g[i];
        }
        return;
    }
    ++adam_t_;
    const double b1 = cfg_.optimizer.beta1;
    const double b2 = cfg_.optimizer.beta2;
    const double eps = cfg_.optimizer.eps;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam_t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam_t_));
    for (auto& p : params) {
        const Tensor& g = grads.at(p.layer).weight_grads.at(p.param);
        AdamSlot& slot = adam_state_[p.layer.name + "/" + p.param];
        if (slot.m.empty()) {
            slot.m.assign(static_cast<std::size_t>(g.size()), 0.0);
            slot.v.assign(static_cast<std::size_t>(g.size()), 0.0);
        }
        for (Index i = 0; i < g.size(); ++i) {
            auto idx = static_cast<std::size_t>(i);
            slot.m[idx] = b1 * slot.m[idx] + (1.0 - b1) * g[i];
            slot.v[idx] = b2 * slot.v[idx] + (1.0 - b2) * g[i] * g[i];
            const double mhat = slot.m[idx] / bc1;
            const double vhat = slot.v[idx] / bc2;
            (*p.tensor)[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

StepLog Trainer::step() {
    const Index b = scheduled_batch(cfg_.batch_schedule, tokens_);
    const Index t = cfg_.seq_len;
    const EstimationMode& mode = cfg_.estimation_mode;

    Index n_slices = 1;
    Index slice_b = b;
    if (mode.kind == EstimationKind::PerExample) {
        if (b < 2) fail("per-example estimation needs batch size >= 2");
    } else {
        if (b % mode.m != 0) fail("batch size " + std::to_string(b) + " not divisible into m=" +
                                  std::to_string(mode.m) + " microbatches");
        n_slices = mode.m;
        slice_b = b / mode.m;
    }

    std::vector<std::int32_t> seq(static_cast<std::size_t>(t + 1));
    std::vector<std::int32_t> inputs(static_cast<std::size_t>(b * t));
    std::vector<std::int32_t> targets(static_cast<std::size_t>(b * t));
    for (Index e = 0; e < b; ++e) {
        data_.fill_sequence(seq);
        for (Index i = 0; i < t; ++i) {
            inputs[static_cast<std::size_t>(e * t + i)] = seq[static_cast<std::size_t>(i)];
            targets[static_cast<std::size_t>(e * t + i)] = seq[static_cast<std::size_t>(i + 1)];
        }
    }

    double loss_sum = 0.0;
    std::map<LayerKey, LayerGradOutput> acc;
    // per layer, per parameter: mode-dependent small-batch squared-norm sums
    std::map<LayerKey, std::map<std::string, double>> small_sum;
    std::map<LayerKey, double> subbatch_norm;

    for (Index s = 0; s < n_slices; ++s) {
        const auto offset = static_cast<std::size_t>(s * slice_b * t);
        const auto count = static_cast<std::size_t>(slice_b * t);
        SliceBackward sb = model_backward(model_, std::span(inputs).subspan(offset, count),
                                          std::span(targets).subspan(offset, count), slice_b, t, cfg_.loss_scale);
        loss_sum += sb.loss_sum;
        for (auto& [key, lg] : sb.layer_grads) {
            if (mode.kind == EstimationKind::PerExample) {
                for (const auto& [pname, corrected] : lg.per_example_sqnorms) small_sum[key][pname] = corrected;
            } else if (mode.kind == EstimationKind::Microbatch) {
                for (const auto& [pname, gt] : lg.weight_grads) small_sum[key][pname] += sqnorm_all(gt);
            }
            auto it = acc.find(key);
            if (it == acc.end()) {
                acc.emplace(key, std::move(lg));
            } else {
                for (auto& [pname, gt] : lg.weight_grads) {
                    Tensor& dst = it->second.weight_grads.at(pname);
                    for (Index i = 0; i < dst.size(); ++i) dst[i] += gt[i];
                }
            }
        }
        if (mode.kind == EstimationKind::Subbatch && s == mode.j - 1) {
            const double jd = static_cast<double>(mode.j);
            for (const auto& [key, lg] : acc) {
                double nsq = 0.0;
                for (const auto& [pname, gt] : lg.weight_grads)
                    for (Index i = 0; i < gt.size(); ++i) {
                        const double r = gt[i] / jd;
                        nsq += r * r;
                    }
                subbatch_norm[key] = nsq;
            }
        }
    }

    if (n_slices > 1) {
        const double nd = static_cast<double>(n_slices);
        for (auto& [key, lg] : acc)
            for (auto& [pname, gt] : lg.weight_grads)
                for (Index i = 0; i < gt.size(); ++i) gt[i] /= nd;
    }

    const double loss = loss_sum / static_cast<double>(b);
    if (!std::isfinite(loss)) throw TrainingDiverged("trainer: loss diverged at step " + std::to_string(step_));

    std::map<LayerKey, GradStats> stats;
    for (const auto& [key, lg] : acc) {
        double big = 0.0;
        for (const auto& [pname, gt] : lg.weight_grads) big += sqnorm_all(gt);
        GradStats st;
        st.b_big = b;
        st.g_big_sqnorm = big;
        switch (mode.kind) {
            case EstimationKind::PerExample: {
                st.b_small = 1;
                st.n_small = b;
                double small = 0.0;
                for (const auto& [pname, v] : small_sum.at(key)) small += v;
                st.g_small_sqnorm_mean = small;
                break;
            }
            case EstimationKind::Microbatch: {
                st.b_small = slice_b;
                st.n_small = n_slices;
                double small = 0.0;
                for (const auto& [pname, v] : small_sum.at(key)) small += v / static_cast<double>(n_slices);
                st.g_small_sqnorm_mean = small;
                break;
            }
            case EstimationKind::Subbatch: {
                st.b_small = mode.j * slice_b;
                st.n_small = 1;
                st.g_small_sqnorm_mean = subbatch_norm.at(key);
                break;
            }
        }
        stats[key] = st;
    }

    StepLog log;
    log.step = step_;
    log.batch_size = b;
    log.loss = loss;

    auto fill_group = [&](std::optional<LayerType> filter, GroupEma& ema, GroupLog& out) {
        const GradStats gs = aggregate(stats, filter);
        out.g2_raw = estimate_g2(gs);
        out.s_raw = estimate_s(gs);
        ema.g2 = ema_update(ema.g2, out.g2_raw);
        ema.s = ema_update(ema.s, out.s_raw);
        const GnsEstimate est = smoothed_gns(ema.g2, ema.s);
        out.gns_ema = est.b_simple;
        out.gns_defined = est.b_simple_defined;
    };
    fill_group(std::nullopt, ema_[0], log.total);
    fill_group(LayerType::Embedding, ema_[1], log.embedding);
    fill_group(LayerType::Linear, ema_[2], log.linear);
    fill_group(LayerType::LayerNorm, ema_[3], log.layernorm);

    for (const auto& [key, st] : stats)
        log.layers.push_back({key.name, key.type, estimate_g2(st), estimate_s(st)});

    apply_update(acc, current_lr());

    tokens_ += b * t;
    ++step_;
    log.tokens = tokens_;
    return log;
}

std::vector<StepLog> Trainer::run() {
    std::vector<StepLog> logs;
    while (!done()) logs.push_back(step());
    return logs;
}

void Trainer::scale_learning_rate(double factor) {
    if (factor <= 0.0) fail("learning-rate scale factor must be positive");
    cfg_.learning_rate *= factor;
}

void Trainer::scale_batch_schedule(double factor) {
    if (factor <= 0.0) fail("batch scale factor must be positive");
    ScheduleSpec& bs = cfg_.batch_schedule;
    if (bs.kind == ScheduleKind::Fixed) {
        bs.b = round_half_up_min1(factor * static_cast<double>(bs.b));
        if (cfg_.estimation_mode.kind != EstimationKind::PerExample && bs.b % cfg_.estimation_mode.m != 0)
            fail("scaled batch not schedulable with m=" + std::to_string(cfg_.estimation_mode.m));
    } else {
        bs.b_start = round_half_up_min1(factor * static_cast<double>(bs.b_start));
        bs.b_end = round_half_up_min1(factor * static_cast<double>(bs.b_end));
        if (bs.b_end < bs.b_start) bs.b_end = bs.b_start;
    }
}

TrainResult train(const TrainConfig& cfg) {
    Trainer trainer(cfg);
    TrainResult res;
    res.logs = trainer.run();
    res.model = trainer.model();
    return res;
}

// ---------------------------------------------------------------------------
// estimation-mode capture on materialized microbatch gradients

GradStats capture_mode_norms(const EstimationMode& mode, std::span<const Tensor> per_microbatch_grads,
                             Index batch_size) {
    const auto m = static_cast<Index>(per_microbatch_grads.size());
    if (m < 1) fail("capture_mode_norms needs at least one microbatch gradient");
    for (const Tensor& g : per_microbatch_grads)
        if (!g.same_shape(per_microbatch_grads[0])) fail("microbatch gradients must share a shape");
    if (batch_size % m != 0) fail("microbatch count must divide the batch size");
    const Index micro_b = batch_size / m;

    GradStats st;
    st.b_big = batch_size;

    // mean gradient over all microbatches
    const Index n = per_microbatch_grads[0].size();
    std::vector<double> mean(static_cast<std::size_t>(n), 0.0);
    for (const Tensor& g : per_microbatch_grads)
        for (Index i = 0; i < n; ++i) mean[static_cast<std::size_t>(i)] += g[i];
    double big = 0.0;
    const double md = static_cast<double>(m);
    for (Index i = 0; i < n; ++i) {
        const double v = mean[static_cast<std::size_t>(i)] / md;
        big += v * v;
    }
    st.g_big_sqnorm = big;

    switch (mode.kind) {
        case EstimationKind::PerExample: {
            if (micro_b != 1) fail("per-example capture needs microbatches of size 1");
            st.b_small = 1;
            st.n_small = m;
            double acc = 0.0;
            for (const Tensor& g : per_microbatch_grads) acc += sqnorm_all(g);
            st.g_small_sqnorm_mean = acc / md;
            break;
        }
        case EstimationKind::Microbatch: {
            if (mode.m != m) fail("mode.m does not match the number of microbatch gradients");
            st.b_small = micro_b;
            st.n_small = m;
            double acc = 0.0;
            for (const Tensor& g : per_microbatch_grads) acc += sqnorm_all(g);
            st.g_small_sqnorm_mean = acc / md;
            break;
        }
        case EstimationKind::Subbatch: {
            if (mode.m != m) fail("mode.m does not match the number of microbatch gradients");
            if (mode.j < 1 || mode.j >= m) fail("subbatch needs 1 <= j < m");
            const double jd = static_cast<double>(mode.j);
            double nsq = 0.0;
            std::vector<double> run(static_cast<std::size_t>(n), 0.0);
            for (Index i = 0; i < mode.j; ++i) {
                const Tensor& g = per_microbatch_grads[static_cast<std::size_t>(i)];
                for (Index c = 0; c < n; ++c) run[static_cast<std::size_t>(c)] += g[c];
            }
            for (Index c = 0; c < n; ++c) {
                const double v = run[static_cast<std::size_t>(c)] / jd;
                nsq += v * v;
            }
            st.g_small_sqnorm_mean = nsq;
            st.b_small = mode.j * micro_b;
            st.n_small = 1;
            break;
        }
    }
    if (st.b_small >= st.b_big) fail("capture degenerate: b_small must stay below b_big");
    return st;
}

// ---------------------------------------------------------------------------
// temperature intervention scenario

std::string Intervention::label() const {
    std::ostringstream out;
    out << (kind == Kind::ScaleLr ? "lr_x" : "batch_x") << factor;
    return out.str();
}

std::vector<ScenarioRun> temperature_scenario(const TrainConfig& cfg, std::int64_t checkpoint_step,
                                              std::span<const Intervention> interventions) {
    if (checkpoint_step < 0) fail("checkpoint_step must be non-negative");
    for (const Intervention& iv : interventions)
        if (iv.factor <= 0.0) fail("intervention factor must be positive");

    Trainer base(cfg);
    for (std::int64_t i = 0; i < checkpoint_step; ++i) {
        if (base.done()) fail("checkpoint_step is beyond the training budget");
        base.step();
    }
    if (base.done()) fail("checkpoint_step leaves no steps to continue");

    std::vector<ScenarioRun> runs;
    runs.reserve(interventions.size());
    for (const Intervention& iv : interventions) {
        Trainer t = base;
        if (iv.kind == Intervention::Kind::ScaleLr)
            t.scale_learning_rate(iv.factor);
        else
            t.scale_batch_schedule(iv.factor);
        ScenarioRun run;
        run.intervention = iv;
        while (!t.done()) run.logs.push_back(t.step());
        runs.push_back(std::move(run));
    }
    return runs;
}

// ---------------------------------------------------------------------------
// tokens-saved analysis

std::vector<LossPoint> ema_smooth_losses(std::span<const LossPoint> series, double alpha) {
    std::vector<LossPoint> out;
    out.reserve(series.size());
    EmaState state{alpha};
    for (const LossPoint& p : series) {
        state = ema_update(state, p.loss);
        out.push_back({p.tokens, state.value});
    }
    return out;
}

std::vector<LossPoint> running_min_envelope(std::span<const LossPoint> series) {
    std::vector<LossPoint> out;
    for (const LossPoint& p : series) {
        if (out.empty() || p.loss < out.back().loss) out.push_back(p);
    }
    return out;
}

namespace {

// tokens at which the strictly-decreasing envelope reaches `level`
double interp_tokens(const std::vector<LossPoint>& env, double level) {
    std::size_t j = 0;
    while (j < env.size() && env[j].loss > level) ++j;
    if (j >= env.size()) fail("interpolation level below envelope range");
    if (env[j].loss == level || j == 0) return env[j].tokens;
    const LossPoint& a = env[j - 1];
    const LossPoint& b = env[j];
    return a.tokens + (b.tokens - a.tokens) * (a.loss - level) / (a.loss - b.loss);
}

}  // namespace

std::vector<TokensSavedPoint> tokens_saved(std::span<const LossPoint> baseline, std::span<const LossPoint> candidate) {
    const std::vector<LossPoint> be = running_min_envelope(baseline);
    const std::vector<LossPoint> ce = running_min_envelope(candidate);
    if (be.empty() || ce.empty()) fail("empty loss series");
    const double cand_hi = ce.front().loss;
    const double cand_lo = ce.back().loss;

    std::vector<TokensSavedPoint> out;
    for (const LossPoint& p : be) {
        if (p.loss > cand_hi || p.loss < cand_lo) continue;
        out.push_back({p.loss, p.tokens - interp_tokens(ce, p.loss)});
    }
    if (out.empty()) throw std::runtime_error("trainer: no overlapping loss range between runs");
    return out;
}

double tokens_to_reach(std::span<const LossPoint> series, double level) {
    const std::vector<LossPoint> env = running_min_envelope(series);
    if (env.empty()) fail("empty loss series");
    if (level > env.front().loss || level < env.back().loss)
        throw std::runtime_error("trainer: loss level outside the achieved range");
    return interp_tokens(env, level);
}

}  // namespace gnstk
