#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gnstk/trainer.hpp"
#include "support/test_helpers.hpp"

using namespace gnstk;
using gnstk::testing::close;

namespace {

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.vocab = 8;
    cfg.model_dim = 8;
    cfg.hidden_multiplier = 2;
    cfg.n_blocks = 2;
    cfg.seq_len = 4;
    cfg.total_tokens = 4 * 4 * 20;  // 20 steps at B=4
    cfg.optimizer.kind = OptimizerKind::Adam;
    cfg.learning_rate = 1e-3;
    cfg.batch_schedule = {ScheduleKind::Fixed, 4, 1, 1, 1};
    cfg.estimation_mode = {EstimationKind::PerExample, 1, 1};
    cfg.ema_alpha = 0.1;
    cfg.seed = 1;
    return cfg;
}

bool group_identical(const GroupLog& a, const GroupLog& b) {
    return a.g2_raw == b.g2_raw && a.s_raw == b.s_raw && a.gns_ema == b.gns_ema && a.gns_defined == b.gns_defined;
}

bool logs_identical(const std::vector<StepLog>& a, const std::vector<StepLog>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const StepLog& x = a[i];
        const StepLog& y = b[i];
        if (x.step != y.step || x.tokens != y.tokens || x.batch_size != y.batch_size) return false;
        if (x.loss != y.loss) return false;
        if (!group_identical(x.total, y.total) || !group_identical(x.embedding, y.embedding) ||
            !group_identical(x.linear, y.linear) || !group_identical(x.layernorm, y.layernorm))
            return false;
        if (x.layers.size() != y.layers.size()) return false;
        for (std::size_t j = 0; j < x.layers.size(); ++j) {
            if (x.layers[j].name != y.layers[j].name || x.layers[j].type != y.layers[j].type) return false;
            if (x.layers[j].g2_raw != y.layers[j].g2_raw || x.layers[j].s_raw != y.layers[j].s_raw) return false;
        }
    }
    return true;
}

}  // namespace

TEST_SUITE("trainer") {
    TEST_CASE("batch schedule arithmetic") {
        ScheduleSpec fixed{ScheduleKind::Fixed, 32, 1, 1, 1};
        CHECK(scheduled_batch(fixed, 0) == 32);
        CHECK(scheduled_batch(fixed, 123456) == 32);

        ScheduleSpec ramp{ScheduleKind::LinearRamp, 1, 8, 64, 1000};
        CHECK(scheduled_batch(ramp, 0) == 8);
        CHECK(scheduled_batch(ramp, 1000) == 64);
        CHECK(scheduled_batch(ramp, 999999) == 64);
        for (std::int64_t tok : {0, 125, 250, 500, 750, 999}) {
            const double expect = 8.0 + 56.0 * std::min(static_cast<double>(tok) / 1000.0, 1.0);
            CHECK(scheduled_batch(ramp, tok) == static_cast<Index>(std::floor(expect + 0.5)));
        }

        ScheduleSpec down{ScheduleKind::LinearRamp, 1, 1, 1, 100};
        CHECK(scheduled_batch(down, 0) == 1);
    }

    TEST_CASE("config json round trip") {
        TrainConfig cfg = tiny_config();
        cfg.batch_schedule = {ScheduleKind::LinearRamp, 1, 4, 16, 256};
        cfg.estimation_mode = {EstimationKind::Subbatch, 4, 2};
        cfg.lr_schedule = {LrScheduleKind::Cosine, 0.2};
        const std::string text = config_to_json_text(cfg);
        const TrainConfig back = config_from_json_text(text);
        CHECK(back.vocab == cfg.vocab);
        CHECK(back.batch_schedule.kind == ScheduleKind::LinearRamp);
        CHECK(back.batch_schedule.b_end == 16);
        CHECK(back.estimation_mode.kind == EstimationKind::Subbatch);
        CHECK(back.estimation_mode.j == 2);
        CHECK(back.lr_schedule.min_ratio == 0.2);
        CHECK(back.seed == cfg.seed);
    }

    TEST_CASE("config json rejects unknown keys, bad schema and bad values") {
        CHECK_THROWS_AS(config_from_json_text("{"), std::invalid_argument);
        CHECK_THROWS_AS(config_from_json_text("{\"schema_version\": 2}"), std::invalid_argument);
        TrainConfig cfg = tiny_config();
        std::string text = config_to_json_text(cfg);
        text.insert(text.rfind('}'), ",\"bogus\": 1");
        CHECK_THROWS_AS(config_from_json_text(text), std::invalid_argument);

        TrainConfig bad = cfg;
        bad.ema_alpha = 0.0;
        CHECK_THROWS_AS(validate(bad), std::invalid_argument);
        bad = cfg;
        bad.estimation_mode = {EstimationKind::Subbatch, 4, 4};
        CHECK_THROWS_AS(validate(bad), std::invalid_argument);
        bad = cfg;
        bad.batch_schedule = {ScheduleKind::LinearRamp, 1, 8, 4, 100};
        CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    }

    TEST_CASE("identical configs give bit-identical logs") {
        const TrainConfig cfg = tiny_config();
        const auto a = train(cfg).logs;
        const auto b = train(cfg).logs;
        CHECK(logs_identical(a, b));
        CHECK(a.size() == 20);

        TrainConfig other = cfg;
        other.seed = 2;
        CHECK(!logs_identical(a, train(other).logs));
    }

    TEST_CASE("per-example and microbatch(m=B) modes are bit-identical") {
        TrainConfig pe = tiny_config();
        TrainConfig mb = pe;
        mb.estimation_mode = {EstimationKind::Microbatch, 4, 1};  // m == B
        const auto a = train(pe).logs;
        const auto b = train(mb).logs;
        CHECK(logs_identical(a, b));
    }

    TEST_CASE("per-layer raw estimates sum to the totals") {
        const auto logs = train(tiny_config()).logs;
        for (const StepLog& log : logs) {
            double g2 = 0.0, s = 0.0;
            for (const PerLayerLog& l : log.layers) {
                g2 += l.g2_raw;
                s += l.s_raw;
            }
            CHECK(close(g2, log.total.g2_raw, 1e-12, 1e-13));
            CHECK(close(s, log.total.s_raw, 1e-12, 1e-13));
        }
    }

    TEST_CASE("zero learning rate leaves parameters untouched") {
        TrainConfig cfg = tiny_config();
        cfg.learning_rate = 0.0;
        Trainer t(cfg);
        ToyModel before = t.model();
        for (int i = 0; i < 5; ++i) t.step();
        auto pa = model_params(before);
        auto pb = model_params(t.model());
        for (std::size_t i = 0; i < pa.size(); ++i)
            CHECK(gnstk::testing::tensors_equal(*pa[i].tensor, *pb[i].tensor));
    }

    TEST_CASE("loss gradients match finite differences on a frozen model") {
        TrainConfig cfg = tiny_config();
        Trainer t(cfg);
        ToyModel model = t.model();  // frozen copy

        MarkovDataset data(cfg.vocab, 99);
        const Index b = 4, t_len = cfg.seq_len;
        std::vector<std::int32_t> seq(static_cast<std::size_t>(t_len + 1));
        std::vector<std::int32_t> inputs(static_cast<std::size_t>(b * t_len)),
            targets(static_cast<std::size_t>(b * t_len));
        for (Index e = 0; e < b; ++e) {
            data.fill_sequence(seq);
            for (Index i = 0; i < t_len; ++i) {
                inputs[static_cast<std::size_t>(e * t_len + i)] = seq[static_cast<std::size_t>(i)];
                targets[static_cast<std::size_t>(e * t_len + i)] = seq[static_cast<std::size_t>(i + 1)];
            }
        }
        SliceBackward bw = model_backward(model, inputs, targets, b, t_len, 1.0);
        std::map<LayerKey, LayerGradOutput> grads;
        for (auto& [key, lg] : bw.layer_grads) grads.emplace(key, std::move(lg));

        SplitMix64 pick(123);
        const double h = 1e-5;
        for (ParamRef& p : model_params(model)) {
            const Tensor& g = grads.at(p.layer).weight_grads.at(p.param);
            for (int rep = 0; rep < 3; ++rep) {
                const Index i = static_cast<Index>(pick.next_below(static_cast<std::uint64_t>(g.size())));
                const double saved = (*p.tensor)[i];
                (*p.tensor)[i] = saved + h;
                const double up = model_loss(model, inputs, targets, b, t_len, 1.0);
                (*p.tensor)[i] = saved - h;
                const double down = model_loss(model, inputs, targets, b, t_len, 1.0);
                (*p.tensor)[i] = saved;
                const double fd = (up - down) / (2 * h);
                CHECK(close(g[i], fd, 1e-4, 1e-9));
            }
        }
    }

    TEST_CASE("capture_mode_norms worked examples") {
        // grads [1,0] and [1,1]
        std::vector<Tensor> grads = {Tensor({2}, {1, 0}), Tensor({2}, {1, 1})};
        const GradStats micro = capture_mode_norms({EstimationKind::Microbatch, 2, 1}, grads, 2);
        CHECK(micro.g_big_sqnorm == 1.25);
        CHECK(micro.g_small_sqnorm_mean == 1.5);
        CHECK(micro.b_big == 2);
        CHECK(micro.b_small == 1);
        CHECK(micro.n_small == 2);
        CHECK(estimate_g2(micro) == 1.0);
        CHECK(estimate_s(micro) == 0.5);

        const GradStats sub = capture_mode_norms({EstimationKind::Subbatch, 2, 1}, grads, 2);
        CHECK(sub.g_small_sqnorm_mean == 1.0);  // ||[1,0]||^2
        CHECK(sub.n_small == 1);
        CHECK(sub.b_small == 1);

        std::vector<Tensor> same = {Tensor({2}, {1, 1}), Tensor({2}, {1, 1})};
        const GradStats ident = capture_mode_norms({EstimationKind::Microbatch, 2, 1}, same, 2);
        CHECK(estimate_s(ident) == 0.0);

        CHECK_THROWS_AS(capture_mode_norms({EstimationKind::Subbatch, 2, 2}, grads, 2), std::invalid_argument);
        CHECK_THROWS_AS(capture_mode_norms({EstimationKind::Microbatch, 2, 1}, grads, 3), std::invalid_argument);
    }

    TEST_CASE("temperature scenario: identity intervention reproduces the plain continuation") {
        TrainConfig cfg = tiny_config();
        const std::vector<Intervention> ivs = {{Intervention::Kind::ScaleLr, 1.0},
                                               {Intervention::Kind::ScaleLr, 0.5},
                                               {Intervention::Kind::ScaleLr, 2.0}};
        const auto runs = temperature_scenario(cfg, 10, ivs);
        REQUIRE(runs.size() == 3);

        const auto full = train(cfg).logs;
        const std::vector<StepLog> tail(full.begin() + 10, full.end());
        CHECK(logs_identical(runs[0].logs, tail));
        CHECK(!logs_identical(runs[1].logs, tail));
        CHECK(!logs_identical(runs[1].logs, runs[2].logs));
    }

    TEST_CASE("temperature scenario: batch scaling is reflected in the logs") {
        TrainConfig cfg = tiny_config();
        const std::vector<Intervention> ivs = {{Intervention::Kind::ScaleBatch, 2.0}};
        const auto runs = temperature_scenario(cfg, 5, ivs);
        REQUIRE(runs.size() == 1);
        for (const StepLog& log : runs[0].logs) CHECK(log.batch_size == 8);

        const std::vector<Intervention> bad = {{Intervention::Kind::ScaleLr, -1.0}};
        CHECK_THROWS_AS(temperature_scenario(cfg, 5, bad), std::invalid_argument);
        const std::vector<Intervention> ok = {{Intervention::Kind::ScaleLr, 1.0}};
        CHECK_THROWS_AS(temperature_scenario(cfg, 10000, ok), std::invalid_argument);
    }

    TEST_CASE("diverged loss raises the guard") {
        TrainConfig cfg = tiny_config();
        cfg.optimizer.kind = OptimizerKind::Sgd;
        cfg.learning_rate = 1e12;
        cfg.total_tokens = 4 * 4 * 200;
        Trainer t(cfg);
        CHECK_THROWS_AS(
            [&] {
                while (!t.done()) t.step();
            }(),
            TrainingDiverged);
    }

    TEST_CASE("tokens_saved: identical series yield zeros") {
        std::vector<LossPoint> base;
        for (int i = 1; i <= 50; ++i) base.push_back({100.0 * i, 3.0 - 0.05 * i + 0.3 * std::sin(i * 0.9)});
        const auto saved = tokens_saved(base, base);
        CHECK(!saved.empty());
        for (const auto& p : saved) CHECK(p.tokens_saved == 0.0);
    }

    TEST_CASE("tokens_saved: constant shift is recovered") {
        std::vector<LossPoint> base, cand;
        for (int i = 1; i <= 50; ++i) {
            const double loss = 3.0 - 0.05 * i;
            base.push_back({100.0 * i, loss});
            cand.push_back({100.0 * i - 100.0, loss});
        }
        const auto saved = tokens_saved(base, cand);
        CHECK(!saved.empty());
        for (const auto& p : saved) CHECK(p.tokens_saved == doctest::Approx(100.0).epsilon(1e-12));
    }

    TEST_CASE("tokens_saved: hand interpolation example") {
        const std::vector<LossPoint> base = {{100.0, 2.0}, {200.0, 1.0}};
        const std::vector<LossPoint> cand = {{50.0, 2.0}, {150.0, 1.0}};
        const auto saved = tokens_saved(base, cand);
        REQUIRE(saved.size() == 2);
        CHECK(saved[0].tokens_saved == 50.0);
        CHECK(saved[1].tokens_saved == 50.0);

        const std::vector<LossPoint> low = {{10.0, 0.5}, {20.0, 0.2}};
        CHECK_THROWS_AS(tokens_saved(base, low), std::runtime_error);
    }

    TEST_CASE("ema smoothing and envelope behave") {
        const std::vector<LossPoint> raw = {{1, 5.0}, {2, 4.0}, {3, 4.5}, {4, 3.0}, {5, 3.5}};
        const auto smooth = ema_smooth_losses(raw, 1.0);
        REQUIRE(smooth.size() == raw.size());
        CHECK(smooth[2].loss == 4.5);
        const auto env = running_min_envelope(smooth);
        REQUIRE(env.size() == 3);
        CHECK(env[0].loss == 5.0);
        CHECK(env[1].loss == 4.0);
        CHECK(env[2].loss == 3.0);
        CHECK(tokens_to_reach(raw, 4.0) == 2.0);
        // halfway between the (2, 4.0) and (4, 3.0) envelope points
        CHECK(tokens_to_reach(raw, 3.5) == doctest::Approx(3.0).epsilon(1e-12));
        CHECK_THROWS_AS(tokens_to_reach(raw, 0.5), std::runtime_error);
    }

    TEST_CASE("cosine lr schedule: min_ratio 1 degenerates to constant") {
        TrainConfig constant = tiny_config();
        TrainConfig flat_cosine = constant;
        flat_cosine.lr_schedule = {LrScheduleKind::Cosine, 1.0};
        CHECK(logs_identical(train(constant).logs, train(flat_cosine).logs));

        TrainConfig decays = constant;
        decays.lr_schedule = {LrScheduleKind::Cosine, 0.0};
        CHECK(!logs_identical(train(constant).logs, train(decays).logs));
    }

    TEST_CASE("microbatch and subbatch training runs produce sensible stats") {
        TrainConfig cfg = tiny_config();
        cfg.estimation_mode = {EstimationKind::Microbatch, 2, 1};
        const auto mb = train(cfg).logs;
        for (const StepLog& log : mb) {
            CHECK(std::isfinite(log.total.g2_raw));
            CHECK(std::isfinite(log.total.s_raw));
        }
        cfg.estimation_mode = {EstimationKind::Subbatch, 2, 1};
        const auto sub = train(cfg).logs;
        CHECK(sub.size() == mb.size());

        cfg.estimation_mode = {EstimationKind::Microbatch, 3, 1};
        CHECK_THROWS_AS(train(cfg), std::invalid_argument);  // 4 % 3 != 0
    }
}
