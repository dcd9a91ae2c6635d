#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gnstk/dataset.hpp"
#include "gnstk/gns.hpp"
#include "gnstk/model.hpp"

namespace gnstk {

enum class ScheduleKind { Fixed, LinearRamp };

struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::Fixed;
    Index b = 1;  // Fixed
    Index b_start = 1;
    Index b_end = 1;
    std::int64_t ramp_tokens = 1;  // LinearRamp
};

/// Batch size at a token count: Fixed(B) is constant; LinearRamp interpolates
/// round(b_start + (b_end - b_start) * min(tokens/ramp_tokens, 1)), with
/// round-half-up and a floor of 1.
Index scheduled_batch(const ScheduleSpec& spec, std::int64_t tokens_processed);

enum class EstimationKind { PerExample, Microbatch, Subbatch };

struct EstimationMode {
    EstimationKind kind = EstimationKind::PerExample;
    Index m = 1;  // number of gradient-accumulation microbatches
    Index j = 1;  // Subbatch: capture the running mean after j microbatches
};

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

enum class LrScheduleKind { Constant, Cosine };

struct LrSchedule {
    LrScheduleKind kind = LrScheduleKind::Constant;
    double min_ratio = 0.1;  // Cosine: final lr as a fraction of the base lr
};

struct TrainConfig {
    Index vocab = 16;
    Index model_dim = 32;
    Index hidden_multiplier = 2;
    Index n_blocks = 2;
    Index seq_len = 16;
    std::int64_t total_tokens = 1 << 18;
    OptimizerConfig optimizer;
    double learning_rate = 3e-3;
    LrSchedule lr_schedule;
    ScheduleSpec batch_schedule;
    EstimationMode estimation_mode;
    double ema_alpha = 0.02;
    std::uint64_t seed = 1;
    double loss_scale = 1.0;  // multiplies the loss; handy for scale checks
};

void validate(const TrainConfig& cfg);

TrainConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const TrainConfig& cfg);
TrainConfig load_config_file(const std::filesystem::path& path);

struct GroupLog {
    double g2_raw = 0.0;
    double s_raw = 0.0;
    double gns_ema = 0.0;
    bool gns_defined = false;
};

struct PerLayerLog {
    std::string name;
    LayerType type = LayerType::Linear;
    double g2_raw = 0.0;
    double s_raw = 0.0;
};

struct StepLog {
    std::int64_t step = 0;
    std::int64_t tokens = 0;  // processed including this step
    Index batch_size = 0;
    double loss = 0.0;
    GroupLog total, embedding, linear, layernorm;
    std::vector<PerLayerLog> layers;
};

struct TrainingDiverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Deterministic training loop; copying a Trainer snapshots its full state
/// (model, optimizer, data stream, smoothing).
class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg);

    bool done() const { return tokens_ >= cfg_.total_tokens; }
    StepLog step();
    std::vector<StepLog> run();

    std::int64_t step_index() const { return step_; }
    std::int64_t tokens_processed() const { return tokens_; }
    const TrainConfig& config() const { return cfg_; }
    ToyModel& model() { return model_; }
    const ToyModel& model() const { return model_; }

    void scale_learning_rate(double factor);
    void scale_batch_schedule(double factor);

private:
    TrainConfig cfg_;
    ToyModel model_;
    MarkovDataset data_;
    std::int64_t step_ = 0;
    std::int64_t tokens_ = 0;

    struct AdamSlot {
        std::vector<double> m, v;
    };
    std::map<std::string, AdamSlot> adam_state_;
    std::int64_t adam_t_ = 0;

    struct GroupEma {
        EmaState g2, s;
    };
    std::array<GroupEma, 4> ema_;  // total, embedding, linear, layernorm

    double current_lr() const;
    void apply_update(std::map<LayerKey, LayerGradOutput>& grads, double lr);
};

struct TrainResult {
    std::vector<StepLog> logs;
    ToyModel model;
};

TrainResult train(const TrainConfig& cfg);

/// GradStats from materialized per-microbatch mean gradients (each at its own
/// scale, i.e. the gradient of that microbatch's mean loss).
GradStats capture_mode_norms(const EstimationMode& mode, std::span<const Tensor> per_microbatch_grads,
                             Index batch_size);

struct Intervention {
    enum class Kind { ScaleLr, ScaleBatch };
    Kind kind = Kind::ScaleLr;
    double factor = 1.0;

    std::string label() const;
};

struct ScenarioRun {
    Intervention intervention;
    std::vector<StepLog> logs;  // from the checkpoint to the end of the budget
};

/// Trains to checkpoint_step, snapshots, then continues one cloned run per
/// intervention with the learning rate or batch schedule scaled.
std::vector<ScenarioRun> temperature_scenario(const TrainConfig& cfg, std::int64_t checkpoint_step,
                                              std::span<const Intervention> interventions);

struct LossPoint {
    double tokens = 0.0;
    double loss = 0.0;
};

std::vector<LossPoint> ema_smooth_losses(std::span<const LossPoint> series, double alpha);

/// Strictly improving running-minimum envelope (keeps the first point and
/// every point that lowers the best loss seen).
std::vector<LossPoint> running_min_envelope(std::span<const LossPoint> series);

struct TokensSavedPoint {
    double loss_level = 0.0;
    double tokens_saved = 0.0;
};

/// For each loss level the baseline envelope achieves, the difference between
/// the baseline's tokens and the candidate's interpolated tokens-to-reach.
/// Levels outside the candidate's achieved range are omitted; pass smoothed
/// series (see ema_smooth_losses).
std::vector<TokensSavedPoint> tokens_saved(std::span<const LossPoint> baseline, std::span<const LossPoint> candidate);

/// Interpolated token count at which the series' running-min envelope first
/// reaches `level`; errors when the level lies outside the achieved range.
double tokens_to_reach(std::span<const LossPoint> series, double level);

}  // namespace gnstk
