#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gnstk/costmodel.hpp"
#include "gnstk/csv.hpp"
#include "gnstk/simulator.hpp"
#include "gnstk/trainer.hpp"

namespace gnstk {

// Step-log files: a wide per-step CSV (loss plus per-group estimator columns)
// and a long per-layer CSV.
void write_wide_log(const std::filesystem::path& path, std::span<const StepLog> logs);
void write_layer_log(const std::filesystem::path& path, std::span<const StepLog> logs);

/// Rebuilds the per-type and total raw estimator series from a long-format
/// per-layer CSV (columns step,layer,layer_type,g2_raw,s_raw).
struct LayerLogSeries {
    GnsSeries total;
    std::map<LayerType, GnsSeries> per_type;
};
LayerLogSeries layer_series_from_csv(const CsvTable& table);

/// "a", "a..b" or "a..b..step" into an inclusive list of values.
std::vector<Index> parse_index_range(const std::string& text);

struct SimulateOptions {
    std::vector<Index> b_big;
    std::vector<Index> b_small;
    double gns_target = 1.0;
    Index dim = 100;
    std::int64_t trials = 0;  // per-example draws consumed by every config
    std::vector<std::uint64_t> seeds;
    std::filesystem::path out = ".";
};

/// Writes <out>/variance_study.csv, one row per (b_big, b_small, seed).
void run_simulate(const SimulateOptions& opts);

struct CostOptions {
    Index b = 1;
    std::string t_range = "1";
    Index k = 1;
    Index l = 1;
    Index bytes_per_value = 4;
    std::filesystem::path out = ".";
};

/// Writes <out>/cost_sweep.csv and <out>/crossover.txt; echoes the report
/// (and, for a single-T query, the closed-form numbers) to stdout.
void run_cost(const CostOptions& opts);

struct TrainOptions {
    std::filesystem::path config;
    std::vector<std::uint64_t> seeds;
    std::filesystem::path out = ".";
};

/// One run per seed: <out>/train_seed<k>.csv and <out>/train_seed<k>_layers.csv.
void run_train(const TrainOptions& opts);

struct ScheduleCompareOptions {
    std::filesystem::path baseline;
    std::filesystem::path candidate;
    std::vector<std::uint64_t> seeds;
    std::filesystem::path out = ".";
    double loss_ema_alpha = 0.05;  // smoothing ahead of the envelope
};

struct ScheduleCompareSummary {
    // per seed: fraction of baseline tokens saved at the baseline's final
    // smoothed loss (negative when the candidate is slower)
    std::vector<double> final_savings_fraction;
    double mean_final_savings_fraction = 0.0;
};

/// Runs both arms per seed, writes per-run logs, a tokens_saved CSV per seed
/// and a seed-mean CSV over a common loss grid.
ScheduleCompareSummary run_schedule_compare(const ScheduleCompareOptions& opts);

struct AnalyzeOptions {
    std::filesystem::path logs;  // long-format CSV, or a directory holding exactly one *_layers.csv
    std::vector<double> alphas;
    std::filesystem::path out = ".";
};

/// Writes <out>/regression.csv with rows (layer_type, alpha, slope, pearson_r).
void run_analyze(const AnalyzeOptions& opts);

}  // namespace gnstk
