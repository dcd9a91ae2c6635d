#include "gnstk/cli.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <stdexcept>

namespace gnstk {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::invalid_argument("cli: " + msg);
}

void ensure_dir(const fs::path& dir) {
    if (!dir.empty()) fs::create_directories(dir);
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cli: cannot write " + path.string());
    return out;
}

double parse_double_cell(const std::string& cell, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(std::string("cli: bad ") + what + " value '" + cell + "'");
    }
}

}  // namespace

void write_wide_log(const fs::path& path, std::span<const StepLog> logs) {
    auto out = open_out(path);
    CsvWriter csv(out);
    std::vector<std::string> header = {"step", "tokens", "batch_size", "loss"};
    for (const char* group : {"total", "embedding", "linear", "layernorm"})
        for (const char* col : {"g2_raw", "s_raw", "gns_ema"})
            header.push_back(std::string(group) + "_" + col);
    csv.row(header);
    for (const StepLog& log : logs) {
        std::vector<std::string> row = {format_int(log.step), format_int(log.tokens), format_int(log.batch_size),
                                        format_double(log.loss)};
        for (const GroupLog* g : {&log.total, &log.embedding, &log.linear, &log.layernorm}) {
            row.push_back(format_double(g->g2_raw));
            row.push_back(format_double(g->s_raw));
            row.push_back(g->gns_defined ? format_double(g->gns_ema) : "nan");
        }
        csv.row(row);
    }
}

void write_layer_log(const fs::path& path, std::span<const StepLog> logs) {
    auto out = open_out(path);
    CsvWriter csv(out);
    csv.row({"step", "layer", "layer_type", "g2_raw", "s_raw"});
    for (const StepLog& log : logs)
        for (const PerLayerLog& l : log.layers)
            csv.row({format_int(log.step), l.name, layer_type_name(l.type), format_double(l.g2_raw),
                     format_double(l.s_raw)});
}

LayerLogSeries layer_series_from_csv(const CsvTable& table) {
    auto step_col = table.column("step");
    auto type_col = table.column("layer_type");
    auto g2_col = table.column("g2_raw");
    auto s_col = table.column("s_raw");
    if (!step_col || !type_col || !g2_col || !s_col)
        throw std::runtime_error("cli: layer log is missing required columns (step, layer_type, g2_raw, s_raw)");

    LayerLogSeries series;
    std::map<std::string, std::int64_t> step_index;  // step cell -> series position
    std::size_t n_steps = 0;
    auto extend = [&](GnsSeries& s) {
        s.g2.resize(n_steps, 0.0);
        s.s.resize(n_steps, 0.0);
    };
    for (const auto& row : table.rows) {
        const std::string& step = row[*step_col];
        if (!step_index.contains(step)) {
            step_index[step] = static_cast<std::int64_t>(n_steps);
            ++n_steps;
            extend(series.total);
            for (auto& [type, s] : series.per_type) extend(s);
        }
        const auto idx = static_cast<std::size_t>(step_index[step]);
        const std::string& type_name = row[*type_col];
        LayerType type;
        if (type_name == "embedding")
            type = LayerType::Embedding;
        else if (type_name == "linear")
            type = LayerType::Linear;
        else if (type_name == "layernorm")
            type = LayerType::LayerNorm;
        else
            throw std::runtime_error("cli: unknown layer_type '" + type_name + "'");
        GnsSeries& type_series = series.per_type[type];  // created on first sight
        extend(type_series);
        const double g2 = parse_double_cell(row[*g2_col], "g2_raw");
        const double s = parse_double_cell(row[*s_col], "s_raw");
        // raw estimators are linear in the squared norms, so per-layer values
        // sum to the group and total values
        series.total.g2[idx] += g2;
        series.total.s[idx] += s;
        type_series.g2[idx] += g2;
        type_series.s[idx] += s;
    }
    return series;
}

std::vector<Index> parse_index_range(const std::string& text) {
    auto parse_one = [](const std::string& part) -> Index {
        Index v = 0;
        auto res = std::from_chars(part.data(), part.data() + part.size(), v);
        if (res.ec != std::errc{} || res.ptr != part.data() + part.size())
            fail("malformed range component '" + part + "'");
        return v;
    };
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
        auto dots = text.find("..", pos);
        if (dots == std::string::npos) {
            parts.push_back(text.substr(pos));
            break;
        }
        parts.push_back(text.substr(pos, dots - pos));
        pos = dots + 2;
    }
    if (parts.size() > 3) fail("malformed range '" + text + "'");
    const Index start = parse_one(parts[0]);
    if (start < 1) fail("range values must be >= 1");
    if (parts.size() == 1) return {start};
    const Index stop = parse_one(parts[1]);
    const Index step = parts.size() == 3 ? parse_one(parts[2]) : 1;
    if (stop < start) fail("range stop must be >= start");
    if (step < 1) fail("range step must be >= 1");
    std::vector<Index> values;
    for (Index v = start; v <= stop; v += step) values.push_back(v);
    return values;
}

void run_simulate(const SimulateOptions& opts) {
    if (opts.b_big.empty() || opts.b_small.empty()) fail("need at least one b_big and one b_small");
    if (opts.seeds.empty()) fail("need at least one seed");
    if (opts.trials < 1) fail("trials must be >= 1");
    ensure_dir(opts.out);

    std::vector<SimConfig> cfgs;
    for (Index bb : opts.b_big)
        for (Index bs : opts.b_small)
            for (std::uint64_t seed : opts.seeds)
                cfgs.push_back(make_sim_config(opts.dim, opts.gns_target, bb, bs, 0, seed));

    std::vector<VarianceRow> rows = variance_study(cfgs, opts.trials);

    auto out = open_out(opts.out / "variance_study.csv");
    CsvWriter csv(out);
    csv.row({"b_big", "b_small", "trials", "gns_hat", "stderr", "seed"});
    for (const VarianceRow& r : rows)
        csv.row({format_int(r.b_big), format_int(r.b_small), format_int(r.trials), format_double(r.gns_hat),
                 format_double(r.std_error), format_int(static_cast<std::int64_t>(r.seed))});
}

void run_cost(const CostOptions& opts) {
    const std::vector<Index> ts = parse_index_range(opts.t_range);
    if (opts.b < 1 || opts.k < 1 || opts.l < 1) fail("dims must be >= 1");
    if (opts.bytes_per_value < 1) fail("bytes must be >= 1");
    ensure_dir(opts.out);

    std::vector<CostShape> shapes;
    shapes.reserve(ts.size());
    for (Index t : ts) shapes.push_back({opts.b, t, opts.k, opts.l, opts.bytes_per_value});
    std::vector<SweepRow> rows = sweep(shapes);

    {
        auto out = open_out(opts.out / "cost_sweep.csv");
        CsvWriter csv(out);
        csv.row({"method", "b", "t", "k", "l", "flops_wg", "flops_norms", "io_wg", "io_norms",
                 "ratio_vs_frobenius"});
        for (const SweepRow& r : rows)
            csv.row({cost_method_name(r.method), format_int(r.b), format_int(r.t), format_int(r.k), format_int(r.l),
                     format_int(r.flops_wg), format_int(r.flops_norms), format_int(r.io_wg), format_int(r.io_norms),
                     format_double(r.ratio_vs_frobenius)});
    }

    const double t_io = crossover_t(opts.k, opts.l, CostCriterion::IO);
    const double t_flops = crossover_t(opts.k, opts.l, CostCriterion::FLOPS);
    std::string report = "crossover sequence length for K=" + format_int(opts.k) + " L=" + format_int(opts.l) +
                         " (simultaneous becomes cheaper above T):\n" + "  io crossover T = " + format_double(t_io) +
                         "\n" + "  flops crossover T = " + format_double(t_flops) + "\n";
    if (ts.size() == 1) {
        const CostShape shape = shapes[0];
        report += "shape B=" + format_int(shape.b) + " T=" + format_int(shape.t) + " K=" + format_int(shape.k) +
                  " L=" + format_int(shape.l) + " (" + format_int(shape.bytes_per_value) + " bytes/value):\n";
        for (CostMethod m : {CostMethod::Simultaneous, CostMethod::Frobenius}) {
            const CostPair f = flops(shape, m);
            const CostPair io = io_values(shape, m);
            report += "  " + cost_method_name(m) + ": flops_wg=" + format_int(f.weight_grad) +
                      " flops_norms=" + format_int(f.grad_norms) + " io_wg=" + format_int(io.weight_grad) +
                      " io_norms=" + format_int(io.grad_norms) + "\n";
        }
        report += "  layernorm-only norm io=" + format_int(layernorm_norms_io_values(shape)) +
                  " values (K-width layer at the same shape)\n";
    }
    auto out = open_out(opts.out / "crossover.txt");
    out << report;
    std::cout << report;
}

namespace {

std::vector<StepLog> run_one(TrainConfig cfg, std::uint64_t seed) {
    cfg.seed = seed;
    return train(cfg).logs;
}

std::vector<LossPoint> loss_points(std::span<const StepLog> logs) {
    std::vector<LossPoint> pts;
    pts.reserve(logs.size());
    for (const StepLog& log : logs) pts.push_back({static_cast<double>(log.tokens), log.loss});
    return pts;
}

void write_tokens_saved(const fs::path& path, std::span<const TokensSavedPoint> pts) {
    auto out = open_out(path);
    CsvWriter csv(out);
    csv.row({"loss", "tokens_saved"});
    for (const TokensSavedPoint& p : pts) csv.row({format_double(p.loss_level), format_double(p.tokens_saved)});
}

}  // namespace

void run_train(const TrainOptions& opts) {
    if (opts.seeds.empty()) fail("need at least one seed");
    const TrainConfig cfg = load_config_file(opts.config);
    ensure_dir(opts.out);
    for (std::uint64_t seed : opts.seeds) {
        const std::vector<StepLog> logs = run_one(cfg, seed);
        const std::string stem = "train_seed" + std::to_string(seed);
        write_wide_log(opts.out / (stem + ".csv"), logs);
        write_layer_log(opts.out / (stem + "_layers.csv"), logs);
    }
}

ScheduleCompareSummary run_schedule_compare(const ScheduleCompareOptions& opts) {
    if (opts.seeds.empty()) fail("need at least one seed");
    const TrainConfig base_cfg = load_config_file(opts.baseline);
    const TrainConfig cand_cfg = load_config_file(opts.candidate);
    ensure_dir(opts.out);

    ScheduleCompareSummary summary;
    struct SeedSeries {
        std::vector<LossPoint> base, cand;
    };
    std::vector<SeedSeries> smoothed;

    for (std::uint64_t seed : opts.seeds) {
        const std::vector<StepLog> base_logs = run_one(base_cfg, seed);
        const std::vector<StepLog> cand_logs = run_one(cand_cfg, seed);
        const std::string tag = "_seed" + std::to_string(seed);
        write_wide_log(opts.out / ("baseline" + tag + ".csv"), base_logs);
        write_layer_log(opts.out / ("baseline" + tag + "_layers.csv"), base_logs);
        write_wide_log(opts.out / ("candidate" + tag + ".csv"), cand_logs);
        write_layer_log(opts.out / ("candidate" + tag + "_layers.csv"), cand_logs);

        SeedSeries s;
        s.base = ema_smooth_losses(loss_points(base_logs), opts.loss_ema_alpha);
        s.cand = ema_smooth_losses(loss_points(cand_logs), opts.loss_ema_alpha);
        const std::vector<TokensSavedPoint> saved = tokens_saved(s.base, s.cand);
        write_tokens_saved(opts.out / ("tokens_saved" + tag + ".csv"), saved);

        // savings at the baseline's final achieved loss level; nan when the
        // candidate never gets there
        const std::vector<LossPoint> be = running_min_envelope(s.base);
        const double final_level = be.back().loss;
        double fraction = std::numeric_limits<double>::quiet_NaN();
        try {
            fraction = (be.back().tokens - tokens_to_reach(s.cand, final_level)) / be.back().tokens;
        } catch (const std::runtime_error&) {
        }
        summary.final_savings_fraction.push_back(fraction);
        smoothed.push_back(std::move(s));
    }

    double mean = 0.0;
    for (double f : summary.final_savings_fraction) mean += f;
    summary.mean_final_savings_fraction = mean / static_cast<double>(summary.final_savings_fraction.size());

    // seed-mean savings over a loss grid common to every run
    double hi = 1e300, lo = -1e300;
    for (const SeedSeries& s : smoothed) {
        const auto be = running_min_envelope(s.base);
        const auto ce = running_min_envelope(s.cand);
        hi = std::min({hi, be.front().loss, ce.front().loss});
        lo = std::max({lo, be.back().loss, ce.back().loss});
    }
    std::vector<TokensSavedPoint> mean_rows;
    if (hi > lo) {
        const int grid = 50;
        for (int i = 0; i < grid; ++i) {
            const double level = hi + (lo - hi) * static_cast<double>(i) / static_cast<double>(grid - 1);
            double acc = 0.0;
            for (const SeedSeries& s : smoothed)
                acc += tokens_to_reach(s.base, level) - tokens_to_reach(s.cand, level);
            mean_rows.push_back({level, acc / static_cast<double>(smoothed.size())});
        }
    }
    write_tokens_saved(opts.out / "tokens_saved_mean.csv", mean_rows);
    return summary;
}

void run_analyze(const AnalyzeOptions& opts) {
    if (opts.alphas.empty()) fail("need at least one alpha");
    for (double a : opts.alphas)
        if (!(a > 0.0) || a > 1.0) fail("alphas must be in (0, 1]");

    fs::path log_file = opts.logs;
    if (fs::is_directory(log_file)) {
        std::vector<fs::path> matches;
        for (const auto& entry : fs::directory_iterator(log_file)) {
            const std::string name = entry.path().filename().string();
            if (name.size() > 11 && name.ends_with("_layers.csv")) matches.push_back(entry.path());
        }
        std::sort(matches.begin(), matches.end());
        if (matches.empty()) throw std::runtime_error("cli: no *_layers.csv found in " + log_file.string());
        if (matches.size() > 1)
            throw std::runtime_error("cli: multiple *_layers.csv files in " + log_file.string() +
                                     "; pass one explicitly");
        log_file = matches.front();
    }

    const CsvTable table = read_csv_file(log_file);
    const LayerLogSeries series = layer_series_from_csv(table);
    const std::vector<RegressionRow> rows = regress_layer_gns(series.total, series.per_type, opts.alphas);

    ensure_dir(opts.out);
    auto out = open_out(opts.out / "regression.csv");
    CsvWriter csv(out);
    csv.row({"layer_type", "alpha", "slope", "pearson_r"});
    for (const RegressionRow& r : rows)
        csv.row({layer_type_name(r.type), format_double(r.alpha),
                 r.slope_defined ? format_double(r.slope) : "nan", r.r_defined ? format_double(r.pearson_r) : "nan"});
}

}  // namespace gnstk
