#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gnstk/cli.hpp"

namespace {

// validates "a", "a..b" or "a..b..step" with values >= 1
std::string check_range(const std::string& text) {
    try {
        gnstk::parse_index_range(text);
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gradient noise scale toolkit: estimators, simulation, cost model and a toy training loop"};
    app.require_subcommand(1);

    gnstk::SimulateOptions sim;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "Monte-Carlo study of GNS estimator variance");
    sim_cmd->add_option("--b-big", sim.b_big, "large batch sizes (comma list)")->required()->delimiter(',');
    sim_cmd->add_option("--b-small", sim.b_small, "small batch sizes (comma list)")->required()->delimiter(',');
    sim_cmd->add_option("--gns-target", sim.gns_target, "true tr(Sigma)/||G||^2")->check(CLI::NonNegativeNumber);
    sim_cmd->add_option("--dim", sim.dim, "gradient dimension")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--trials", sim.trials, "per-example draws consumed by every config")
        ->required()
        ->check(CLI::PositiveNumber);
    sim_cmd->add_option("--seed", sim.seeds, "stream seeds (comma list)")->required()->delimiter(',');
    sim_cmd->add_option("--out", sim.out, "output directory");

    gnstk::CostOptions cost;
    CLI::App* cost_cmd = app.add_subcommand("cost", "closed-form FLOP/IO accounting and crossover points");
    cost_cmd->add_option("--b", cost.b, "batch size")->check(CLI::PositiveNumber);
    cost_cmd->add_option("--t", cost.t_range, "sequence length or range start..stop[..step]")
        ->required()
        ->check(CLI::Validator(check_range, "RANGE"));
    cost_cmd->add_option("--k", cost.k, "input dimension")->required()->check(CLI::PositiveNumber);
    cost_cmd->add_option("--l", cost.l, "output dimension")->required()->check(CLI::PositiveNumber);
    cost_cmd->add_option("--bytes", cost.bytes_per_value, "bytes per value")->check(CLI::PositiveNumber);
    cost_cmd->add_option("--out", cost.out, "output directory");

    gnstk::TrainOptions train;
    CLI::App* train_cmd = app.add_subcommand("train", "train the toy model and log GNS series");
    train_cmd->add_option("--config", train.config, "JSON config path")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--seeds", train.seeds, "seeds, one run each (comma list)")->required()->delimiter(',');
    train_cmd->add_option("--out", train.out, "output directory");

    gnstk::ScheduleCompareOptions cmp;
    CLI::App* cmp_cmd = app.add_subcommand("schedule-compare", "fixed-vs-ramp batch schedule comparison");
    cmp_cmd->add_option("--baseline", cmp.baseline, "baseline config (fixed arm)")->required()->check(CLI::ExistingFile);
    cmp_cmd->add_option("--candidate", cmp.candidate, "candidate config (schedule arm)")
        ->required()
        ->check(CLI::ExistingFile);
    cmp_cmd->add_option("--seeds", cmp.seeds, "seeds (comma list)")->required()->delimiter(',');
    cmp_cmd->add_option("--out", cmp.out, "output directory");

    gnstk::AnalyzeOptions ana;
    CLI::App* ana_cmd = app.add_subcommand("analyze", "regress total GNS against per-type GNS across EMA alphas");
    ana_cmd->add_option("--logs", ana.logs, "per-layer log CSV (or directory with one)")
        ->required()
        ->check(CLI::ExistingPath);
    ana_cmd->add_option("--alphas", ana.alphas, "EMA alphas (comma list)")->required()->delimiter(',');
    ana_cmd->add_option("--out", ana.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (sim_cmd->parsed()) gnstk::run_simulate(sim);
        if (cost_cmd->parsed()) gnstk::run_cost(cost);
        if (train_cmd->parsed()) gnstk::run_train(train);
        if (cmp_cmd->parsed()) {
            const gnstk::ScheduleCompareSummary summary = gnstk::run_schedule_compare(cmp);
            std::cout << "mean tokens saved at the baseline's final loss: "
                      << gnstk::format_double(summary.mean_final_savings_fraction * 100.0) << "%\n";
        }
        if (ana_cmd->parsed()) gnstk::run_analyze(ana);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
