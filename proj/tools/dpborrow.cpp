#include "dpborrow/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Dynamic borrowing of historical controls with Dirichlet process mixtures"};
    app.require_subcommand(1);
    app.set_version_flag("--version", DPBORROW_VERSION);

    std::string data_path, columns_path;
    auto* validate = app.add_subcommand("validate", "Check a dataset and print a summary");
    validate->add_option("data", data_path, "Summary JSON or participant CSV")->required();
    validate->add_option("--columns", columns_path, "Column map JSON for CSV input");

    dpborrow::AnalyzeArgs an;
    std::string config_path, an_out = "out";
    std::optional<int> iters, burn_in, thin;
    std::optional<std::size_t> comparator_draws;
    std::optional<double> threshold;
    auto* analyze = app.add_subcommand("analyze", "Fit the selected methods to one dataset");
    analyze->add_option("data", data_path, "Summary JSON or participant CSV")->required();
    analyze->add_option("--config", config_path, "Analysis config JSON");
    analyze->add_option("--columns", columns_path, "Column map JSON for CSV input");
    analyze->add_option("--methods", an.methods, "Comma-separated subset of cd,pd,dpm,ddpm");
    analyze->add_option("--seed", an.seed, "Master seed");
    analyze->add_option("--out", an_out, "Output directory");
    analyze->add_option("--iters", iters);
    analyze->add_option("--burn_in", burn_in);
    analyze->add_option("--thin", thin);
    analyze->add_option("--comparator_draws", comparator_draws);
    analyze->add_option("--threshold", threshold);

    dpborrow::SimulateArgs sim;
    std::string plan_path, sim_out = "out";
    int threads = 0;
    auto* simulate = app.add_subcommand("simulate", "Run a simulation plan and tabulate operating characteristics");
    simulate->add_option("--plan", plan_path, "Plan JSON")->required();
    simulate->add_option("--seed", sim.seed, "Master seed");
    simulate->add_option("--out", sim_out, "Output directory");
    simulate->add_option("--threads", threads, "Worker threads (default: available parallelism)");
    simulate->add_flag("--full-scale", sim.full_scale, "Use 10000 binomial / 2000 IPD replicates per cell");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : dpborrow::exit_input;
    }

    std::optional<std::filesystem::path> columns;
    if (!columns_path.empty()) columns = columns_path;

    if (*validate) return dpborrow::cmd_validate(data_path, columns, std::cout, std::cerr);

    if (*analyze) {
        an.data = data_path;
        an.columns = columns;
        an.out = an_out;
        if (!config_path.empty()) an.config = config_path;
        if (iters) an.overrides["iters"] = *iters;
        if (burn_in) an.overrides["burn_in"] = *burn_in;
        if (thin) an.overrides["thin"] = *thin;
        if (comparator_draws) an.overrides["comparator_draws"] = *comparator_draws;
        if (threshold) an.overrides["threshold"] = *threshold;
        return dpborrow::cmd_analyze(an, std::cout, std::cerr);
    }

    sim.plan = plan_path;
    sim.out = sim_out;
    if (threads > 0) sim.threads = threads;
    return dpborrow::cmd_simulate(sim, std::cout, std::cerr);
}
