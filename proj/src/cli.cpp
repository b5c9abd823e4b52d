#include "stomax/cli.hpp"

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stomax/config.hpp"
#include "stomax/report.hpp"

namespace stomax {

namespace {

struct CommonArgs {
    std::string config;
    std::vector<std::string> sets;
    std::uint64_t seed{0};
    int threads{0};
    std::string out;
};

void add_common_options(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config, "JSON configuration file")
        ->required();
    sub->add_option("--seed", args.seed, "Master seed override");
    sub->add_option("--threads", args.threads, "Worker thread count override");
    sub->add_option("--out", args.out, "Output directory override");
    sub->add_option("--set", args.sets,
                    "Dotted-path config overrides, e.g. model.drift=zero");
}

RunConfig resolve(RunKind kind, const CLI::App* sub, const CommonArgs& args) {
    RunConfig cfg = load_config_file(kind, args.config, args.sets);
    if (sub->count("--seed") > 0) cfg.seed = args.seed;
    if (sub->count("--threads") > 0) cfg.threads = args.threads;
    if (sub->count("--out") > 0) cfg.output_dir = args.out;
    cfg.sync_shared();
    cfg.validate();
    return cfg;
}

int run_convergence(const RunConfig& cfg) {
    const ConvergenceReport report = run_strong_convergence(cfg.convergence);
    const std::string summary = convergence_summary(cfg, report);
    write_text_file(cfg.output_dir, "convergence.csv", convergence_csv(report));
    write_text_file(cfg.output_dir, "summary.txt", summary);
    write_text_file(cfg.output_dir, "resolved_config.json", config_to_json(cfg));
    std::cout << summary;
    return 0;
}

int run_trace(const RunConfig& cfg) {
    const TraceReport report = run_trace_formula(cfg.trace);
    const std::string summary = trace_summary(cfg, report);
    write_text_file(cfg.output_dir, "trace.csv", trace_csv(report));
    write_text_file(cfg.output_dir, "summary.txt", summary);
    write_text_file(cfg.output_dir, "resolved_config.json", config_to_json(cfg));
    std::cout << summary;
    return 0;
}

int run_divergence_cmd(const RunConfig& cfg) {
    const DivergenceReport report = run_divergence(cfg.trace);
    const std::string summary = divergence_summary(cfg, report);
    write_text_file(cfg.output_dir, "divergence.csv", divergence_csv(report));
    write_text_file(cfg.output_dir, "summary.txt", summary);
    write_text_file(cfg.output_dir, "resolved_config.json", config_to_json(cfg));
    std::cout << summary;
    return 0;
}

int run_check(const RunConfig& cfg) {
    const std::vector<CheckResult> results =
        run_structural_checks(cfg.grid, cfg.noise, cfg.seed);
    for (const CheckResult& r : results) {
        std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name
                  << " (observed " << csv_number(r.observed) << ", limit "
                  << csv_number(r.limit) << ")\n";
    }
    return all_passed(results) ? 0 : 1;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Monte Carlo studies of time integrators for the stochastic "
                 "Maxwell system on a staggered grid"};
    app.require_subcommand(1);
    CommonArgs args;

    CLI::App* convergence = app.add_subcommand(
        "convergence", "Strong temporal convergence study");
    CLI::App* trace = app.add_subcommand(
        "trace", "Mean-energy drift against the exact linear law");
    CLI::App* divergence = app.add_subcommand(
        "divergence", "Averaged divergence preservation study");
    CLI::App* check = app.add_subcommand(
        "check", "Structural invariants of the discretization");
    for (CLI::App* sub : {convergence, trace, divergence, check}) {
        add_common_options(sub, args);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (convergence->parsed()) {
            return run_convergence(resolve(RunKind::Convergence, convergence, args));
        }
        if (trace->parsed()) {
            return run_trace(resolve(RunKind::Trace, trace, args));
        }
        if (divergence->parsed()) {
            return run_divergence_cmd(resolve(RunKind::Divergence, divergence, args));
        }
        if (check->parsed()) {
            return run_check(resolve(RunKind::Check, check, args));
        }
        std::cerr << "error: no subcommand selected\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace stomax
