// Command-line driver for the hedging-error experiments.
//
//   hedgedisc <simulate|convergence|sharpe-sweep|frontier|riccati-check>
//             --config <path> [--seed <u64>] [--threads <n>] [--out <path>] [--format csv|json]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical abort.

#include <chrono>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"

#include "hedgedisc/harness.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kNumericalError = 3;

using Runner = std::function<hedgedisc::ResultTable(const hedgedisc::ExperimentConfig&, const hedgedisc::RunOptions&)>;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discretization error of delta hedging: Monte Carlo against the small-eps limit"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
    std::string out_path;
    std::string format;
    bool quiet = false;

    const std::map<std::string, std::pair<std::string, Runner>> commands{
        {"simulate", {"Per-path trades and scaled hedging error", hedgedisc::run_simulate}},
        {"convergence", {"Moments of eps^-1 Z against the limit moments", hedgedisc::run_convergence}},
        {"sharpe-sweep", {"Realized and analytic modified Sharpe ratio per lambda", hedgedisc::run_sharpe_sweep}},
        {"frontier", {"Expectation-error optimal rule along the efficient frontier", hedgedisc::run_frontier}},
        {"riccati-check", {"Closed-form Riccati solution against RK4 and the general LQ solver",
                           hedgedisc::run_riccati_check}},
    };
    for (const auto& [name, entry] : commands) {
        auto* sub = app.add_subcommand(name, entry.first);
        sub->add_option("--config", config_path, "Experiment configuration (JSON)")->required();
        sub->add_option("--seed", seed, "Master seed; overrides mc.seed");
        sub->add_option("--threads", threads, "Worker threads (output does not depend on it)")
            ->check(CLI::Range(1u, 1024u));
        sub->add_option("--out", out_path, "Output file; overrides output.path (default stdout)");
        sub->add_option("--format", format, "Output format; overrides output.format")
            ->check(CLI::IsMember({"csv", "json"}));
        sub->add_flag("--quiet", quiet, "Suppress progress on stderr");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigError;
    }

    const auto* sub = app.get_subcommands().front();
    try {
        auto cfg = hedgedisc::load_config(config_path);
        if (seed) {
            cfg.seed = *seed;
            cfg.source["mc"]["seed"] = *seed;
        }
        if (!format.empty()) cfg.format = format == "json" ? hedgedisc::OutputFormat::json : hedgedisc::OutputFormat::csv;
        if (!out_path.empty()) cfg.output_path = out_path;

        hedgedisc::RunOptions opt;
        opt.threads = threads;
        opt.log = quiet ? nullptr : &std::cerr;
        const auto start = std::chrono::steady_clock::now();
        const auto table = commands.at(sub->get_name()).second(cfg, opt);
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        hedgedisc::emit(table, cfg.format, cfg.output_path, std::cout);
        if (!quiet) std::cerr << sub->get_name() << ": " << table.rows.size() << " rows in " << seconds << " s\n";
        return 0;
    } catch (const hedgedisc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const hedgedisc::NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << '\n';
        return kNumericalError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
