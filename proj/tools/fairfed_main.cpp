// Command-line entry point: run experiments from config files, execute
// canned presets with embedded checks, validate configs, and summarize
// existing output directories.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure,
// 3 failed preset check.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fairfed/presets.hpp"

namespace {

namespace fs = std::filesystem;

// --out beats the config's out_dir, which beats FAIRFED_OUT, which beats
// ./out. Presets have no config, so the middle rung is the preset name
// appended to the fallback base.
fs::path resolve_out_dir(const std::string& cli_out, const std::string& config_out,
                         const std::string& subdir) {
    if (!cli_out.empty()) return fs::path(cli_out);
    if (!config_out.empty()) return fs::path(config_out);
    const char* env = std::getenv("FAIRFED_OUT");
    fs::path base = env && *env ? fs::path(env) : fs::path("out");
    return subdir.empty() ? base : base / subdir;
}

int do_run(const std::string& config_path, const std::optional<std::uint64_t>& seed,
           const std::optional<std::size_t>& replicates, const std::string& cli_out) {
    auto cfg = fairfed::ExperimentConfig::from_file(config_path);
    if (seed) cfg.seed = *seed;
    if (replicates) cfg.replicates = *replicates;
    cfg.validate();
    const fs::path dir = resolve_out_dir(cli_out, cfg.out_dir, "");
    const auto outcome = fairfed::execute(cfg, dir);
    std::cout << fairfed::format_summary_table(outcome.summary);
    std::cout << "wrote " << outcome.out_dir.string() << "\n";
    return 0;
}

int do_preset(const std::string& name, std::uint64_t seed, const std::string& cli_out) {
    const fs::path dir = resolve_out_dir(cli_out, "", name);
    const auto outcome = fairfed::presets::run_preset(name, seed, dir);
    for (const auto& c : outcome.checks)
        std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << ": " << c.detail << "\n";
    std::cout << "wrote " << outcome.out_dir.string() << "\n";
    return outcome.all_pass() ? 0 : 3;
}

int do_validate(const std::string& config_path) {
    fairfed::ExperimentConfig::from_file(config_path);
    std::cout << "ok: " << config_path << "\n";
    return 0;
}

int do_summarize(const std::string& in_dir) {
    const auto logs = fairfed::discover_metrics_logs(in_dir);
    std::vector<std::vector<fairfed::RoundMetrics>> parsed;
    parsed.reserve(logs.size());
    for (const auto& p : logs) parsed.push_back(fairfed::load_metrics_csv(p));
    std::cout << fairfed::format_summary_table(fairfed::summarize(parsed));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic simulator for availability-aware federated selection"};
    app.require_subcommand(1);

    std::string config_path, preset_name, in_dir, cli_out;
    std::uint64_t seed_value = 0;
    std::size_t replicates_value = 0;

    auto* run_cmd = app.add_subcommand("run", "execute an experiment from a config file");
    run_cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
    auto* run_seed = run_cmd->add_option("--seed", seed_value, "override the master seed");
    auto* run_reps =
        run_cmd->add_option("--replicates", replicates_value, "override the replicate count");
    run_cmd->add_option("--out", cli_out, "output directory");

    auto* preset_cmd = app.add_subcommand("preset", "run a named scenario with embedded checks");
    preset_cmd->add_option("name", preset_name, "scenario name")->required();
    auto* preset_seed = preset_cmd->add_option("--seed", seed_value, "master seed (default 1)");
    preset_cmd->add_option("--out", cli_out, "output directory");

    auto* validate_cmd = app.add_subcommand("validate", "check a config file, writing nothing");
    validate_cmd->add_option("--config", config_path, "experiment config (JSON)")->required();

    auto* summarize_cmd =
        app.add_subcommand("summarize", "aggregate metrics logs under a directory");
    summarize_cmd->add_option("--in", in_dir, "directory with metrics_log.csv files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (run_cmd->parsed()) {
            std::optional<std::uint64_t> seed;
            if (run_seed->count() > 0) seed = seed_value;
            std::optional<std::size_t> reps;
            if (run_reps->count() > 0) reps = replicates_value;
            return do_run(config_path, seed, reps, cli_out);
        }
        if (preset_cmd->parsed()) {
            const std::uint64_t seed = preset_seed->count() > 0 ? seed_value : 1;
            return do_preset(preset_name, seed, cli_out);
        }
        if (validate_cmd->parsed()) return do_validate(config_path);
        if (summarize_cmd->parsed()) return do_summarize(in_dir);
    } catch (const fairfed::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const fairfed::EngineError& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
