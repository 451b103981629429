#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "meanfield2nn/experiment.hpp"
#include "meanfield2nn/sgd.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

int execute(const mf::ExperimentConfig& cfg, int threads, const std::string& out) {
    mf::RunOptions options;
    options.threads = threads;
    if (!out.empty()) options.output_dir = out;
    try {
        mf::run_experiment(cfg, options);
    } catch (const mf::DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const mf::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    std::cout << "wrote " << options.output_dir.value_or(cfg.output_dir) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mean-field two-layer network experiments"};
    app.set_version_flag("--version", std::string(mf::version()));
    app.require_subcommand(1);

    int threads = 0;
    std::string out;

    auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
    std::string config_path;
    run->add_option("config", config_path, "Config file")->required();
    run->add_option("--threads", threads, "Worker thread cap (default: all cores)")->check(CLI::NonNegativeNumber);
    run->add_option("--out", out, "Output directory (overrides output_dir)");

    auto* preset = app.add_subcommand("preset", "Run a hard-coded figure preset");
    std::string preset_name;
    std::string scale = "paper";
    bool print_only = false;
    preset->add_option("name", preset_name, "figure1 | figure2 | figure3 | figure4")
        ->required()
        ->check(CLI::IsMember({"figure1", "figure2", "figure3", "figure4"}));
    preset->add_option("--scale", scale, "paper or small")->check(CLI::IsMember({"paper", "small"}));
    preset->add_option("--threads", threads, "Worker thread cap (default: all cores)")->check(CLI::NonNegativeNumber);
    preset->add_option("--out", out, "Output directory");
    preset->add_flag("--print", print_only, "Print the preset config and exit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    mf::ExperimentConfig cfg;
    try {
        if (run->parsed()) {
            cfg = mf::load_config(config_path);
        } else {
            const auto doc = mf::preset_document(preset_name, scale);
            if (print_only) {
                std::cout << doc.dump(2) << '\n';
                return 0;
            }
            cfg = mf::parse_config(doc);
        }
    } catch (const mf::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    return execute(cfg, threads, out);
}
