// Copyright (C) 2026 The scorediff Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "scorediff/error.hpp"
#include "scorediff/pipeline.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Score-distribution diffusion for video summarization"};
    app.require_subcommand(1);

    scorediff::ConfigSources sources;
    std::string config_file, out_dir;
    std::uint64_t seed = 0;
    bool print_config = false;
    auto* config_opt = app.add_option("--config", config_file, "JSON config file with one section per command")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "Top-level seed; sub-component seeds derive from it");
    auto* out_opt = app.add_option("--out", out_dir, "Output directory");
    app.add_flag("--print-config", print_config, "Print the resolved configuration and exit");

    // One flag per config key, named by its dotted path.
    std::map<std::string, std::string> dotted;
    std::vector<std::pair<std::string, CLI::Option*>> dotted_opts;
    for (const std::string& key : scorediff::config_keys()) {
        if (key == "seed" || key == "out_dir") continue;
        dotted_opts.emplace_back(key, app.add_option("--" + key, dotted[key])->group("Config keys"));
    }

    struct Command {
        const char* name;
        const char* help;
        void (*run)(const scorediff::RunConfig&, std::ostream&);
    };
    const Command commands[] = {
        {"synth", "Generate a synthetic multi-annotator dataset", scorediff::cmd_synth},
        {"train", "Train the denoiser", scorediff::cmd_train},
        {"sample", "Sample importance scores per video", scorediff::cmd_sample},
        {"evaluate", "Compute the metric report, coverage and projection", scorediff::cmd_evaluate},
        {"kp-study", "Knapsack optimum multiplicity under quantization", scorediff::cmd_kp_study},
    };
    std::map<const CLI::App*, const Command*> by_app;
    bool summarize = false;
    for (const Command& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        sub->fallthrough();
        by_app[sub] = &c;
        if (std::string(c.name) == "sample") sub->add_flag("--summarize", summarize, "Also emit knapsack summaries (sample.summarize)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (config_opt->count()) sources.config_file = config_file;
        if (seed_opt->count()) sources.seed = seed;
        if (out_opt->count()) sources.out_dir = out_dir;
        for (const auto& [key, opt] : dotted_opts)
            if (opt->count()) sources.overrides.emplace_back(key, dotted[key]);
        if (summarize) sources.overrides.emplace_back("sample.summarize", "true");
        const scorediff::RunConfig cfg = scorediff::resolve_run_config(sources);
        if (print_config) {
            std::cout << scorediff::run_config_to_json(cfg).dump(2) << '\n';
            return 0;
        }
        for (const auto& [sub, command] : by_app)
            if (sub->parsed()) command->run(cfg, std::cout);
    } catch (const scorediff::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
