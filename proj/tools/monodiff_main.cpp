#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "monodiff/experiment.hpp"

namespace {

int resolve_workers(int cli_workers) {
    if (cli_workers > 0) return cli_workers;
    if (const char* env = std::getenv("MONODIFF_WORKERS")) {
        const int w = std::atoi(env);
        if (w > 0) return w;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"monodiff: stochastic porous-media solver and verification suite"};
    app.require_subcommand(1);

    std::string config_path, manifest_path, out_dir;
    int workers = 0;
    std::uint64_t seed = 0;
    bool seed_given = false;

    auto* run = app.add_subcommand("run", "run an experiment config and its checks");
    run->add_option("config", config_path, "experiment config (JSON)")->required();
    run->add_option("--out", out_dir, "output directory (overrides the config)");
    run->add_option("--workers", workers, "ensemble worker threads (env MONODIFF_WORKERS)");
    auto* seed_opt = run->add_option("--seed", seed, "override the noise seed");

    auto* replay = app.add_subcommand("replay", "re-execute a run from its manifest and compare checksums");
    replay->add_option("manifest", manifest_path, "manifest.json of a previous run")->required();

    app.add_subcommand("list-graphs", "print the built-in graph catalog");

    CLI11_PARSE(app, argc, argv);
    seed_given = seed_opt->count() > 0;

    if (app.got_subcommand("list-graphs")) {
        std::cout << monodiff::graph_catalog();
        return 0;
    }
    if (app.got_subcommand("run")) {
        const std::uint64_t* seed_ptr = seed_given ? &seed : nullptr;
        const auto outcome = monodiff::run_experiment_file(config_path, out_dir,
                                                           resolve_workers(workers), seed_ptr);
        if (!outcome.message.empty()) std::cerr << outcome.message << "\n";
        if (outcome.exit_code == 0)
            std::cout << "run complete: " << outcome.output_dir.string() << "\n";
        return outcome.exit_code;
    }
    if (app.got_subcommand("replay")) {
        const auto outcome = monodiff::replay_manifest(manifest_path);
        if (!outcome.message.empty())
            (outcome.exit_code == 0 ? std::cout : std::cerr) << outcome.message << "\n";
        return outcome.exit_code;
    }
    return 0;
}
