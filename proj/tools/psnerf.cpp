#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "psnerf/commands.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitUpstream = 3;
constexpr int kExitNumeric = 4;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"psnerf: two-stage neural inverse rendering for multi-view photometric stereo"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    int workers = 0;
    bool seed_given = false, workers_given = false;

    const std::pair<const char*, const char*> commands[] = {
        {"synth", "generate a synthetic dataset with a ground-truth sidecar"},
        {"stage1", "train the guided density field"},
        {"stage2", "jointly optimize the decomposition networks and lights"},
        {"render", "render a dataset view under a dataset light (or the light mean)"},
        {"relight", "render a view under novel lights, with optional material overrides"},
        {"eval", "compute normal / mesh / image metrics against the gt sidecar"},
        {"extract-mesh", "run marching cubes on the trained density field"},
    };
    for (const auto& [name, desc] : commands) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("--config", config_path, "run configuration (JSON)")->required();
        sub->add_option("--seed", seed, "override the config seed")
            ->each([&](const std::string&) { seed_given = true; });
        sub->add_option("--workers", workers, "override the config worker count")
            ->each([&](const std::string&) { workers_given = true; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        psnerf::RunConfig cfg = psnerf::load_run_config(config_path);
        if (seed_given) cfg.seed = seed;
        if (workers_given) cfg.workers = workers;
        if (const char* env_out = std::getenv("PSNERF_OUT"); env_out && *env_out)
            cfg.output = env_out;
        cfg.validate();
        psnerf::run_command(command, cfg);
        return kExitOk;
    } catch (const psnerf::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const psnerf::UpstreamError& e) {
        std::cerr << "missing upstream artifact: " << e.what() << "\n";
        return kExitUpstream;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}
