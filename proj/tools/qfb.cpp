#include "qfb/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"qfb: trajectory simulation and verification for QND feedback stabilization"};
    app.require_subcommand(1);

    qfb::CommandOptions opt;
    std::string config, preset, out;
    long long seed = -1;
    int trajectories = 0;
    double dt = 0.0, horizon = -1.0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "experiment configuration file");
        sub->add_option("--preset", preset, "three-level[:slow|:fast][:nofeedback]");
        sub->add_option("--seed", seed, "master seed")->check(CLI::NonNegativeNumber);
        sub->add_option("--trajectories", trajectories, "number of trajectories")->check(CLI::PositiveNumber);
        sub->add_option("--dt", dt, "time step")->check(CLI::PositiveNumber);
        sub->add_option("--horizon", horizon, "simulation horizon")->check(CLI::NonNegativeNumber);
        sub->add_option("--out", out, "output directory");
        sub->add_flag("--force", opt.force, "run even if required checks fail");
        sub->add_option("--workers", opt.workers, "worker threads (0 = hardware)");
    };
    for (qfb::Mode m : {qfb::Mode::verify, qfb::Mode::simulate, qfb::Mode::qsr, qfb::Mode::deterministic,
                        qfb::Mode::bench}) {
        auto* sub = app.add_subcommand(qfb::to_string(m));
        add_common(sub);
        sub->callback([&opt, m] { opt.mode = m; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : qfb::exit_config;
    }
    if (!config.empty()) opt.config_path = config;
    if (!preset.empty()) opt.preset = preset;
    if (!out.empty()) opt.out_dir = out;
    if (seed >= 0) opt.seed = static_cast<std::uint64_t>(seed);
    if (trajectories > 0) opt.trajectories = trajectories;
    if (dt > 0.0) opt.dt = dt;
    if (horizon >= 0.0) opt.horizon = horizon;
    return qfb::run_command(opt, std::cout, std::cerr);
}
