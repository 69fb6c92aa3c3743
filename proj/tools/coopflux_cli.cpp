#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "coopflux/cli_io.hpp"
#include "coopflux/errors.hpp"

namespace cli = coopflux::cli;

int main(int argc, char** argv) {
    CLI::App app{"coopflux: cooperative cross-diffusion simulator and bifurcation toolkit"};
    app.require_subcommand(1);

    cli::CommonOptions common;
    std::string out_dir;
    std::uint64_t seed = 0;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "YAML configuration file")->required();
        sub->add_option("--out", out_dir, "output directory (overrides output.directory)");
        sub->add_option("--seed", seed, "random seed (overrides initial.seed)");
    };

    auto* regime = app.add_subcommand("regime", "print conditions, constants and per-mode onsets");
    add_common(regime);
    int regime_modes = 3;
    regime->add_option("--modes", regime_modes, "number of Neumann modes in the onset table");

    auto* simulate = app.add_subcommand("simulate", "run one simulation");
    add_common(simulate);

    auto* bifurcate = app.add_subcommand("bifurcate", "trace branches born on the constant state");
    add_common(bifurcate);
    std::string modes = "1";
    std::string d_range = "0.005:0.2";
    bifurcate->add_option("--modes", modes, "modes to trace, e.g. 1,2 or 1-3");
    bifurcate->add_option("--d-range", d_range, "continuation window lo:hi");

    auto* sweep = app.add_subcommand("sweep", "run simulations over values of one config key");
    add_common(sweep);
    std::string axis;
    std::string values;
    sweep->add_option("--axis", axis, "dotted config key, or d for d1 = d2")->required();
    sweep->add_option("--values", values, "comma separated values")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::kConfigError;
    }

    for (auto* sub : {regime, simulate, bifurcate, sweep}) {
        if (!sub->parsed()) continue;
        if (sub->count("--out")) common.out = out_dir;
        if (sub->count("--seed")) common.seed = seed;
    }

    try {
        if (regime->parsed()) return cli::cmd_regime(common, regime_modes, std::cout, std::cerr);
        if (simulate->parsed()) return cli::cmd_simulate(common, std::cout, std::cerr);
        if (bifurcate->parsed()) return cli::cmd_bifurcate(common, cli::parse_modes(modes), d_range, std::cout, std::cerr);
        return cli::cmd_sweep(common, axis, cli::parse_values(values), std::cout, std::cerr);
    } catch (const coopflux::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kConfigError;
    }
}
