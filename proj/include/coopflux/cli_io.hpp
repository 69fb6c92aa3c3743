#pragma once

// Configuration files, the four commands and the text formats they emit.

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coopflux/dynamics.hpp"
#include "coopflux/steady_state.hpp"

namespace coopflux::cli {

enum ExitCode : int { kSuccess = 0, kConfigError = 2, kBlowUp = 3, kSolverFailure = 4 };

struct Config {
    RunConfig run;
    std::string output_directory = "out";
};

/// Strict YAML loading: unknown keys and out-of-range values raise
/// ConfigError with "<source>:<line>:<col>: <key>: ..." messages.
Config parse_config(const std::string& text, const std::string& source = "<config>");
Config load_config(const std::string& path);

/// Sets the numeric key `axis` (dotted path such as params.a1, or `d` for
/// d1 = d2) in the YAML text and reparses. Throws ConfigError for unknown
/// or non-numeric keys.
Config parse_config_with_override(const std::string& text, const std::string& axis, double value,
                                  const std::string& source = "<config>");

/// Regime report: conditions, derived constants and the per-mode onset table.
void write_regime_report(std::ostream& os, const ModelParams& params, const Grid& grid, int modes);

struct SimulationSummary {
    RunOutcome outcome = RunOutcome::completed;
    double t_final = 0.0;
    double halt_time = 0.0;
    std::string halt_reason;
    std::optional<double> D_initial;
    std::optional<double> D_final;
    std::optional<double> F_final;
    std::optional<bool> comparison_held;
    std::optional<bool> absorbing_held;
    /// max over records of |mass(t) − mass(0)| / mass(0), u and v together.
    double mass_drift = 0.0;
    std::size_t accepted_steps = 0;
    std::size_t rejected_steps = 0;
    std::size_t records = 0;

    bool converged() const { return D_final && *D_final < 1e-8; }
};

void write_summary(std::ostream& os, const SimulationSummary& summary);

/// Runs one simulation writing diagnostics.csv, snapshots/ and summary.txt
/// under `directory`.
SimulationSummary simulate_to_directory(const RunConfig& config, const std::string& directory);

/// Branch export: `# mode`, `# lambda_h`, `# d_star` headers and columns
/// s,d,l2_norm_u,l2_norm_v,stability_index,residual_norm.
struct BranchRow {
    double s = 0.0;
    double d = 0.0;
    double l2_norm_u = 0.0;
    double l2_norm_v = 0.0;
    int stability_index = 0;
    double residual_norm = 0.0;

    bool operator==(const BranchRow&) const = default;
};

struct BranchTable {
    int mode = 0;
    double lambda_h = 0.0;
    double d_star = 0.0;
    std::vector<BranchRow> rows;

    bool operator==(const BranchTable&) const = default;
};

BranchTable to_table(const Branch& branch);
void write_branch(std::ostream& os, const BranchTable& table);
BranchTable read_branch(std::istream& is);
/// Two columns d, l2_norm_u.
void write_plot_data(std::ostream& os, const BranchTable& table);

std::pair<double, double> parse_d_range(const std::string& text);
std::vector<int> parse_modes(const std::string& text);
std::vector<double> parse_values(const std::string& text);

struct CommonOptions {
    std::string config_path;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
};

int cmd_regime(const CommonOptions& opt, int modes, std::ostream& out, std::ostream& err);
int cmd_simulate(const CommonOptions& opt, std::ostream& out, std::ostream& err);
int cmd_bifurcate(const CommonOptions& opt, const std::vector<int>& modes, const std::string& d_range,
                  std::ostream& out, std::ostream& err);
/// Worker count comes from COOPFLUX_WORKERS (default: hardware concurrency).
int cmd_sweep(const CommonOptions& opt, const std::string& axis, const std::vector<double>& values,
              std::ostream& out, std::ostream& err);

}  // namespace coopflux::cli
