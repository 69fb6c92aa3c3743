#pragma once

// Time integration of the full system and the per-step diagnostics: the
// logistic comparison bound on w = u + γv, the absorbing bound, the entropy
// functional F, the L² distance D and the W^{1,4} quantity y.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "coopflux/grid_ops.hpp"
#include "coopflux/model_core.hpp"

namespace coopflux {

/// Negative undershoot allowed before a state counts as non-positive.
inline constexpr double kPositivityTolerance = 1e-12;

struct State {
    double t = 0.0;
    Field u;
    Field v;

    const Grid& grid() const { return u.grid; }
    /// w = u + γv.
    Field w(double gamma) const;
};

struct DiagnosticsRecord {
    double t = 0.0;
    double dt = 0.0;
    double linf_u = 0.0;
    double linf_v = 0.0;
    double linf_w = 0.0;
    std::optional<double> xi_t;
    std::optional<double> lyapunov_F;
    std::optional<double> distance_D;
    double y_w14 = 0.0;
    double mass_u = 0.0;
    double mass_v = 0.0;
    double l3_lap_w_cubed = 0.0;
    std::optional<double> B_posdef_min;
    std::optional<bool> comparison_ok;
    std::optional<bool> absorbing_ok;
    /// Set when F is undefined because some cell has u ≤ 0 or v ≤ 0.
    bool F_overflow = false;
};

/// Column names of the diagnostics stream, in record order.
const std::vector<std::string>& diagnostics_columns();
void write_diagnostics_header(std::ostream& os);
void write_diagnostics_row(std::ostream& os, const DiagnosticsRecord& rec);
std::vector<DiagnosticsRecord> read_diagnostics(std::istream& is);

/// Everything that stays fixed while diagnostics are evaluated along a run.
struct DiagnosticsContext {
    ModelParams params;
    DerivedQuantities derived;
    /// Discrete ‖u0 + γv0‖∞, the initial value of the logistic bound.
    double xi0 = 0.0;
    double comparison_slack = 0.02;
    double absorbing_slack = 0.05;

    static DiagnosticsContext from_initial(const ModelParams& params, const State& initial,
                                           double absorbing_epsilon = kDefaultAbsorbingEpsilon);
};

DiagnosticsRecord compute_diagnostics(const State& state, const DiagnosticsContext& ctx);

enum class InitialKind { constant, eigenmode, random, file };

struct InitialCondition {
    InitialKind kind = InitialKind::constant;
    /// Constant values, or the base state for eigenmode/random kinds. For
    /// eigenmode kind an absent base means (u*, v*).
    std::optional<double> u;
    std::optional<double> v;
    int mode = 1;
    double amplitude = 0.0;
    std::uint64_t seed = 0;
    std::string path;
};

/// Builds (u0, v0). Random data are i.i.d. uniform per cell on
/// [base, base + amplitude); eigenmode data add amplitude·Φ_mode to both.
State make_initial_state(const InitialCondition& ic, const Grid& grid, const ModelParams& params);

struct RunConfig {
    ModelParams params;
    Grid grid;
    InitialCondition initial;
    double t_end = 1.0;
    double dt_init = 1e-2;
    double tolerance = 1e-4;
    /// Time between diagnostics records; 0 records every accepted step.
    double output_every = 0.1;
    /// Time between snapshots; 0 disables them.
    double snapshot_every = 0.0;
    double blowup_threshold = 1e6;
    /// Drops the reaction terms entirely.
    bool pure_diffusion = false;
    double absorbing_epsilon = kDefaultAbsorbingEpsilon;
    /// Local extrapolation of the step-doubling pair (second order in time).
    bool extrapolate = true;
    /// Upper bound on the time step.
    double dt_max = 1.0;

    void validate() const;
};

enum class RunOutcome { completed, blow_up, step_collapse };

std::string to_string(RunOutcome outcome);

struct RunResult {
    RunOutcome outcome = RunOutcome::completed;
    std::vector<DiagnosticsRecord> records;
    State final_state;
    std::size_t accepted_steps = 0;
    std::size_t rejected_steps = 0;
    /// Halt time and the offending norm on blow-up or step collapse.
    double halt_time = 0.0;
    std::string halt_reason;
};

struct RunObserver {
    std::function<void(const DiagnosticsRecord&)> on_record;
    std::function<void(const Snapshot&)> on_snapshot;
};

/// One linearly implicit IMEX Euler step: the diffusion matrix A(u, v) is
/// frozen at the incoming state and treated implicitly, the reaction
/// explicitly. Throws PositivityViolation or LinearSolveFailure.
State step(const State& state, double dt, const ModelParams& params, bool pure_diffusion = false);

/// Fixed-step integration with `step`, without error control.
State integrate_fixed(const State& initial, double dt, double t_end, const ModelParams& params,
                      bool pure_diffusion = false);

/// Adaptive integration by step doubling.
RunResult run(const RunConfig& config, const RunObserver& observer = {});
RunResult run_from(const RunConfig& config, const State& initial, const RunObserver& observer = {});

struct GronwallReport {
    /// Constant C of h(t) = C(‖Δw‖³_{L³} + 1), calibrated on the first window.
    double C = 0.0;
    /// max over windows of ∫ h.
    double b = 0.0;
    double bound = 0.0;
    double max_y = 0.0;
    /// (1.1·bound − max y) / (1.1·bound); negative when violated.
    double margin = 0.0;
    bool ok = false;
};

/// Post-hoc check of the W^{1,4} quantity y(t) against the Gronwall bound
/// max(y0 + b, b/a + 2b) with 10% slack. Throws InsufficientData when the
/// records do not span two windows.
GronwallReport check_gronwall_series(const std::vector<DiagnosticsRecord>& records, double a,
                                     double window = 1.0);

}  // namespace coopflux
