#pragma once

// Stationary problem with equal random diffusion d:
//
//   dΔu + α∇·[v²∇(u/v)] + u(a1 − b1u + c1v) = 0
//   dΔv + β∇·[u²∇(v/u)] + v(a2 + b2u − c2v) = 0
//
// Newton solves, linear stability, pseudo-arclength continuation in d from
// the bifurcation points on the constant branch, and the scalar-field limit
// α, β → ∞ with α/β fixed.

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coopflux/dynamics.hpp"
#include "coopflux/grid_ops.hpp"
#include "coopflux/model_core.hpp"

namespace coopflux {

/// Copy of `params` with d1 = d2 = d.
ModelParams with_equal_diffusion(const ModelParams& params, double d);

Eigen::VectorXd stack(const State& s);
State unstack(const Eigen::VectorXd& x, const Grid& grid, double t = 0.0);

/// Discrete residual of both stationary equations. Throws NegativeDensity.
std::pair<Field, Field> stationary_residual(const State& state, double d, const ModelParams& params);
/// sqrt(‖r_u‖² + ‖r_v‖²) in the discrete L².
double stationary_residual_norm(const State& state, double d, const ModelParams& params);
/// Exact Jacobian of the discrete residual with respect to [u; v].
SparseMatrix stationary_jacobian(const State& state, double d, const ModelParams& params);

struct NewtonOptions {
    double tolerance = 1e-10;
    int max_iterations = 50;
    int max_halvings = 30;
};

struct NewtonResult {
    State state;
    int iterations = 0;
    std::vector<double> residual_history;
    /// Tolerance actually applied: max(requested, rounding floor of the
    /// residual evaluation).
    double tolerance_used = 0.0;
};

/// Damped Newton; steps are halved until the iterate stays positive and the
/// residual decreases. Throws NewtonDivergence or SingularJacobian.
NewtonResult newton_solve(const State& initial, double d, const ModelParams& params,
                          const NewtonOptions& options = {});

/// Leading eigenvalues (largest real part first) of the discrete
/// linearization, by shift-invert Arnoldi. Throws ConvergenceFailure.
std::vector<std::complex<double>> linear_stability(const State& state, double d, const ModelParams& params,
                                                   int count = 8);

/// Eigenvalues of the per-mode matrix −λA(u*, v*; d) + J at the constant
/// state, for the first `count` nonzero discrete Neumann eigenvalues.
std::vector<std::array<std::complex<double>, 2>> constant_state_mode_spectra(const ModelParams& params,
                                                                             const Grid& grid, double d,
                                                                             int count);

/// Discrete eigenvalue −⟨Δ_hΦ, Φ⟩ of the analytic mode `mode` sampled on the
/// grid (exact for cosine modes on cell-centered grids).
double discrete_mode_eigenvalue(const Grid& grid, int mode);

struct BranchPoint {
    double d = 0.0;
    State state;
    double s = 0.0;
    double l2_norm_u = 0.0;
    double l2_norm_v = 0.0;
    int stability_index = 0;
    double residual_norm = 0.0;
};

struct Branch {
    int mode = 0;
    /// Discrete eigenvalue of the mode on the continuation grid.
    double lambda_h = 0.0;
    /// Onset found by the sign change of the grid-consistent mode determinant.
    double d_star = 0.0;
    /// Closed-form data at the analytic eigenvalue.
    ModeData analytic;
    /// Discrete-Jacobian determinant changes sign across d_star.
    bool jacobian_sign_change = false;
    double kappa_h = 0.0;
    std::vector<BranchPoint> points;
    std::string termination;
};

struct ContinuationOptions {
    double ds_init = 1e-3;
    double ds_min = 1e-7;
    double ds_max = 1e-1;
    int max_points = 400;
    int scan_points = 400;
    bool compute_stability = true;
    int stability_count = 8;
    NewtonOptions newton{1e-10, 12, 0};
};

/// Detects where mode `mode` leaves the constant branch inside [d_lo, d_hi]
/// and traces the nonconstant branch born there. Throws NotABifurcation,
/// HypothesisNotMet or BranchLost.
Branch continue_branch(const ModelParams& params, const Grid& grid, int mode, double d_lo, double d_hi,
                       const ContinuationOptions& options = {});

/// Share of ‖(u − u*, v − v*)‖ carried by the direction (Φ, κΦ).
double eigenmode_content(const State& state, const ModelParams& params, const Field& phi, double kappa);

/// Residual of dΔv + ξ*v(v − v*) = 0.
Field scalar_field_residual(const Field& v, double d, double xi_star, double v_star);

struct ScalarFieldOptions {
    int mode = 1;
    double amplitude = 1e-2;
    NewtonOptions newton{};
};

/// Nonconstant solution of dΔv + ξ*v(v − v*) = 0 on the mode-`mode` branch
/// (v* when d is above that branch's onset). Throws HypothesisNotMet or
/// NewtonDivergence.
Field scalar_field_solve(double d, const ModelParams& params, const Grid& grid,
                         const ScalarFieldOptions& options = {});

struct LimitStudyRow {
    double beta = 0.0;
    double alpha = 0.0;
    bool solved = false;
    std::string error;
    double sup_ratio_deviation = 0.0;
    double v_residual = 0.0;
    double deviation_from_constant = 0.0;
    State state;
};

struct LimitStudyReport {
    double tau_star = 0.0;
    double xi_star = 0.0;
    double v_star = 0.0;
    Field scalar_limit;
    std::vector<LimitStudyRow> rows;
    bool ratio_decreasing = false;
    bool residual_decreasing = false;
};

/// For each β (α = γβ) finds a nonconstant stationary state at diffusion d
/// and reports sup|u/v − τ*| and the scalar-field residual of v.
LimitStudyReport limit_study(const ModelParams& params_base, double gamma, const std::vector<double>& betas,
                             double d, const Grid& grid, const ScalarFieldOptions& options = {});

}  // namespace coopflux
