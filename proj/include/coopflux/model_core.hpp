#pragma once

// Closed-form quantities of the cooperative system with attractive-transition
// flux:
//
//   u_t = d1 Δu + α ∇·[v²∇(u/v)] + u(a1 − b1 u + c1 v)
//   v_t = d2 Δv + β ∇·[u²∇(v/u)] + v(a2 + b2 u − c2 v)
//
// with homogeneous Neumann conditions. Nothing in this header touches a grid.

#include <array>
#include <optional>
#include <string>

#include <Eigen/Dense>

namespace coopflux {

struct ModelParams {
    double d1 = 1.0;
    double d2 = 1.0;
    double alpha = 0.0;
    double beta = 0.0;
    double a1 = 0.0;
    double a2 = 0.0;
    double b1 = 1.0;
    double b2 = 1.0;
    double c1 = 1.0;
    double c2 = 1.0;

    /// Throws InvalidArgument when b_i, c_i are not strictly positive or
    /// d_i, α, β are negative.
    void validate() const;

    /// α/β. Throws MissingGamma when β = 0.
    double gamma() const;
};

enum class CoexistenceCase { i, ii, iii, none };

std::string to_string(CoexistenceCase c);

struct DerivedQuantities {
    double gamma = 0.0;
    /// Symmetric interaction matrix [[b1, −(c1+γb2)/2], [−(c1+γb2)/2, γc2]].
    Eigen::Matrix2d A_const = Eigen::Matrix2d::Zero();
    /// Smallest eigenvalue of A_const; positive iff the weaker cooperative
    /// condition holds.
    double lambda_star = 0.0;
    double a_tilde = 0.0;
    bool weaker_condition = false;
    CoexistenceCase case_label = CoexistenceCase::none;

    std::optional<double> u_star;
    std::optional<double> v_star;
    /// Absorbing bound; absent when A_const is not positive definite.
    std::optional<double> K;
    std::optional<double> d_bar;
    std::optional<double> tau_star;
    /// a1/|a2|, case (ii) only.
    std::optional<double> A_ratio;
    std::optional<double> xi_star;

    bool has_coexistence() const { return u_star.has_value(); }
    /// Throws NoCoexistence when (u*, v*) is undefined.
    std::pair<double, double> coexistence() const;
    /// Throws NondefiniteA when λ* ≤ 0.
    void require_definite() const;
};

/// Default ε used for K when both growth rates are non-positive.
inline constexpr double kDefaultAbsorbingEpsilon = 1e-3;

DerivedQuantities derive(const ModelParams& params,
                         double absorbing_epsilon = kDefaultAbsorbingEpsilon);

/// (u*, v*) from the linear reaction balance, present when b1c2 > b2c1 and a
/// coexistence case holds.
std::optional<std::pair<double, double>> coexistence_state(const ModelParams& params);

bool check_weaker_condition(const ModelParams& params);
CoexistenceCase classify_case(const ModelParams& params);
bool check_hinpu(const ModelParams& params);

double lambda_star(const ModelParams& params);
Eigen::Matrix2d interaction_matrix(const ModelParams& params);

/// X·A_const·Xᵀ. Throws NondefiniteA unless the weaker condition holds.
double quadratic_form_bound(const ModelParams& params, const std::array<double, 2>& X);

/// H(η; ξ) = η − ξ − ξ log(η/ξ), evaluated without cancellation near η = ξ.
double entropy_H(double eta, double xi);

/// Closed-form solution of ξ' = ξ(ã − λ* ξ/(1+γ²)), ξ(0) = xi0.
double logistic_xi(double t, double xi0, const ModelParams& params);

/// Diffusion matrix A(u, v) of the quasilinear system.
Eigen::Matrix2d diffusion_matrix(const ModelParams& params, double u, double v);

/// Jacobian of the reaction terms at a point.
Eigen::Matrix2d reaction_jacobian(const ModelParams& params, double u, double v);

std::array<double, 2> reaction(const ModelParams& params, double u, double v);

struct ModeData {
    int j = 0;
    double lambda_j = 0.0;
    double P_j = 0.0;
    double Q_j = 0.0;
    /// Root of λ²d² + λQ_j d − P_j with the printed Q_j.
    double d_star_formula = 0.0;
    /// Positive root of det(λ_j A(u*, v*; d) − J_reaction) = 0.
    double d_star_det = 0.0;
    /// ψ/φ of the null vector (1, κ) at d_star_det.
    double kappa_j = 0.0;
    bool discrepancy = false;
};

/// Per-mode data at the coexistence state. Requires check_hinpu and
/// lambda_j > 0; throws NoPositiveRoot when P_j ≤ 0.
ModeData mode_analysis(const ModelParams& params, int j, double lambda_j);

/// 2×2 mode matrix −λ_j A(u*, v*; d) + J_reaction with d1 = d2 = d.
Eigen::Matrix2d mode_matrix(const ModelParams& params, double d, double lambda_j);

/// Coefficients (c2, c1, c0) of det(λ_j A(u*, v*; d) − J) = c2 d² + c1 d + c0.
std::array<double, 3> mode_determinant_coefficients(const ModelParams& params, double lambda_j);

double mode_P(const ModelParams& params, double lambda_j);
double mode_Q(const ModelParams& params, double lambda_j);

bool region_Rj_membership(const ModelParams& params, double lambda_j);

double gronwall_bound(double y0, double a, double b);

}  // namespace coopflux
