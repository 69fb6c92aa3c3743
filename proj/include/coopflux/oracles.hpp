#pragma once

// Reference computations that the simulator is checked against: the
// diffusionless reaction ODE (with blow-up detection) and closed-form 2×2
// spectra.

#include <array>
#include <complex>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "coopflux/model_core.hpp"

namespace coopflux::oracles {

struct OdeState {
    double t = 0.0;
    double u = 0.0;
    double v = 0.0;
};

struct OdeTrajectory {
    std::vector<OdeState> states;
    bool blew_up = false;
    /// Time of the first state with max(u, v) above the threshold.
    double halt_time = 0.0;
};

/// Classic RK4 for u' = u(a1 − b1u + c1v), v' = v(a2 + b2u − c2v). Stops at
/// t_end or when max(u, v) exceeds `blowup_threshold`.
OdeTrajectory ode_integrate(const ModelParams& params, double u0, double v0, double t_end, double dt,
                            double blowup_threshold = 1e6);

struct BlowUpCertificate {
    bool blew_up_coarse = false;
    bool blew_up_fine = false;
    double halt_coarse = 0.0;
    double halt_fine = 0.0;
    double relative_change = 0.0;
    bool certified = false;
};

/// Runs at dt and dt/2; blow-up is certified when both halt and the halt
/// times differ by less than `max_relative_change`.
BlowUpCertificate certify_blowup(const ModelParams& params, double u0, double v0, double t_end, double dt,
                                 double blowup_threshold = 1e6, double max_relative_change = 0.05);

std::array<std::complex<double>, 2> brute_force_2x2_eigen(const Eigen::Matrix2d& m);

/// Fixed-step RK4 for a scalar autonomous ODE.
double rk4_scalar(const std::function<double(double)>& f, double y0, double t_end, int steps);

}  // namespace coopflux::oracles
