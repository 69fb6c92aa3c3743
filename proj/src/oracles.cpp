#include "coopflux/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "coopflux/errors.hpp"

namespace coopflux::oracles {

OdeTrajectory ode_integrate(const ModelParams& params, double u0, double v0, double t_end, double dt,
                            double blowup_threshold) {
    if (u0 < 0.0 || v0 < 0.0) raise(ErrorCode::InvalidArgument, "ODE initial data must be nonnegative");
    if (!(dt > 0.0) || !(t_end >= 0.0)) raise(ErrorCode::InvalidArgument, "ODE needs dt > 0 and t_end >= 0");
    auto rhs = [&](double u, double v) { return reaction(params, u, v); };

    OdeTrajectory traj;
    OdeState s{0.0, u0, v0};
    traj.states.push_back(s);
    const long steps = static_cast<long>(std::ceil(t_end / dt - 1e-12));
    for (long k = 0; k < steps; ++k) {
        const double h = std::min(dt, t_end - s.t);
        const auto k1 = rhs(s.u, s.v);
        const auto k2 = rhs(s.u + 0.5 * h * k1[0], s.v + 0.5 * h * k1[1]);
        const auto k3 = rhs(s.u + 0.5 * h * k2[0], s.v + 0.5 * h * k2[1]);
        const auto k4 = rhs(s.u + h * k3[0], s.v + h * k3[1]);
        s.u += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        s.v += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        s.t = (k + 1 == steps) ? t_end : s.t + h;
        traj.states.push_back(s);
        if (!std::isfinite(s.u) || !std::isfinite(s.v) || std::max(s.u, s.v) > blowup_threshold) {
            traj.blew_up = true;
            traj.halt_time = s.t;
            return traj;
        }
    }
    traj.halt_time = s.t;
    return traj;
}

BlowUpCertificate certify_blowup(const ModelParams& params, double u0, double v0, double t_end, double dt,
                                 double blowup_threshold, double max_relative_change) {
    const auto coarse = ode_integrate(params, u0, v0, t_end, dt, blowup_threshold);
    const auto fine = ode_integrate(params, u0, v0, t_end, 0.5 * dt, blowup_threshold);
    BlowUpCertificate cert;
    cert.blew_up_coarse = coarse.blew_up;
    cert.blew_up_fine = fine.blew_up;
    cert.halt_coarse = coarse.halt_time;
    cert.halt_fine = fine.halt_time;
    if (coarse.blew_up && fine.blew_up) {
        cert.relative_change = std::abs(coarse.halt_time - fine.halt_time) / fine.halt_time;
        cert.certified = cert.relative_change < max_relative_change;
    }
    return cert;
}

std::array<std::complex<double>, 2> brute_force_2x2_eigen(const Eigen::Matrix2d& m) {
    const double half_trace = 0.5 * m.trace();
    const double disc = half_trace * half_trace - m.determinant();
    const std::complex<double> root = std::sqrt(std::complex<double>(disc, 0.0));
    return {half_trace - root, half_trace + root};
}

double rk4_scalar(const std::function<double(double)>& f, double y0, double t_end, int steps) {
    if (steps <= 0) raise(ErrorCode::InvalidArgument, "rk4 needs a positive step count");
    const double h = t_end / steps;
    double y = y0;
    for (int k = 0; k < steps; ++k) {
        const double k1 = f(y);
        const double k2 = f(y + 0.5 * h * k1);
        const double k3 = f(y + 0.5 * h * k2);
        const double k4 = f(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return y;
}

}  // namespace coopflux::oracles
