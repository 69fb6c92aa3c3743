#include <cmath>

#include "coopflux/oracles.hpp"
#include "doctest.h"

using namespace coopflux;
using namespace coopflux::oracles;

namespace {

ModelParams strong() {
    ModelParams p;
    p.a1 = 1;
    p.a2 = 1;
    p.b1 = 1;
    p.b2 = 3;
    p.c1 = 3;
    p.c2 = 1;
    return p;
}

}  // namespace

TEST_CASE("equilibrium trajectory stays constant") {
    ModelParams p;
    p.a1 = 1;
    p.a2 = 1;
    p.b1 = 4;
    p.b2 = 1;
    p.c1 = 1;
    p.c2 = 3;
    const auto tr = ode_integrate(p, 4.0 / 11.0, 5.0 / 11.0, 10.0, 0.01);
    CHECK_FALSE(tr.blew_up);
    for (const auto& s : tr.states) {
        CHECK(std::abs(s.u - 4.0 / 11.0) < 1e-13);
        CHECK(std::abs(s.v - 5.0 / 11.0) < 1e-13);
    }
    CHECK(tr.states.back().t == doctest::Approx(10.0));
}

TEST_CASE("rk4 is fourth order") {
    // Symmetric strong-cooperative data reduce to u' = u(1 + 2u), solvable exactly.
    const double u0 = 0.1, T = 0.5;
    const double exact = u0 * std::exp(T) / (1.0 + 2.0 * u0 * (1.0 - std::exp(T)));
    double e_prev = 0.0;
    for (double dt : {0.05, 0.025, 0.0125}) {
        const auto tr = ode_integrate(strong(), u0, u0, T, dt);
        const double e = std::abs(tr.states.back().u - exact);
        if (e_prev > 0.0) CHECK(std::log2(e_prev / e) > 3.5);
        e_prev = e;
        CHECK(tr.states.back().u == doctest::Approx(tr.states.back().v).epsilon(1e-14));
    }
}

TEST_CASE("strong cooperation blows up in finite time") {
    // u = v, u' = u(1 + 2u) from u0 = 1 blows up at ln(3/2).
    const auto cert = certify_blowup(strong(), 1.0, 1.0, 2.0, 1e-3);
    CHECK(cert.blew_up_coarse);
    CHECK(cert.blew_up_fine);
    CHECK(cert.certified);
    CHECK(cert.relative_change < 0.05);
    CHECK(cert.halt_fine < 0.5);  // before 1/(2u0)
    CHECK(cert.halt_fine == doctest::Approx(std::log(1.5)).epsilon(1e-3));
}

TEST_CASE("negative growth rates decay under the logistic bound") {
    ModelParams p;
    p.alpha = 1;
    p.beta = 1;
    p.a1 = -1;
    p.a2 = -1;
    p.b1 = 4;
    p.b2 = 1;
    p.c1 = 1;
    p.c2 = 3;
    const auto tr = ode_integrate(p, 2.0, 1.5, 10.0, 0.01);
    CHECK_FALSE(tr.blew_up);
    const double w0 = 2.0 + 1.5;
    for (const auto& s : tr.states) CHECK(s.u + s.v <= logistic_xi(s.t, w0, p) * (1 + 1e-12));
    CHECK(tr.states.back().u < 1e-3);
    CHECK(tr.states.back().v < 1e-3);
}

TEST_CASE("closed-form 2x2 spectra") {
    const auto id = brute_force_2x2_eigen(Eigen::Matrix2d::Identity());
    CHECK(id[0] == std::complex<double>(1, 0));
    CHECK(id[1] == std::complex<double>(1, 0));
    Eigen::Matrix2d a;
    a << 4, -1, -1, 3;
    const auto ea = brute_force_2x2_eigen(a);
    const double hi = std::max(ea[0].real(), ea[1].real()), lo = std::min(ea[0].real(), ea[1].real());
    CHECK(std::abs(hi - (7 + std::sqrt(5.0)) / 2) < 1e-14);
    CHECK(std::abs(lo - (7 - std::sqrt(5.0)) / 2) < 1e-14);
    CHECK(ea[0].imag() == 0.0);
    Eigen::Matrix2d r;
    r << 0, 1, -1, 0;
    const auto er = brute_force_2x2_eigen(r);
    CHECK(std::abs(er[0].real()) < 1e-15);
    CHECK(std::abs(std::abs(er[0].imag()) - 1.0) < 1e-15);
    CHECK(std::abs(er[0] - std::conj(er[1])) < 1e-15);
}

TEST_CASE("scalar rk4") {
    const double y = rk4_scalar([](double x) { return -2.0 * x; }, 1.0, 1.0, 200);
    CHECK(y == doctest::Approx(std::exp(-2.0)).epsilon(1e-9));
}
