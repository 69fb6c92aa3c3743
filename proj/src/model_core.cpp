#include "coopflux/model_core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "coopflux/errors.hpp"

namespace coopflux {

namespace {

double positive_part(double x) { return x > 0.0 ? x : 0.0; }

// Positive root of c2 x² + c1 x + c0 with c2 > 0, c0 < 0, written without
// the cancellation of (−c1 + √disc) when c1 > 0.
double positive_quadratic_root(double c2, double c1, double c0) {
    const double disc = c1 * c1 - 4.0 * c2 * c0;
    const double sq = std::sqrt(disc);
    if (c1 >= 0.0) return -2.0 * c0 / (c1 + sq);
    return (-c1 + sq) / (2.0 * c2);
}

}  // namespace

void ModelParams::validate() const {
    std::ostringstream bad;
    auto need_positive = [&](const char* name, double value) {
        if (!(value > 0.0) || !std::isfinite(value)) bad << ' ' << name << '=' << value;
    };
    auto need_nonneg = [&](const char* name, double value) {
        if (!(value >= 0.0) || !std::isfinite(value)) bad << ' ' << name << '=' << value;
    };
    need_nonneg("d1", d1);
    need_nonneg("d2", d2);
    need_nonneg("alpha", alpha);
    need_nonneg("beta", beta);
    need_positive("b1", b1);
    need_positive("b2", b2);
    need_positive("c1", c1);
    need_positive("c2", c2);
    if (!std::isfinite(a1)) bad << " a1=" << a1;
    if (!std::isfinite(a2)) bad << " a2=" << a2;
    const std::string msg = bad.str();
    if (!msg.empty()) raise(ErrorCode::InvalidArgument, "invalid model parameters:" + msg);
}

double ModelParams::gamma() const {
    if (!(beta > 0.0)) raise(ErrorCode::MissingGamma, "gamma = alpha/beta requires beta > 0");
    return alpha / beta;
}

std::string to_string(CoexistenceCase c) {
    switch (c) {
        case CoexistenceCase::i: return "i";
        case CoexistenceCase::ii: return "ii";
        case CoexistenceCase::iii: return "iii";
        case CoexistenceCase::none: return "none";
    }
    return "none";
}

std::pair<double, double> DerivedQuantities::coexistence() const {
    if (!u_star || !v_star) raise(ErrorCode::NoCoexistence, "no positive constant steady state");
    return {*u_star, *v_star};
}

void DerivedQuantities::require_definite() const {
    if (!(lambda_star > 0.0)) {
        raise(ErrorCode::NondefiniteA,
              "weaker cooperative condition fails (lambda* = " + std::to_string(lambda_star) + ")");
    }
}

Eigen::Matrix2d interaction_matrix(const ModelParams& params) {
    const double g = params.gamma();
    const double off = -(params.c1 + g * params.b2) / 2.0;
    Eigen::Matrix2d A;
    A << params.b1, off, off, g * params.c2;
    return A;
}

double lambda_star(const ModelParams& params) {
    const double g = params.gamma();
    const double diff = params.b1 - g * params.c2;
    const double cross = params.c1 + g * params.b2;
    return (params.b1 + g * params.c2 - std::hypot(diff, cross)) / 2.0;
}

bool check_weaker_condition(const ModelParams& params) {
    const double g = params.gamma();
    return 2.0 * std::sqrt(g * params.b1 * params.c2) > params.c1 + g * params.b2;
}

CoexistenceCase classify_case(const ModelParams& p) {
    if (p.a1 > 0.0 && p.a2 > 0.0) return CoexistenceCase::i;
    if (p.a2 < 0.0 && 0.0 < p.a1 && p.b1 / p.b2 < p.a1 / std::abs(p.a2)) return CoexistenceCase::ii;
    if (p.a1 < 0.0 && 0.0 < p.a2 && std::abs(p.a1) / p.a2 < p.c1 / p.c2) return CoexistenceCase::iii;
    return CoexistenceCase::none;
}

bool check_hinpu(const ModelParams& p) {
    if (!(p.a2 < 0.0 && 0.0 < p.a1)) return false;
    const double ratio = p.b1 / p.b2;
    return p.c1 / p.c2 < ratio && ratio < p.a1 / std::abs(p.a2);
}

std::optional<std::pair<double, double>> coexistence_state(const ModelParams& p) {
    const double det = p.b1 * p.c2 - p.b2 * p.c1;
    if (!(det > 0.0) || classify_case(p) == CoexistenceCase::none) return std::nullopt;
    const double u = (p.a1 * p.c2 + p.a2 * p.c1) / det;
    const double v = (p.a1 * p.b2 + p.a2 * p.b1) / det;
    if (!(u > 0.0 && v > 0.0)) return std::nullopt;
    return std::make_pair(u, v);
}

DerivedQuantities derive(const ModelParams& params, double absorbing_epsilon) {
    params.validate();
    if (!(absorbing_epsilon > 0.0)) {
        raise(ErrorCode::InvalidArgument, "absorbing epsilon must be positive");
    }
    DerivedQuantities out;
    out.gamma = params.gamma();
    out.A_const = interaction_matrix(params);
    out.lambda_star = lambda_star(params);
    out.a_tilde = std::max(positive_part(params.a1), positive_part(params.a2));
    out.weaker_condition = check_weaker_condition(params);
    out.case_label = classify_case(params);

    if (out.lambda_star > 0.0) {
        out.K = out.a_tilde > 0.0
                    ? 2.0 * (1.0 + out.gamma * out.gamma) * out.a_tilde / out.lambda_star
                    : absorbing_epsilon;
    }

    if (auto uv = coexistence_state(params)) {
        const auto [u, v] = *uv;
        out.u_star = u;
        out.v_star = v;
        out.tau_star = u / v;
        if (out.K && out.gamma > 0.0) {
            out.d_bar = (params.beta * u + params.alpha * v) * *out.K /
                        (2.0 * std::sqrt(out.gamma * u * v));
        }
        if (params.a2 < 0.0 && 0.0 < params.a1) {
            out.xi_star = (out.gamma * std::abs(params.a2) - *out.tau_star * params.a1) /
                          (u + out.gamma * v);
        }
    }
    if (out.case_label == CoexistenceCase::ii) out.A_ratio = params.a1 / std::abs(params.a2);
    return out;
}

double quadratic_form_bound(const ModelParams& params, const std::array<double, 2>& X) {
    if (!check_weaker_condition(params)) {
        raise(ErrorCode::NondefiniteA, "quadratic form bound needs the weaker cooperative condition");
    }
    const Eigen::Vector2d x(X[0], X[1]);
    return x.dot(interaction_matrix(params) * x);
}

double entropy_H(double eta, double xi) {
    if (!(eta > 0.0) || !(xi > 0.0)) {
        raise(ErrorCode::NonPositiveArgument, "entropy H(eta; xi) needs eta > 0 and xi > 0");
    }
    const double delta = (eta - xi) / xi;
    if (std::abs(delta) < 1e-2) {
        // ξ (δ − log(1+δ)) = ξ Σ_{k≥2} (−1)^k δ^k / k
        double term = delta * delta;
        double sum = 0.0;
        for (int k = 2; k < 40; ++k) {
            const double contrib = (k % 2 == 0 ? 1.0 : -1.0) * term / k;
            sum += contrib;
            if (std::abs(contrib) <= 1e-18 * std::abs(sum)) break;
            term *= delta;
        }
        return xi * sum;
    }
    return (eta - xi) - xi * std::log(eta / xi);
}

double logistic_xi(double t, double xi0, const ModelParams& params) {
    if (xi0 < 0.0) raise(ErrorCode::InvalidArgument, "xi0 must be nonnegative");
    if (t < 0.0) raise(ErrorCode::InvalidArgument, "t must be nonnegative");
    if (!check_weaker_condition(params)) {
        raise(ErrorCode::NondefiniteA, "logistic bound needs the weaker cooperative condition");
    }
    const double g = params.gamma();
    const double rate = std::max(positive_part(params.a1), positive_part(params.a2));
    const double k = lambda_star(params) / (1.0 + g * g);
    // ξ(t) = ξ0 / (e^{−rt} + kξ0 (1 − e^{−rt})/r), with the r → 0 limit t.
    const double growth = rate > 0.0 ? -std::expm1(-rate * t) / rate : t;
    return xi0 / (std::exp(-rate * t) + k * xi0 * growth);
}

Eigen::Matrix2d diffusion_matrix(const ModelParams& p, double u, double v) {
    Eigen::Matrix2d A;
    A << p.d1 + p.alpha * v, -p.alpha * u, -p.beta * v, p.d2 + p.beta * u;
    return A;
}

Eigen::Matrix2d reaction_jacobian(const ModelParams& p, double u, double v) {
    Eigen::Matrix2d J;
    J << p.a1 - 2.0 * p.b1 * u + p.c1 * v, p.c1 * u,
         p.b2 * v, p.a2 + p.b2 * u - 2.0 * p.c2 * v;
    return J;
}

std::array<double, 2> reaction(const ModelParams& p, double u, double v) {
    return {u * (p.a1 - p.b1 * u + p.c1 * v), v * (p.a2 + p.b2 * u - p.c2 * v)};
}

namespace {

std::pair<double, double> require_star(const ModelParams& params) {
    auto uv = coexistence_state(params);
    if (!uv) raise(ErrorCode::NoCoexistence, "no positive constant steady state");
    return *uv;
}

}  // namespace

Eigen::Matrix2d mode_matrix(const ModelParams& params, double d, double lambda_j) {
    const auto [u, v] = require_star(params);
    ModelParams eq = params;
    eq.d1 = d;
    eq.d2 = d;
    return -lambda_j * diffusion_matrix(eq, u, v) + reaction_jacobian(params, u, v);
}

std::array<double, 3> mode_determinant_coefficients(const ModelParams& params, double lambda_j) {
    const auto [u, v] = require_star(params);
    // λA(d) − J = λ d I + N with N = λ A(0) − J.
    ModelParams zero = params;
    zero.d1 = 0.0;
    zero.d2 = 0.0;
    const Eigen::Matrix2d N =
        lambda_j * diffusion_matrix(zero, u, v) - reaction_jacobian(params, u, v);
    return {lambda_j * lambda_j, lambda_j * N.trace(), N.determinant()};
}

double mode_P(const ModelParams& p, double lambda_j) {
    const auto [u, v] = require_star(p);
    const double a2abs = std::abs(p.a2);
    return lambda_j * (p.alpha * a2abs * v - p.beta * p.a1 * u) - (p.a1 * p.c2 - a2abs * p.c1) * v;
}

double mode_Q(const ModelParams& p, double lambda_j) {
    const auto [u, v] = require_star(p);
    return lambda_j * (p.beta * u + p.alpha * v) + p.b1 * u + p.c1 * v;
}

ModeData mode_analysis(const ModelParams& params, int j, double lambda_j) {
    if (!check_hinpu(params)) {
        raise(ErrorCode::HypothesisNotMet, "mode analysis needs a2 < 0 < a1 and c1/c2 < b1/b2 < a1/|a2|");
    }
    if (!(lambda_j > 0.0)) raise(ErrorCode::InvalidArgument, "lambda_j must be positive");
    ModeData m;
    m.j = j;
    m.lambda_j = lambda_j;
    m.P_j = mode_P(params, lambda_j);
    m.Q_j = mode_Q(params, lambda_j);
    if (!(m.P_j > 0.0)) {
        raise(ErrorCode::NoPositiveRoot,
              "P_j = " + std::to_string(m.P_j) + " <= 0: mode " + std::to_string(j) + " never destabilizes");
    }
    m.d_star_formula = positive_quadratic_root(lambda_j * lambda_j, lambda_j * m.Q_j, -m.P_j);

    const auto c = mode_determinant_coefficients(params, lambda_j);
    if (!(c[2] < 0.0)) {
        raise(ErrorCode::NoPositiveRoot, "mode determinant has no positive root");
    }
    m.d_star_det = positive_quadratic_root(c[0], c[1], c[2]);

    const Eigen::Matrix2d M = -mode_matrix(params, m.d_star_det, lambda_j);
    // Null vector (1, κ): pick the better-conditioned row.
    if (M.row(0).norm() >= M.row(1).norm()) {
        m.kappa_j = -M(0, 0) / M(0, 1);
    } else {
        m.kappa_j = -M(1, 0) / M(1, 1);
    }
    m.discrepancy = std::abs(m.d_star_formula - m.d_star_det) > 1e-6 * m.d_star_det;
    return m;
}

bool region_Rj_membership(const ModelParams& params, double lambda_j) {
    if (!check_hinpu(params)) {
        raise(ErrorCode::HypothesisNotMet, "R_j membership needs a2 < 0 < a1 and c1/c2 < b1/b2 < a1/|a2|");
    }
    return mode_P(params, lambda_j) > 0.0;
}

double gronwall_bound(double y0, double a, double b) {
    if (!(a > 0.0)) raise(ErrorCode::InvalidArgument, "gronwall rate a must be positive");
    return std::max(y0 + b, b / a + 2.0 * b);
}

}  // namespace coopflux
