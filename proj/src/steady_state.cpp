#include "coopflux/steady_state.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include "coopflux/errors.hpp"

namespace coopflux {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

using Vec = Eigen::VectorXd;
using ResidualFn = std::function<Vec(const Vec&, double)>;
using JacobianFn = std::function<SparseMatrix(const Vec&, double)>;

double weighted_norm(const Vec& r, double weight) { return std::sqrt(r.squaredNorm() * weight); }

// Norm of the rounding error expected when summing the terms of J·x.
double rounding_floor(const SparseMatrix& J, const Vec& x, double weight) {
    const Vec magnitude = SparseMatrix(J.cwiseAbs()) * x.cwiseAbs();
    return 2.0 * kEps * weighted_norm(magnitude, weight);
}

struct VectorNewtonResult {
    Vec x;
    int iterations = 0;
    std::vector<double> history;
    double tolerance_used = 0.0;
};

// Damped Newton on a vector problem whose iterates must stay positive.
VectorNewtonResult newton_vector(const std::function<Vec(const Vec&)>& residual,
                                 const std::function<SparseMatrix(const Vec&)>& jacobian, Vec x,
                                 double weight, const NewtonOptions& opt) {
    VectorNewtonResult out;
    Vec r = residual(x);
    double rn = weighted_norm(r, weight);
    out.history.push_back(rn);
    out.tolerance_used = opt.tolerance;
    for (int it = 0;; ++it) {
        if (rn < out.tolerance_used) {
            out.x = std::move(x);
            out.iterations = it;
            return out;
        }
        if (it >= opt.max_iterations) {
            std::ostringstream os;
            os << "no convergence after " << it << " iterations (residual " << rn << ")";
            raise(ErrorCode::NewtonDivergence, os.str());
        }
        const SparseMatrix J = jacobian(x);
        const double floor = rounding_floor(J, x, weight);
        Eigen::SparseLU<SparseMatrix> lu;
        lu.compute(J);
        if (lu.info() != Eigen::Success) raise(ErrorCode::SingularJacobian, "Jacobian factorization failed");
        const Vec dx = lu.solve(-r);
        if (lu.info() != Eigen::Success || !dx.allFinite()) {
            raise(ErrorCode::SingularJacobian, "Jacobian solve produced non-finite values");
        }
        double lambda = 1.0;
        bool accepted = false;
        for (int h = 0; h <= opt.max_halvings; ++h, lambda *= 0.5) {
            Vec trial = x + lambda * dx;
            if (trial.minCoeff() <= 0.0) continue;
            Vec r_trial = residual(trial);
            const double rn_trial = weighted_norm(r_trial, weight);
            if (rn_trial < (1.0 - 1e-4 * lambda) * rn || (opt.max_halvings == 0 && std::isfinite(rn_trial))) {
                // Poor contraction near the rounding level means we are done.
                if (rn_trial > 0.5 * rn && rn_trial < 10.0 * floor) {
                    out.tolerance_used = std::max(out.tolerance_used, rn_trial * (1.0 + 1e-12));
                }
                x = std::move(trial);
                r = std::move(r_trial);
                rn = rn_trial;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (rn < 10.0 * floor) {
                // Stagnation at the rounding level of the residual evaluation.
                out.tolerance_used = rn * (1.0 + 1e-12);
                continue;
            }
            std::ostringstream os;
            os << "damping failed at iteration " << it << " (residual " << rn << ")";
            raise(ErrorCode::NewtonDivergence, os.str());
        }
        out.history.push_back(rn);
    }
}

// Pseudo-arclength tracer for G(x, p) = 0 with a bordered Newton corrector.
struct ArcProblem {
    std::function<std::optional<Vec>(const Vec&, double)> residual;  // nullopt when inadmissible
    JacobianFn jacobian;
    ResidualFn dparam;
    double norm_weight = 1.0;    // residual norm weight
    double metric_weight = 1.0;  // state weight in the arclength metric
    double tolerance = 1e-10;
    int max_iterations = 12;
};

struct ArcPoint {
    Vec x;
    double p = 0.0;
    int iterations = 0;
    double residual = 0.0;
};

std::optional<ArcPoint> arc_correct(const ArcProblem& prob, const Vec& x_pred, double p_pred, const Vec& tx,
                                    double tp) {
    ArcPoint z{x_pred, p_pred, 0, 0.0};
    const int n = static_cast<int>(x_pred.size());
    double previous = std::numeric_limits<double>::infinity();
    for (int it = 0; it <= prob.max_iterations; ++it) {
        auto r = prob.residual(z.x, z.p);
        if (!r) return std::nullopt;
        const double rn = weighted_norm(*r, prob.norm_weight);
        const double constraint = prob.metric_weight * (z.x - x_pred).dot(tx) + (z.p - p_pred) * tp;
        const SparseMatrix J = prob.jacobian(z.x, z.p);
        const bool stalled = rn > 0.5 * previous && rn < 10.0 * rounding_floor(J, z.x, prob.norm_weight);
        if ((rn < prob.tolerance || stalled) && std::abs(constraint) < 1e-12) {
            z.iterations = it;
            z.residual = rn;
            return z;
        }
        previous = rn;
        if (it == prob.max_iterations) break;

        const Vec gp = prob.dparam(z.x, z.p);
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(J.nonZeros() + 2 * n + 1);
        for (int k = 0; k < J.outerSize(); ++k)
            for (SparseMatrix::InnerIterator itj(J, k); itj; ++itj) trips.emplace_back(itj.row(), itj.col(), itj.value());
        for (int i = 0; i < n; ++i) {
            if (gp[i] != 0.0) trips.emplace_back(i, n, gp[i]);
            if (tx[i] != 0.0) trips.emplace_back(n, i, prob.metric_weight * tx[i]);
        }
        trips.emplace_back(n, n, tp);
        SparseMatrix B(n + 1, n + 1);
        B.setFromTriplets(trips.begin(), trips.end());
        Eigen::SparseLU<SparseMatrix> lu;
        lu.compute(B);
        if (lu.info() != Eigen::Success) return std::nullopt;
        Vec rhs(n + 1);
        rhs << -*r, -constraint;
        const Vec dz = lu.solve(rhs);
        if (lu.info() != Eigen::Success || !dz.allFinite()) return std::nullopt;
        z.x += dz.head(n);
        z.p += dz[n];
    }
    return std::nullopt;
}

class ArcTracer {
public:
    ArcTracer(ArcProblem prob, ArcPoint start, Vec tx, double tp, double ds, double ds_min, double ds_max)
        : prob_(std::move(prob)), current_(std::move(start)), ds_(ds), ds_min_(ds_min), ds_max_(ds_max) {
        const double nrm = metric_norm(tx, tp);
        tx_ = tx / nrm;
        tp_ = tp / nrm;
    }

    // Advances one point; nullopt once the step size falls below ds_min.
    std::optional<ArcPoint> next() {
        while (ds_ >= ds_min_) {
            const Vec x_pred = current_.x + ds_ * tx_;
            const double p_pred = current_.p + ds_ * tp_;
            auto z = arc_correct(prob_, x_pred, p_pred, tx_, tp_);
            if (!z) {
                ds_ *= 0.5;
                easy_ = 0;
                continue;
            }
            const Vec dx = z->x - current_.x;
            const double dp = z->p - current_.p;
            const double dist = metric_norm(dx, dp);
            if (dist == 0.0) return std::nullopt;
            tx_ = dx / dist;
            tp_ = dp / dist;
            last_step_ = dist;
            current_ = *z;
            easy_ = z->iterations <= 3 ? easy_ + 1 : 0;
            if (easy_ >= 3) {
                ds_ = std::min(2.0 * ds_, ds_max_);
                easy_ = 0;
            }
            return current_;
        }
        return std::nullopt;
    }

    double last_step() const { return last_step_; }

private:
    double metric_norm(const Vec& x, double p) const {
        return std::sqrt(prob_.metric_weight * x.squaredNorm() + p * p);
    }

    ArcProblem prob_;
    ArcPoint current_;
    Vec tx_;
    double tp_ = 0.0;
    double ds_;
    double ds_min_;
    double ds_max_;
    int easy_ = 0;
    double last_step_ = 0.0;
};

Vec residual_vector(const Vec& x, const Grid& grid, double d, const ModelParams& params) {
    const auto [ru, rv] = stationary_residual(unstack(x, grid), d, params);
    Vec r(x.size());
    r << ru.values, rv.values;
    return r;
}

Vec laplacian_stacked(const Vec& x, const SparseMatrix& L) {
    const Eigen::Index n = L.rows();
    Vec out(x.size());
    out << L * x.head(n), L * x.tail(n);
    return out;
}

std::pair<Field, double> mode_on_grid(const Grid& grid, int mode) {
    if (mode < 1 || mode >= grid.cell_count()) raise(ErrorCode::InvalidArgument, "mode index out of range");
    auto pairs = neumann_eigenpairs_analytic(grid, mode + 1);
    Field phi = std::move(pairs.at(mode).phi);
    const double lambda_h = -inner(apply_laplacian(phi), phi);
    return {std::move(phi), lambda_h};
}

double null_ratio(const Eigen::Matrix2d& M) {
    // (1, κ) spans the kernel of the (singular) matrix M.
    if (M.row(0).norm() >= M.row(1).norm()) return -M(0, 0) / M(0, 1);
    return -M(1, 0) / M(1, 1);
}

}  // namespace

ModelParams with_equal_diffusion(const ModelParams& params, double d) {
    ModelParams p = params;
    p.d1 = d;
    p.d2 = d;
    return p;
}

Vec stack(const State& s) {
    Vec x(2 * s.u.size());
    x << s.u.values, s.v.values;
    return x;
}

State unstack(const Vec& x, const Grid& grid, double t) {
    const int n = grid.cell_count();
    if (x.size() != 2 * n) raise(ErrorCode::GridMismatch, "stacked vector length does not match grid");
    return State{t, Field(grid, x.head(n)), Field(grid, x.tail(n))};
}

std::pair<Field, Field> stationary_residual(const State& state, double d, const ModelParams& params) {
    const ModelParams p = with_equal_diffusion(params, d);
    auto [ru, rv] = apply_flux_divergence(state.u, state.v, p);
    for (int i = 0; i < ru.size(); ++i) {
        const auto r = reaction(p, state.u[i], state.v[i]);
        ru[i] += r[0];
        rv[i] += r[1];
    }
    return {std::move(ru), std::move(rv)};
}

double stationary_residual_norm(const State& state, double d, const ModelParams& params) {
    const auto [ru, rv] = stationary_residual(state, d, params);
    return std::hypot(l2_norm(ru), l2_norm(rv));
}

SparseMatrix stationary_jacobian(const State& state, double d, const ModelParams& params) {
    const ModelParams p = with_equal_diffusion(params, d);
    SparseMatrix J = flux_jacobian(state.u, state.v, p);
    const int n = state.u.size();
    for (int i = 0; i < n; ++i) {
        const Eigen::Matrix2d R = reaction_jacobian(p, state.u[i], state.v[i]);
        J.coeffRef(i, i) += R(0, 0);
        J.coeffRef(i, n + i) += R(0, 1);
        J.coeffRef(n + i, i) += R(1, 0);
        J.coeffRef(n + i, n + i) += R(1, 1);
    }
    J.makeCompressed();
    return J;
}

NewtonResult newton_solve(const State& initial, double d, const ModelParams& params, const NewtonOptions& options) {
    if (initial.u.values.minCoeff() <= 0.0 || initial.v.values.minCoeff() <= 0.0) {
        raise(ErrorCode::NegativeDensity, "Newton needs a positive initial state");
    }
    const Grid grid = initial.grid();
    auto res = newton_vector([&](const Vec& x) { return residual_vector(x, grid, d, params); },
                             [&](const Vec& x) { return stationary_jacobian(unstack(x, grid), d, params); },
                             stack(initial), grid.cell_volume(), options);
    NewtonResult out;
    out.state = unstack(res.x, grid, initial.t);
    out.iterations = res.iterations;
    out.residual_history = std::move(res.history);
    out.tolerance_used = res.tolerance_used;
    return out;
}

namespace {

std::vector<std::complex<double>> leading_eigenvalues(const SparseMatrix& J, double sigma, int count) {
    const int N = static_cast<int>(J.rows());
    count = std::min(count, N);
    auto by_real_part = [](const std::complex<double>& a, const std::complex<double>& b) {
        if (a.real() != b.real()) return a.real() > b.real();
        return a.imag() > b.imag();
    };
    if (N <= 256) {
        Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(J), false);
        std::vector<std::complex<double>> ev(es.eigenvalues().data(), es.eigenvalues().data() + N);
        std::sort(ev.begin(), ev.end(), by_real_part);
        ev.resize(count);
        return ev;
    }

    // Shift-invert Arnoldi with explicit restarts: eigenvalues of J nearest
    // σ (placed right of the spectrum) dominate (J − σI)^{-1}.
    SparseMatrix shifted = J;
    for (int i = 0; i < N; ++i) shifted.coeffRef(i, i) -= sigma;
    Eigen::SparseLU<SparseMatrix> lu;
    lu.compute(shifted);
    if (lu.info() != Eigen::Success) raise(ErrorCode::ConvergenceFailure, "shift-invert factorization failed");

    const int m = std::min(N - 1, std::max(4 * count, 40));
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Vec start(N);
    for (int i = 0; i < N; ++i) start[i] = dist(rng);
    start.normalize();

    for (int restart = 0; restart < 60; ++restart) {
        Eigen::MatrixXd V = Eigen::MatrixXd::Zero(N, m + 1);
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
        V.col(0) = start;
        int k_eff = m;
        bool breakdown = false;
        for (int k = 0; k < m; ++k) {
            Vec w = lu.solve(V.col(k));
            for (int pass = 0; pass < 2; ++pass) {
                const Vec coeff = V.leftCols(k + 1).transpose() * w;
                w -= V.leftCols(k + 1) * coeff;
                H.col(k).head(k + 1) += coeff;
            }
            H(k + 1, k) = w.norm();
            if (H(k + 1, k) < 1e-14 * H.col(k).head(k + 1).norm()) {
                k_eff = k + 1;
                breakdown = true;
                break;
            }
            V.col(k + 1) = w / H(k + 1, k);
        }
        Eigen::EigenSolver<Eigen::MatrixXd> es(H.topLeftCorner(k_eff, k_eff), true);
        const Eigen::VectorXcd theta = es.eigenvalues();
        const Eigen::MatrixXcd Y = es.eigenvectors();
        const double beta = breakdown ? 0.0 : H(k_eff, k_eff - 1);

        std::vector<int> order;
        for (int i = 0; i < k_eff; ++i)
            if (std::abs(theta[i]) > 1e-300) order.push_back(i);
        auto mu = [&](int i) { return sigma + 1.0 / theta[i]; };
        std::sort(order.begin(), order.end(), [&](int a, int b) { return by_real_part(mu(a), mu(b)); });
        const int wanted = std::min<int>(count, static_cast<int>(order.size()));

        bool converged = true;
        for (int q = 0; q < wanted; ++q) {
            const int i = order[q];
            const double resid = std::abs(beta * Y(k_eff - 1, i)) / Y.col(i).norm();
            const double err_mu = resid / std::norm(theta[i]);
            if (err_mu > 1e-9 * (1.0 + std::abs(mu(i)))) converged = false;
        }
        if (converged || breakdown) {
            std::vector<std::complex<double>> out;
            for (int q = 0; q < wanted; ++q) out.push_back(mu(order[q]));
            return out;
        }
        Eigen::VectorXcd combo = Eigen::VectorXcd::Zero(k_eff);
        for (int q = 0; q < wanted; ++q) combo += Y.col(order[q]) / Y.col(order[q]).norm();
        start = V.leftCols(k_eff) * combo.real();
        if (start.norm() == 0.0) start = V.col(0);
        start.normalize();
    }
    raise(ErrorCode::ConvergenceFailure, "shift-invert Arnoldi did not converge");
}

int count_unstable(const std::vector<std::complex<double>>& ev) {
    return static_cast<int>(std::count_if(ev.begin(), ev.end(), [](const auto& z) { return z.real() > 1e-8; }));
}

}  // namespace

std::vector<std::complex<double>> linear_stability(const State& state, double d, const ModelParams& params,
                                                   int count) {
    if (count < 1) raise(ErrorCode::InvalidArgument, "eigenvalue count must be positive");
    if (stationary_residual_norm(state, d, params) > 1e-8) {
        raise(ErrorCode::InvalidArgument, "linear stability needs a stationary state");
    }
    const SparseMatrix J = stationary_jacobian(state, d, params);
    double sigma = 0.0;
    const ModelParams p = with_equal_diffusion(params, d);
    for (int i = 0; i < state.u.size(); ++i) {
        const Eigen::Matrix2d R = reaction_jacobian(p, state.u[i], state.v[i]);
        sigma = std::max({sigma, std::abs(R(0, 0)) + std::abs(R(0, 1)), std::abs(R(1, 0)) + std::abs(R(1, 1))});
    }
    return leading_eigenvalues(J, sigma + 1.0, count);
}

double discrete_mode_eigenvalue(const Grid& grid, int mode) { return mode_on_grid(grid, mode).second; }

std::vector<std::array<std::complex<double>, 2>> constant_state_mode_spectra(const ModelParams& params,
                                                                             const Grid& grid, double d,
                                                                             int count) {
    std::vector<std::array<std::complex<double>, 2>> out;
    const auto pairs = neumann_eigenpairs_analytic(grid, count + 1);
    for (int m = 1; m < static_cast<int>(pairs.size()); ++m) {
        const double lambda_h = -inner(apply_laplacian(pairs[m].phi), pairs[m].phi);
        Eigen::EigenSolver<Eigen::Matrix2d> es(mode_matrix(params, d, lambda_h), false);
        out.push_back({es.eigenvalues()[0], es.eigenvalues()[1]});
    }
    return out;
}

double eigenmode_content(const State& state, const ModelParams& params, const Field& phi, double kappa) {
    auto uv = coexistence_state(params);
    if (!uv) raise(ErrorCode::NoCoexistence, "eigenmode content needs (u*, v*)");
    const Vec du = state.u.values.array() - uv->first;
    const Vec dv = state.v.values.array() - uv->second;
    const double dev = std::sqrt(du.squaredNorm() + dv.squaredNorm());
    if (dev == 0.0) return 0.0;
    const double dir = std::sqrt(1.0 + kappa * kappa) * phi.values.norm();
    return std::abs(du.dot(phi.values) + kappa * dv.dot(phi.values)) / (dir * dev);
}

Branch continue_branch(const ModelParams& params, const Grid& grid, int mode, double d_lo, double d_hi,
                       const ContinuationOptions& options) {
    params.validate();
    if (!check_hinpu(params)) {
        raise(ErrorCode::HypothesisNotMet, "continuation needs a2 < 0 < a1 and c1/c2 < b1/b2 < a1/|a2|");
    }
    if (!(d_lo > 0.0) || !(d_hi > d_lo)) raise(ErrorCode::InvalidArgument, "d range must satisfy 0 < lo < hi");
    const auto [us, vs] = *coexistence_state(params);
    const auto [phi, lambda_h] = mode_on_grid(grid, mode);

    Branch branch;
    branch.mode = mode;
    branch.lambda_h = lambda_h;
    const auto pairs = neumann_eigenpairs_analytic(grid, mode + 1);
    try {
        branch.analytic = mode_analysis(params, mode, pairs[mode].lambda);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::NoPositiveRoot) raise(ErrorCode::NotABifurcation, e.what());
        throw;
    }

    // Sign change of the grid-consistent mode determinant along d.
    const auto c = mode_determinant_coefficients(params, lambda_h);
    auto det = [&](double d) { return c[2] + d * (c[1] + d * c[0]); };
    const int scan = std::max(options.scan_points, 2);
    double lo = 0.0, hi = 0.0;
    bool found = false;
    for (int k = 0; k + 1 < scan && !found; ++k) {
        const double da = d_lo + (d_hi - d_lo) * k / (scan - 1);
        const double db = d_lo + (d_hi - d_lo) * (k + 1) / (scan - 1);
        if ((det(da) < 0.0) != (det(db) < 0.0)) {
            lo = da;
            hi = db;
            found = true;
        }
    }
    if (!found) {
        std::ostringstream os;
        os << "mode " << mode << " determinant has no sign change in [" << d_lo << ", " << d_hi << "]";
        raise(ErrorCode::NotABifurcation, os.str());
    }
    const bool lo_negative = det(lo) < 0.0;
    for (int it = 0; it < 200 && hi - lo > 4.0 * kEps * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        ((det(mid) < 0.0) == lo_negative ? lo : hi) = mid;
    }
    branch.d_star = 0.5 * (lo + hi);
    branch.kappa_h = null_ratio(-mode_matrix(params, branch.d_star, lambda_h));

    const State trivial{0.0, Field(grid, us), Field(grid, vs)};
    {
        auto sign_at = [&](double d) {
            Eigen::SparseLU<SparseMatrix> lu;
            lu.compute(stationary_jacobian(trivial, d, params));
            return lu.info() == Eigen::Success ? lu.signDeterminant() : 0.0;
        };
        const double below = sign_at(branch.d_star * (1.0 - 1e-4));
        const double above = sign_at(branch.d_star * (1.0 + 1e-4));
        branch.jacobian_sign_change = below * above < 0.0;
    }

    const double vol = grid.cell_volume();
    auto make_point = [&](const Vec& x, double d, double s) {
        BranchPoint bp;
        bp.d = d;
        bp.state = unstack(x, grid);
        bp.s = s;
        bp.l2_norm_u = l2_norm(bp.state.u);
        bp.l2_norm_v = l2_norm(bp.state.v);
        bp.residual_norm = stationary_residual_norm(bp.state, d, params);
        if (options.compute_stability) {
            bp.stability_index = count_unstable(linear_stability(bp.state, d, params, options.stability_count));
        }
        return bp;
    };

    Vec x0 = stack(trivial);
    branch.points.push_back(make_point(x0, branch.d_star, 0.0));

    const SparseMatrix L = laplacian_matrix(grid);
    ArcProblem prob;
    prob.residual = [&](const Vec& x, double d) -> std::optional<Vec> {
        if (x.minCoeff() <= 0.0 || !(d > 0.0)) return std::nullopt;
        return residual_vector(x, grid, d, params);
    };
    prob.jacobian = [&](const Vec& x, double d) { return stationary_jacobian(unstack(x, grid), d, params); };
    prob.dparam = [&](const Vec& x, double) { return laplacian_stacked(x, L); };
    prob.norm_weight = vol;
    prob.metric_weight = vol / grid.domain_volume();
    prob.tolerance = options.newton.tolerance;
    prob.max_iterations = options.newton.max_iterations;

    Vec tx(x0.size());
    tx << phi.values, branch.kappa_h * phi.values;
    ArcTracer tracer(prob, ArcPoint{x0, branch.d_star, 0, 0.0}, tx, 0.0, options.ds_init, options.ds_min,
                     options.ds_max);
    double s = 0.0;
    branch.termination = "max_points";
    while (static_cast<int>(branch.points.size()) < options.max_points) {
        auto z = tracer.next();
        if (!z) {
            branch.termination = "step_failure";
            break;
        }
        s += tracer.last_step();
        if (z->p < d_lo || z->p > d_hi) {
            branch.termination = "left_d_range";
            break;
        }
        // A closed loop shows up as the mode projection changing sign close
        // to the onset.
        const double projection = (z->x - x0).dot(tx);
        if (projection < 0.0 && std::abs(z->p - branch.d_star) < 0.05 * branch.d_star) {
            branch.termination = "returned_to_onset";
            break;
        }
        branch.points.push_back(make_point(z->x, z->p, s));
    }
    if (branch.points.size() < 2) {
        raise(ErrorCode::BranchLost, "no nonconstant point could be computed past the bifurcation");
    }
    return branch;
}

Field scalar_field_residual(const Field& v, double d, double xi_star, double v_star) {
    Field r = apply_laplacian(v);
    r.values *= d;
    r.values.array() += xi_star * v.values.array() * (v.values.array() - v_star);
    return r;
}

namespace {

struct ScalarSetup {
    double xi_star = 0.0;
    double v_star = 0.0;
    double tau_star = 0.0;
};

ScalarSetup scalar_setup(const ModelParams& params) {
    if (!check_hinpu(params)) {
        raise(ErrorCode::HypothesisNotMet, "scalar-field limit needs a2 < 0 < a1 and c1/c2 < b1/b2 < a1/|a2|");
    }
    const DerivedQuantities dq = derive(params);
    if (!(dq.gamma > *dq.A_ratio * *dq.tau_star)) {
        raise(ErrorCode::HypothesisNotMet, "scalar-field limit needs gamma > A * tau*");
    }
    return {*dq.xi_star, *dq.v_star, *dq.tau_star};
}

}  // namespace

Field scalar_field_solve(double d, const ModelParams& params, const Grid& grid, const ScalarFieldOptions& options) {
    if (!(d > 0.0)) raise(ErrorCode::InvalidArgument, "d must be positive");
    const ScalarSetup sf = scalar_setup(params);
    const auto [phi, lambda_h] = mode_on_grid(grid, options.mode);
    const SparseMatrix L = laplacian_matrix(grid);
    const double vol = grid.cell_volume();
    const int n = grid.cell_count();

    auto residual = [&](const Vec& v, double dd) -> Vec {
        return dd * (L * v) + (sf.xi_star * v.array() * (v.array() - sf.v_star)).matrix();
    };
    auto jacobian = [&](const Vec& v, double dd) {
        SparseMatrix J = dd * L;
        for (int i = 0; i < n; ++i) J.coeffRef(i, i) += sf.xi_star * (2.0 * v[i] - sf.v_star);
        return J;
    };
    auto solve_at = [&](const Vec& guess) {
        return newton_vector([&](const Vec& v) { return residual(v, d); },
                             [&](const Vec& v) { return jacobian(v, d); }, guess, vol, options.newton)
            .x;
    };

    const double d_onset = sf.xi_star * sf.v_star / lambda_h;
    const Vec constant = Vec::Constant(n, sf.v_star);
    if (d >= d_onset) return Field(grid, solve_at(constant + options.amplitude * phi.values));

    ArcProblem prob;
    prob.residual = [&](const Vec& v, double dd) -> std::optional<Vec> {
        if (v.minCoeff() <= 0.0 || !(dd > 0.0)) return std::nullopt;
        return residual(v, dd);
    };
    prob.jacobian = jacobian;
    prob.dparam = [&](const Vec& v, double) -> Vec { return L * v; };
    prob.norm_weight = vol;
    prob.metric_weight = vol / grid.domain_volume();
    prob.tolerance = options.newton.tolerance;

    ArcTracer tracer(prob, ArcPoint{constant, d_onset, 0, 0.0}, phi.values, 0.0, 1e-3, 1e-9, 5e-2);
    ArcPoint previous{constant, d_onset, 0, 0.0};
    for (int k = 0; k < 20000; ++k) {
        auto z = tracer.next();
        if (!z) raise(ErrorCode::NewtonDivergence, "scalar-field branch lost before reaching d");
        if (z->p <= d) {
            const double frac = (previous.p - d) / (previous.p - z->p);
            const Vec guess = previous.x + frac * (z->x - previous.x);
            return Field(grid, solve_at(guess));
        }
        previous = *z;
    }
    raise(ErrorCode::NewtonDivergence, "scalar-field branch did not reach d");
}

LimitStudyReport limit_study(const ModelParams& params_base, double gamma, const std::vector<double>& betas,
                             double d, const Grid& grid, const ScalarFieldOptions& options) {
    if (!(gamma > 0.0)) raise(ErrorCode::InvalidArgument, "gamma must be positive");
    if (betas.empty()) raise(ErrorCode::InvalidArgument, "beta list is empty");
    ModelParams unit = with_equal_diffusion(params_base, d);
    unit.alpha = gamma;
    unit.beta = 1.0;
    const ScalarSetup sf = scalar_setup(unit);

    LimitStudyReport rep;
    rep.tau_star = sf.tau_star;
    rep.xi_star = sf.xi_star;
    rep.v_star = sf.v_star;
    rep.scalar_limit = scalar_field_solve(d, unit, grid, options);
    const double us = sf.tau_star * sf.v_star;

    auto params_at = [&](double beta) {
        ModelParams p = unit;
        p.alpha = gamma * beta;
        p.beta = beta;
        return p;
    };

    std::vector<int> order(betas.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return betas[a] > betas[b]; });

    rep.rows.resize(betas.size());
    State guess{0.0, Field(grid, sf.tau_star * rep.scalar_limit.values), rep.scalar_limit};
    double guess_beta = std::numeric_limits<double>::infinity();
    NewtonOptions newton = options.newton;
    for (int idx : order) {
        LimitStudyRow& row = rep.rows[idx];
        row.beta = betas[idx];
        row.alpha = gamma * row.beta;
        try {
            State sol;
            try {
                sol = newton_solve(guess, d, params_at(row.beta), newton).state;
            } catch (const Error&) {
                if (!std::isfinite(guess_beta)) throw;
                // Natural continuation in log β from the last solved β.
                double b_from = guess_beta;
                State current = guess;
                double step = std::log(row.beta / b_from);
                int halvings = 0;
                while (b_from != row.beta) {
                    double b_try = b_from * std::exp(step);
                    if ((step < 0.0 && b_try < row.beta) || (step > 0.0 && b_try > row.beta)) b_try = row.beta;
                    try {
                        current = newton_solve(current, d, params_at(b_try), newton).state;
                        b_from = b_try;
                    } catch (const Error&) {
                        step *= 0.5;
                        if (++halvings > 40) throw;
                    }
                }
                sol = current;
            }
            row.solved = true;
            row.state = sol;
            const Vec ratio = sol.u.values.array() / sol.v.values.array();
            row.sup_ratio_deviation = (ratio.array() - sf.tau_star).abs().maxCoeff();
            row.v_residual = l2_norm(scalar_field_residual(sol.v, d, sf.xi_star, sf.v_star));
            row.deviation_from_constant = std::hypot(l2_norm(Field(grid, sol.u.values.array() - us)),
                                                     l2_norm(Field(grid, sol.v.values.array() - sf.v_star)));
            if (row.deviation_from_constant < 1e-6) {
                row.solved = false;
                row.error = "collapsed onto the constant state";
            }
            guess = sol;
            guess_beta = row.beta;
        } catch (const Error& e) {
            row.error = e.what();
        }
    }

    std::vector<int> ascending = order;
    std::reverse(ascending.begin(), ascending.end());
    rep.ratio_decreasing = true;
    rep.residual_decreasing = true;
    for (std::size_t k = 0; k < ascending.size(); ++k) {
        const auto& r = rep.rows[ascending[k]];
        if (!r.solved) {
            rep.ratio_decreasing = rep.residual_decreasing = false;
            continue;
        }
        if (k == 0) continue;
        const auto& prev = rep.rows[ascending[k - 1]];
        if (!(r.sup_ratio_deviation < prev.sup_ratio_deviation)) rep.ratio_decreasing = false;
        if (!(r.v_residual < prev.v_residual)) rep.residual_decreasing = false;
    }
    return rep;
}

}  // namespace coopflux
