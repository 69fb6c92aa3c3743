#include "coopflux/grid_ops.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/SparseCholesky>

#include "coopflux/errors.hpp"

namespace coopflux {

namespace {

constexpr double kNegativeTolerance = 1e-12;

// Visits every interior face as (P, Q, h, axis): Q is the neighbour of P in
// the positive direction of `axis` and h the spacing along it.
template <typename Fn>
void for_each_face(const Grid& g, Fn&& fn) {
    const int nx = g.cells(0);
    const int ny = g.dim() == 2 ? g.cells(1) : 1;
    const double hx = g.spacing(0);
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix + 1 < nx; ++ix) fn(g.index(ix, iy), g.index(ix + 1, iy), hx, 0);
    }
    if (g.dim() == 2) {
        const double hy = g.spacing(1);
        for (int iy = 0; iy + 1 < ny; ++iy) {
            for (int ix = 0; ix < nx; ++ix) fn(g.index(ix, iy), g.index(ix, iy + 1), hy, 1);
        }
    }
}

void check_nonnegative(const Field& f, const char* name) {
    for (int i = 0; i < f.size(); ++i) {
        if (f[i] < -kNegativeTolerance || !std::isfinite(f[i])) {
            std::ostringstream os;
            os << name << "[" << i << "] = " << f[i];
            raise(ErrorCode::NegativeDensity, os.str());
        }
    }
}

}  // namespace

Grid::Grid(int dim, std::array<double, 2> lengths, std::array<int, 2> cells)
    : dim_(dim), lengths_(lengths), cells_(cells) {
    for (int a = 0; a < dim_; ++a) {
        if (!(lengths_[a] > 0.0) || !std::isfinite(lengths_[a])) {
            raise(ErrorCode::InvalidArgument, "grid lengths must be positive");
        }
        if (cells_[a] < 4) raise(ErrorCode::InvalidArgument, "grid needs at least 4 cells per axis");
    }
}

Grid Grid::interval(double length, int cells) { return Grid(1, {length, 1.0}, {cells, 1}); }

Grid Grid::rectangle(double lx, double ly, int nx, int ny) { return Grid(2, {lx, ly}, {nx, ny}); }

double Grid::cell_volume() const {
    return dim_ == 2 ? spacing(0) * spacing(1) : spacing(0);
}

double Grid::domain_volume() const { return dim_ == 2 ? lengths_[0] * lengths_[1] : lengths_[0]; }

std::array<double, 2> Grid::center(int cell) const {
    const int ix = cell % cells_[0];
    const int iy = cell / cells_[0];
    return {(ix + 0.5) * spacing(0), dim_ == 2 ? (iy + 0.5) * spacing(1) : 0.0};
}

Field::Field(const Grid& g, double fill) : grid(g), values(Eigen::VectorXd::Constant(g.cell_count(), fill)) {}

Field::Field(const Grid& g, Eigen::VectorXd v) : grid(g), values(std::move(v)) {
    if (values.size() != g.cell_count()) raise(ErrorCode::GridMismatch, "field length does not match grid");
}

void require_same_grid(const Field& a, const Field& b) {
    if (!(a.grid == b.grid) || a.size() != b.size()) {
        raise(ErrorCode::GridMismatch, "fields live on different grids");
    }
}

std::vector<EigenPair> neumann_eigenpairs_analytic(const Grid& grid, int count) {
    if (count < 0) raise(ErrorCode::InvalidArgument, "eigenpair count must be nonnegative");
    const double pi = std::numbers::pi;
    std::vector<EigenPair> modes;
    const int jmax = grid.cells(0) - 1;
    const int kmax = grid.dim() == 2 ? grid.cells(1) - 1 : 0;
    std::vector<std::array<int, 2>> indices;
    for (int j = 0; j <= std::min(jmax, count); ++j) {
        for (int k = 0; k <= std::min(kmax, count); ++k) indices.push_back({j, k});
    }
    auto eigenvalue = [&](const std::array<int, 2>& jk) {
        const double ax = jk[0] * pi / grid.length(0);
        const double ay = grid.dim() == 2 ? jk[1] * pi / grid.length(1) : 0.0;
        return ax * ax + ay * ay;
    };
    std::stable_sort(indices.begin(), indices.end(), [&](const auto& a, const auto& b) {
        const double la = eigenvalue(a);
        const double lb = eigenvalue(b);
        if (la != lb) return la < lb;
        return a < b;
    });
    const int n = std::min<int>(count, static_cast<int>(indices.size()));
    modes.reserve(n);
    for (int m = 0; m < n; ++m) {
        const auto jk = indices[m];
        Field phi = sample(grid, [&](double x, double y) {
            double value = std::cos(jk[0] * pi * x / grid.length(0));
            if (grid.dim() == 2) value *= std::cos(jk[1] * pi * y / grid.length(1));
            return value;
        });
        phi.values /= l2_norm(phi);
        modes.push_back({jk, eigenvalue(jk), std::move(phi)});
    }
    return modes;
}

SparseMatrix laplacian_matrix(const Grid& grid) {
    const int n = grid.cell_count();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(5 * n);
    for_each_face(grid, [&](int P, int Q, double h, int) {
        const double w = 1.0 / (h * h);
        trips.emplace_back(P, Q, w);
        trips.emplace_back(P, P, -w);
        trips.emplace_back(Q, P, w);
        trips.emplace_back(Q, Q, -w);
    });
    SparseMatrix L(n, n);
    L.setFromTriplets(trips.begin(), trips.end());
    return L;
}

Field apply_laplacian(const Field& f) {
    Field out(f.grid);
    for_each_face(f.grid, [&](int P, int Q, double h, int) {
        const double flux = (f[Q] - f[P]) / (h * h);
        out[P] += flux;
        out[Q] -= flux;
    });
    return out;
}

std::pair<Field, Field> apply_flux_divergence(const Field& u, const Field& v, const ModelParams& p) {
    require_same_grid(u, v);
    check_nonnegative(u, "u");
    check_nonnegative(v, "v");
    Field du(u.grid);
    Field dv(u.grid);
    for_each_face(u.grid, [&](int P, int Q, double h, int) {
        const double inv = 1.0 / (h * h);
        // With face averages ū, v̄: (d1 + αv̄)δu − αū δv = d1 δu + α(v_P u_Q − u_P v_Q).
        const double fu = (p.d1 * (u[Q] - u[P]) + p.alpha * (v[P] * u[Q] - u[P] * v[Q])) * inv;
        const double fv = (p.d2 * (v[Q] - v[P]) + p.beta * (u[P] * v[Q] - v[P] * u[Q])) * inv;
        du[P] += fu;
        du[Q] -= fu;
        dv[P] += fv;
        dv[Q] -= fv;
    });
    return {std::move(du), std::move(dv)};
}

SparseMatrix frozen_flux_matrix(const Field& u, const Field& v, const ModelParams& p) {
    require_same_grid(u, v);
    const int n = u.size();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(20 * n);
    for_each_face(u.grid, [&](int P, int Q, double h, int) {
        const double inv = 1.0 / (h * h);
        const double ubar = 0.5 * (u[P] + u[Q]);
        const double vbar = 0.5 * (v[P] + v[Q]);
        // Face matrix A(ū, v̄) applied to the face differences of [u; v].
        const double a11 = (p.d1 + p.alpha * vbar) * inv;
        const double a12 = -p.alpha * ubar * inv;
        const double a21 = -p.beta * vbar * inv;
        const double a22 = (p.d2 + p.beta * ubar) * inv;
        const int uP = P, uQ = Q, vP = n + P, vQ = n + Q;
        auto add = [&](int row, int colP, int colQ, double a, double sign) {
            trips.emplace_back(row, colQ, sign * a);
            trips.emplace_back(row, colP, -sign * a);
        };
        add(uP, uP, uQ, a11, 1.0);
        add(uP, vP, vQ, a12, 1.0);
        add(uQ, uP, uQ, a11, -1.0);
        add(uQ, vP, vQ, a12, -1.0);
        add(vP, uP, uQ, a21, 1.0);
        add(vP, vP, vQ, a22, 1.0);
        add(vQ, uP, uQ, a21, -1.0);
        add(vQ, vP, vQ, a22, -1.0);
    });
    SparseMatrix M(2 * n, 2 * n);
    M.setFromTriplets(trips.begin(), trips.end());
    return M;
}

SparseMatrix flux_jacobian(const Field& u, const Field& v, const ModelParams& p) {
    require_same_grid(u, v);
    const int n = u.size();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(20 * n);
    for_each_face(u.grid, [&](int P, int Q, double h, int) {
        const double inv = 1.0 / (h * h);
        const int uP = P, uQ = Q, vP = n + P, vQ = n + Q;
        // Partial derivatives of the face fluxes fu, fv.
        const double fu_uP = (-p.d1 - p.alpha * v[Q]) * inv;
        const double fu_uQ = (p.d1 + p.alpha * v[P]) * inv;
        const double fu_vP = p.alpha * u[Q] * inv;
        const double fu_vQ = -p.alpha * u[P] * inv;
        const double fv_uP = p.beta * v[Q] * inv;
        const double fv_uQ = -p.beta * v[P] * inv;
        const double fv_vP = (-p.d2 - p.beta * u[Q]) * inv;
        const double fv_vQ = (p.d2 + p.beta * u[P]) * inv;
        for (double sign : {1.0, -1.0}) {
            const int ru = sign > 0 ? uP : uQ;
            const int rv = sign > 0 ? vP : vQ;
            trips.emplace_back(ru, uP, sign * fu_uP);
            trips.emplace_back(ru, uQ, sign * fu_uQ);
            trips.emplace_back(ru, vP, sign * fu_vP);
            trips.emplace_back(ru, vQ, sign * fu_vQ);
            trips.emplace_back(rv, uP, sign * fv_uP);
            trips.emplace_back(rv, uQ, sign * fv_uQ);
            trips.emplace_back(rv, vP, sign * fv_vP);
            trips.emplace_back(rv, vQ, sign * fv_vQ);
        }
    });
    SparseMatrix J(2 * n, 2 * n);
    J.setFromTriplets(trips.begin(), trips.end());
    return J;
}

double integral(const Field& f) { return f.values.sum() * f.grid.cell_volume(); }

double inner(const Field& f, const Field& g) {
    require_same_grid(f, g);
    return f.values.dot(g.values) * f.grid.cell_volume();
}

double l2_norm(const Field& f) { return std::sqrt(f.values.squaredNorm() * f.grid.cell_volume()); }

double l3_cubed(const Field& f) { return f.values.array().abs().cube().sum() * f.grid.cell_volume(); }

Norms norms(const Field& f) {
    const double vol = f.grid.cell_volume();
    const auto a = f.values.array().abs();
    Norms out;
    out.linf = f.size() ? a.maxCoeff() : 0.0;
    out.l1 = a.sum() * vol;
    out.l2 = std::sqrt(a.square().sum() * vol);
    out.l4 = std::pow(a.square().square().sum() * vol, 0.25);

    // Face differences averaged back to cells; boundary faces carry zero.
    Eigen::VectorXd gx = Eigen::VectorXd::Zero(f.size());
    Eigen::VectorXd gy = Eigen::VectorXd::Zero(f.size());
    for_each_face(f.grid, [&](int P, int Q, double h, int axis) {
        const double diff = 0.5 * (f[Q] - f[P]) / h;
        auto& g = axis == 0 ? gx : gy;
        g[P] += diff;
        g[Q] += diff;
    });
    out.w14_seminorm4 = (gx.array().square() + gy.array().square()).square().sum() * vol;
    return out;
}

std::vector<double> discrete_eigenvalues(int count, const Grid& grid, int max_iterations) {
    const int n = grid.cell_count();
    if (count < 0 || count > n) raise(ErrorCode::InvalidArgument, "eigenvalue count must lie in [0, cells]");
    if (count == 0) return {};
    const SparseMatrix M = -laplacian_matrix(grid);
    const int block = std::min(n, count + std::max(count, 8));

    if (block == n) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(M)};
        const Eigen::VectorXd ev = es.eigenvalues();
        return {ev.data(), ev.data() + count};
    }

    // Inverse subspace iteration on (M + I)^{-1} with Rayleigh-Ritz; the shift
    // keeps the factorized matrix positive definite because M ≥ 0.
    SparseMatrix shifted = M;
    for (int i = 0; i < n; ++i) shifted.coeffRef(i, i) += 1.0;
    Eigen::SimplicialLDLT<SparseMatrix> solver(shifted);
    if (solver.info() != Eigen::Success) raise(ErrorCode::ConvergenceFailure, "shifted Laplacian factorization failed");

    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Eigen::MatrixXd X(n, block);
    for (int c = 0; c < block; ++c)
        for (int r = 0; r < n; ++r) X(r, c) = dist(rng);

    double scale = 0.0;
    for (int a = 0; a < grid.dim(); ++a) scale += 4.0 / (grid.spacing(a) * grid.spacing(a));
    Eigen::VectorXd theta;
    for (int it = 0; it < max_iterations; ++it) {
        Eigen::MatrixXd Y = solver.solve(X);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(Y);
        Eigen::MatrixXd Qm = qr.householderQ() * Eigen::MatrixXd::Identity(n, block);
        Eigen::MatrixXd MQ = M * Qm;
        Eigen::MatrixXd H = Qm.transpose() * MQ;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()));
        X = Qm * es.eigenvectors();
        theta = es.eigenvalues();
        const Eigen::MatrixXd R = MQ * es.eigenvectors() - X * theta.asDiagonal();
        bool converged = true;
        for (int k = 0; k < count; ++k) {
            if (R.col(k).norm() > 1e-9 * scale) {
                converged = false;
                break;
            }
        }
        if (converged) {
            std::vector<double> out(theta.data(), theta.data() + count);
            return out;
        }
    }
    raise(ErrorCode::ConvergenceFailure, "inverse subspace iteration did not converge");
}

void write_snapshot(std::ostream& os, const Snapshot& snap) {
    require_same_grid(snap.u, snap.v);
    const Grid& g = snap.u.grid;
    os << std::setprecision(17);
    os << "# dim " << g.dim() << "\n# lengths";
    for (int a = 0; a < g.dim(); ++a) os << ' ' << g.length(a);
    os << "\n# cells";
    for (int a = 0; a < g.dim(); ++a) os << ' ' << g.cells(a);
    os << "\n# t " << snap.t << '\n';
    os << (g.dim() == 2 ? "x,y,u,v\n" : "x,u,v\n");
    for (int c = 0; c < g.cell_count(); ++c) {
        const auto x = g.center(c);
        os << x[0] << ',';
        if (g.dim() == 2) os << x[1] << ',';
        os << snap.u[c] << ',' << snap.v[c] << '\n';
    }
}

Snapshot read_snapshot(std::istream& is) {
    int dim = 0;
    std::array<double, 2> lengths{1.0, 1.0};
    std::array<int, 2> cells{1, 1};
    double t = 0.0;
    std::string line;
    int header_lines = 0;
    while (header_lines < 4 && std::getline(is, line)) {
        std::istringstream ls(line);
        std::string hash, key;
        ls >> hash >> key;
        if (hash != "#") raise(ErrorCode::IoError, "snapshot header expected, got: " + line);
        if (key == "dim") {
            ls >> dim;
        } else if (key == "lengths") {
            for (int a = 0; a < std::max(dim, 1); ++a) ls >> lengths[a];
        } else if (key == "cells") {
            for (int a = 0; a < std::max(dim, 1); ++a) ls >> cells[a];
        } else if (key == "t") {
            ls >> t;
        } else {
            raise(ErrorCode::IoError, "unknown snapshot header key: " + key);
        }
        if (ls.fail()) raise(ErrorCode::IoError, "malformed snapshot header: " + line);
        ++header_lines;
    }
    if (dim != 1 && dim != 2) raise(ErrorCode::IoError, "snapshot dim must be 1 or 2");
    const Grid grid = dim == 1 ? Grid::interval(lengths[0], cells[0])
                               : Grid::rectangle(lengths[0], lengths[1], cells[0], cells[1]);
    std::getline(is, line);  // column header
    Snapshot snap{t, Field(grid), Field(grid)};
    for (int c = 0; c < grid.cell_count(); ++c) {
        if (!std::getline(is, line)) raise(ErrorCode::IoError, "snapshot truncated");
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        double x = 0.0, y = 0.0;
        ls >> x;
        if (dim == 2) ls >> y;
        ls >> snap.u[c] >> snap.v[c];
        if (ls.fail()) raise(ErrorCode::IoError, "malformed snapshot row: " + line);
    }
    return snap;
}

void write_snapshot_file(const std::string& path, const Snapshot& snap) {
    std::ofstream os(path);
    if (!os) raise(ErrorCode::IoError, "cannot open " + path);
    write_snapshot(os, snap);
}

Snapshot read_snapshot_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) raise(ErrorCode::IoError, "cannot open " + path);
    return read_snapshot(is);
}

}  // namespace coopflux
