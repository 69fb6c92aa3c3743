#pragma once

// Cell-centered finite volumes on an interval or a rectangle with zero-flux
// boundaries, plus the discrete operators and norms used everywhere else.

#include <array>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "coopflux/model_core.hpp"

namespace coopflux {

using SparseMatrix = Eigen::SparseMatrix<double>;

class Grid {
public:
    Grid() = default;
    /// 1D interval (0, length) with `cells` cells.
    static Grid interval(double length, int cells);
    /// 2D rectangle (0, lx) × (0, ly).
    static Grid rectangle(double lx, double ly, int nx, int ny);

    int dim() const { return dim_; }
    double length(int axis) const { return lengths_[axis]; }
    int cells(int axis) const { return cells_[axis]; }
    double spacing(int axis) const { return lengths_[axis] / cells_[axis]; }
    int cell_count() const { return cells_[0] * (dim_ == 2 ? cells_[1] : 1); }
    double cell_volume() const;
    double domain_volume() const;

    int index(int ix, int iy = 0) const { return ix + cells_[0] * iy; }
    std::array<double, 2> center(int cell) const;

    bool operator==(const Grid& other) const = default;

private:
    Grid(int dim, std::array<double, 2> lengths, std::array<int, 2> cells);

    int dim_ = 1;
    std::array<double, 2> lengths_{1.0, 1.0};
    std::array<int, 2> cells_{4, 1};
};

/// A scalar cell field. Values are plain Eigen storage so callers can use the
/// usual vector algebra on them.
struct Field {
    Grid grid;
    Eigen::VectorXd values;

    Field() = default;
    explicit Field(const Grid& g, double fill = 0.0);
    Field(const Grid& g, Eigen::VectorXd v);

    double operator[](int i) const { return values[i]; }
    double& operator[](int i) { return values[i]; }
    int size() const { return static_cast<int>(values.size()); }
};

/// Samples f(x, y) at cell centers.
template <typename Fn>
Field sample(const Grid& grid, Fn&& f) {
    Field out(grid);
    for (int c = 0; c < grid.cell_count(); ++c) {
        const auto x = grid.center(c);
        out[c] = f(x[0], x[1]);
    }
    return out;
}

struct EigenPair {
    std::array<int, 2> index{0, 0};
    double lambda = 0.0;
    Field phi;
};

/// First `count` Neumann eigenpairs of −Δ, ascending with multiplicity, the
/// eigenfunctions sampled at cell centers and renormalized in the discrete L².
std::vector<EigenPair> neumann_eigenpairs_analytic(const Grid& grid, int count);

/// Second-difference Laplacian with mirrored ghost cells.
Field apply_laplacian(const Field& f);
SparseMatrix laplacian_matrix(const Grid& grid);

/// Conservative diffusion operators of both equations,
/// ∇·(A(u, v)∇(u, v)) with face coefficients arithmetically averaged.
/// Throws NegativeDensity when an entry is below −1e-12.
std::pair<Field, Field> apply_flux_divergence(const Field& u, const Field& v, const ModelParams& params);

/// Matrix of the diffusion operator with A(u, v) frozen at (u, v); acts on
/// the stacked vector [u; v].
SparseMatrix frozen_flux_matrix(const Field& u, const Field& v, const ModelParams& params);

/// Exact derivative of apply_flux_divergence with respect to [u; v].
SparseMatrix flux_jacobian(const Field& u, const Field& v, const ModelParams& params);

struct Norms {
    double linf = 0.0;
    double l1 = 0.0;
    double l2 = 0.0;
    double l4 = 0.0;
    /// ‖∇f‖⁴ in L⁴.
    double w14_seminorm4 = 0.0;
};

Norms norms(const Field& f);
double l2_norm(const Field& f);
double integral(const Field& f);
double inner(const Field& f, const Field& g);
/// ∫|f|³.
double l3_cubed(const Field& f);

/// Smallest `count` eigenvalues of −Δ_h by shifted inverse subspace
/// iteration with locking. Throws ConvergenceFailure.
std::vector<double> discrete_eigenvalues(int count, const Grid& grid, int max_iterations = 2000);

void require_same_grid(const Field& a, const Field& b);

/// Snapshot text format: `# dim`, `# lengths`, `# cells`, `# t` header lines,
/// then `x[,y],u,v` per cell.
struct Snapshot {
    double t = 0.0;
    Field u;
    Field v;
};

void write_snapshot(std::ostream& os, const Snapshot& snap);
Snapshot read_snapshot(std::istream& is);
void write_snapshot_file(const std::string& path, const Snapshot& snap);
Snapshot read_snapshot_file(const std::string& path);

}  // namespace coopflux
