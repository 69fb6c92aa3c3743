#include "coopflux/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include <Eigen/SparseLU>

#include "coopflux/errors.hpp"

namespace coopflux {

Field State::w(double gamma) const {
    require_same_grid(u, v);
    return Field(u.grid, u.values + gamma * v.values);
}

// ---------------------------------------------------------------- diagnostics

DiagnosticsContext DiagnosticsContext::from_initial(const ModelParams& params, const State& initial,
                                                    double absorbing_epsilon) {
    DiagnosticsContext ctx;
    ctx.params = params;
    ctx.derived = derive(params, absorbing_epsilon);
    ctx.xi0 = norms(initial.w(ctx.derived.gamma)).linf;
    return ctx;
}

DiagnosticsRecord compute_diagnostics(const State& state, const DiagnosticsContext& ctx) {
    const ModelParams& p = ctx.params;
    const DerivedQuantities& dq = ctx.derived;
    const double gamma = dq.gamma;
    const bool equal_diffusion = p.d1 == p.d2;
    const double vol = state.grid().cell_volume();

    DiagnosticsRecord rec;
    rec.t = state.t;
    const Field w = state.w(gamma);
    const Norms nu = norms(state.u);
    const Norms nv = norms(state.v);
    rec.linf_u = nu.linf;
    rec.linf_v = nv.linf;
    rec.linf_w = norms(w).linf;
    rec.y_w14 = nu.w14_seminorm4 + nv.w14_seminorm4;
    rec.mass_u = integral(state.u);
    rec.mass_v = integral(state.v);
    rec.l3_lap_w_cubed = l3_cubed(apply_laplacian(w));

    if (dq.weaker_condition) {
        rec.xi_t = logistic_xi(state.t, ctx.xi0, p);
        if (equal_diffusion) rec.comparison_ok = rec.linf_w <= *rec.xi_t * (1.0 + ctx.comparison_slack);
    }
    if (dq.K && equal_diffusion) {
        rec.absorbing_ok = rec.linf_u + gamma * rec.linf_v <= *dq.K * (1.0 + ctx.absorbing_slack);
    }

    if (dq.has_coexistence()) {
        const auto [us, vs] = dq.coexistence();
        const auto& u = state.u.values;
        const auto& v = state.v.values;
        rec.distance_D = ((u.array() - us).square().sum() + (v.array() - vs).square().sum()) * vol;

        const bool positive = u.minCoeff() > 0.0 && v.minCoeff() > 0.0;
        if (positive) {
            double F = 0.0;
            for (int i = 0; i < u.size(); ++i) F += entropy_H(u[i], us) + gamma * entropy_H(v[i], vs);
            rec.lyapunov_F = F * vol;
        } else {
            rec.F_overflow = true;
        }

        if (equal_diffusion) {
            const double d = p.d1;
            double min_det = std::numeric_limits<double>::infinity();
            for (int i = 0; i < u.size(); ++i) {
                const double off = p.alpha * (us * v[i] + vs * u[i]) / 2.0;
                const double det = us * (d + p.alpha * v[i]) * vs * (gamma * d + p.alpha * u[i]) - off * off;
                min_det = std::min(min_det, det);
            }
            rec.B_posdef_min = min_det;
        }
    }
    return rec;
}

const std::vector<std::string>& diagnostics_columns() {
    static const std::vector<std::string> cols = {
        "t",          "dt",         "linf_u",         "linf_v",       "linf_w",        "xi_t",
        "lyapunov_F", "distance_D", "y_w14",          "mass_u",       "mass_v",        "l3_lap_w_cubed",
        "B_posdef_min", "comparison_ok", "absorbing_ok", "F_overflow"};
    return cols;
}

void write_diagnostics_header(std::ostream& os) {
    const auto& cols = diagnostics_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << '\n';
}

namespace {

void put(std::ostream& os, const std::optional<double>& x) {
    if (x) {
        os << *x;
    } else {
        os << "NA";
    }
}

void put(std::ostream& os, const std::optional<bool>& x) {
    if (x) {
        os << (*x ? 1 : 0);
    } else {
        os << "NA";
    }
}

std::optional<double> get_double(const std::string& tok) {
    if (tok == "NA") return std::nullopt;
    return std::stod(tok);
}

std::optional<bool> get_bool(const std::string& tok) {
    if (tok == "NA") return std::nullopt;
    return tok == "1";
}

}  // namespace

void write_diagnostics_row(std::ostream& os, const DiagnosticsRecord& r) {
    const auto old_precision = os.precision(17);
    os << r.t << ',' << r.dt << ',' << r.linf_u << ',' << r.linf_v << ',' << r.linf_w << ',';
    put(os, r.xi_t);
    os << ',';
    put(os, r.lyapunov_F);
    os << ',';
    put(os, r.distance_D);
    os << ',' << r.y_w14 << ',' << r.mass_u << ',' << r.mass_v << ',' << r.l3_lap_w_cubed << ',';
    put(os, r.B_posdef_min);
    os << ',';
    put(os, r.comparison_ok);
    os << ',';
    put(os, r.absorbing_ok);
    os << ',' << (r.F_overflow ? 1 : 0) << '\n';
    os.precision(old_precision);
}

std::vector<DiagnosticsRecord> read_diagnostics(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) raise(ErrorCode::IoError, "empty diagnostics stream");
    std::vector<DiagnosticsRecord> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> tok;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ',')) tok.push_back(item);
        if (tok.size() != diagnostics_columns().size()) raise(ErrorCode::IoError, "bad diagnostics row: " + line);
        DiagnosticsRecord r;
        r.t = std::stod(tok[0]);
        r.dt = std::stod(tok[1]);
        r.linf_u = std::stod(tok[2]);
        r.linf_v = std::stod(tok[3]);
        r.linf_w = std::stod(tok[4]);
        r.xi_t = get_double(tok[5]);
        r.lyapunov_F = get_double(tok[6]);
        r.distance_D = get_double(tok[7]);
        r.y_w14 = std::stod(tok[8]);
        r.mass_u = std::stod(tok[9]);
        r.mass_v = std::stod(tok[10]);
        r.l3_lap_w_cubed = std::stod(tok[11]);
        r.B_posdef_min = get_double(tok[12]);
        r.comparison_ok = get_bool(tok[13]);
        r.absorbing_ok = get_bool(tok[14]);
        r.F_overflow = tok[15] == "1";
        out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------- initial states

State make_initial_state(const InitialCondition& ic, const Grid& grid, const ModelParams& params) {
    State s{0.0, Field(grid), Field(grid)};
    switch (ic.kind) {
        case InitialKind::constant:
            if (!ic.u || !ic.v) raise(ErrorCode::InvalidArgument, "constant initial data needs u and v");
            s.u.values.setConstant(*ic.u);
            s.v.values.setConstant(*ic.v);
            break;
        case InitialKind::eigenmode: {
            double ub = 0.0, vb = 0.0;
            if (ic.u && ic.v) {
                ub = *ic.u;
                vb = *ic.v;
            } else {
                auto uv = coexistence_state(params);
                if (!uv) raise(ErrorCode::NoCoexistence, "eigenmode perturbation needs a base state");
                std::tie(ub, vb) = *uv;
            }
            if (ic.mode < 0 || ic.mode >= grid.cell_count()) raise(ErrorCode::InvalidArgument, "mode out of range");
            const auto modes = neumann_eigenpairs_analytic(grid, ic.mode + 1);
            const Field& phi = modes.at(ic.mode).phi;
            s.u.values = Eigen::VectorXd::Constant(grid.cell_count(), ub) + ic.amplitude * phi.values;
            s.v.values = Eigen::VectorXd::Constant(grid.cell_count(), vb) + ic.amplitude * phi.values;
            break;
        }
        case InitialKind::random: {
            std::mt19937_64 rng(ic.seed);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            const double ub = ic.u.value_or(0.0);
            const double vb = ic.v.value_or(0.0);
            for (int i = 0; i < grid.cell_count(); ++i) s.u[i] = ub + ic.amplitude * unit(rng);
            for (int i = 0; i < grid.cell_count(); ++i) s.v[i] = vb + ic.amplitude * unit(rng);
            break;
        }
        case InitialKind::file: {
            Snapshot snap = read_snapshot_file(ic.path);
            if (!(snap.u.grid == grid)) raise(ErrorCode::GridMismatch, "initial snapshot grid differs from domain");
            s.u = std::move(snap.u);
            s.v = std::move(snap.v);
            break;
        }
    }
    if (s.u.values.minCoeff() < 0.0 || s.v.values.minCoeff() < 0.0) {
        raise(ErrorCode::InvalidArgument, "initial data must be nonnegative");
    }
    return s;
}

// --------------------------------------------------------------- stepping

void RunConfig::validate() const {
    params.validate();
    auto positive = [](double x) { return x > 0.0 && std::isfinite(x); };
    if (!positive(t_end)) raise(ErrorCode::InvalidArgument, "t_end must be positive");
    if (!positive(dt_init)) raise(ErrorCode::InvalidArgument, "dt_init must be positive");
    if (!positive(tolerance)) raise(ErrorCode::InvalidArgument, "tolerance must be positive");
    if (!positive(dt_max)) raise(ErrorCode::InvalidArgument, "dt_max must be positive");
    if (!(output_every >= 0.0)) raise(ErrorCode::InvalidArgument, "output_every must be nonnegative");
    if (!(snapshot_every >= 0.0)) raise(ErrorCode::InvalidArgument, "snapshot_every must be nonnegative");
    if (!positive(blowup_threshold)) raise(ErrorCode::InvalidArgument, "blowup threshold must be positive");
}

std::string to_string(RunOutcome outcome) {
    switch (outcome) {
        case RunOutcome::completed: return "completed";
        case RunOutcome::blow_up: return "blow_up";
        case RunOutcome::step_collapse: return "step_collapse";
    }
    return "completed";
}

State step(const State& state, double dt, const ModelParams& params, bool pure_diffusion) {
    if (!(dt > 0.0)) raise(ErrorCode::InvalidArgument, "dt must be positive");
    const int n = state.u.size();
    SparseMatrix system = -dt * frozen_flux_matrix(state.u, state.v, params);
    for (int i = 0; i < 2 * n; ++i) system.coeffRef(i, i) += 1.0;

    Eigen::VectorXd rhs(2 * n);
    rhs << state.u.values, state.v.values;
    if (!pure_diffusion) {
        for (int i = 0; i < n; ++i) {
            const auto r = reaction(params, state.u[i], state.v[i]);
            rhs[i] += dt * r[0];
            rhs[n + i] += dt * r[1];
        }
    }

    Eigen::SparseLU<SparseMatrix> lu;
    lu.compute(system);
    if (lu.info() != Eigen::Success) raise(ErrorCode::LinearSolveFailure, "IMEX system factorization failed");
    const Eigen::VectorXd x = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !x.allFinite()) {
        raise(ErrorCode::LinearSolveFailure, "IMEX solve produced non-finite values");
    }
    const double lowest = x.minCoeff();
    if (lowest < -kPositivityTolerance) {
        std::ostringstream os;
        os << "undershoot " << lowest << " at dt = " << dt;
        raise(ErrorCode::PositivityViolation, os.str());
    }
    State out{state.t + dt, Field(state.grid(), x.head(n)), Field(state.grid(), x.tail(n))};
    return out;
}

State integrate_fixed(const State& initial, double dt, double t_end, const ModelParams& params,
                      bool pure_diffusion) {
    State s = initial;
    const long steps = static_cast<long>(std::ceil((t_end - initial.t) / dt - 1e-9));
    for (long k = 0; k < steps; ++k) {
        const double h = std::min(dt, t_end - s.t);
        if (h <= 0.0) break;
        s = step(s, h, params, pure_diffusion);
    }
    s.t = t_end;
    return s;
}

RunResult run(const RunConfig& config, const RunObserver& observer) {
    config.validate();
    return run_from(config, make_initial_state(config.initial, config.grid, config.params), observer);
}

RunResult run_from(const RunConfig& config, const State& initial, const RunObserver& observer) {
    config.validate();
    const ModelParams& params = config.params;
    const DiagnosticsContext ctx = DiagnosticsContext::from_initial(params, initial, config.absorbing_epsilon);

    RunResult result;
    State s = initial;
    auto emit_record = [&](double dt) {
        DiagnosticsRecord rec = compute_diagnostics(s, ctx);
        rec.dt = dt;
        if (observer.on_record) observer.on_record(rec);
        result.records.push_back(std::move(rec));
    };
    auto emit_snapshot = [&] {
        if (observer.on_snapshot) observer.on_snapshot(Snapshot{s.t, s.u, s.v});
    };

    emit_record(0.0);
    if (config.snapshot_every > 0.0) emit_snapshot();

    const double eps_t = 1e-12 * config.t_end;
    const double dt_floor = config.dt_init * 1e-8;
    double dt = config.dt_init;
    double next_output = config.output_every > 0.0 ? config.output_every : config.t_end;
    double next_snapshot = config.snapshot_every > 0.0 ? config.snapshot_every : 2.0 * config.t_end;

    while (s.t < config.t_end - eps_t) {
        double h = std::min({dt, config.dt_max, config.t_end - s.t});
        if (config.output_every > 0.0) h = std::min(h, next_output - s.t);
        if (config.snapshot_every > 0.0) h = std::min(h, next_snapshot - s.t);
        const bool clipped = h < dt;

        State full, half;
        try {
            full = step(s, h, params, config.pure_diffusion);
            half = step(step(s, 0.5 * h, params, config.pure_diffusion), 0.5 * h, params,
                        config.pure_diffusion);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::PositivityViolation && e.code() != ErrorCode::LinearSolveFailure) throw;
            ++result.rejected_steps;
            dt = 0.5 * h;
            if (dt < dt_floor) {
                result.outcome = RunOutcome::step_collapse;
                result.halt_time = s.t;
                result.halt_reason = std::string("dt collapsed after ") + e.what();
                break;
            }
            continue;
        }

        double err = 0.0;
        for (int i = 0; i < half.u.size(); ++i) {
            err = std::max(err, std::abs(half.u[i] - full.u[i]) / (config.tolerance * (1.0 + std::abs(half.u[i]))));
            err = std::max(err, std::abs(half.v[i] - full.v[i]) / (config.tolerance * (1.0 + std::abs(half.v[i]))));
        }
        const double factor = 0.9 / std::sqrt(std::max(err, 1e-12));
        if (!(err <= 1.0)) {
            ++result.rejected_steps;
            dt = h * std::clamp(std::isfinite(factor) ? factor : 0.2, 0.2, 0.9);
            if (dt < dt_floor) {
                result.outcome = RunOutcome::step_collapse;
                result.halt_time = s.t;
                result.halt_reason = "dt collapsed under error control";
                break;
            }
            continue;
        }

        State next = half;
        if (config.extrapolate) {
            Eigen::VectorXd u = 2.0 * half.u.values - full.u.values;
            Eigen::VectorXd v = 2.0 * half.v.values - full.v.values;
            if (u.minCoeff() >= -kPositivityTolerance && v.minCoeff() >= -kPositivityTolerance) {
                next.u.values = std::move(u);
                next.v.values = std::move(v);
            }
        }
        next.t = s.t + h;
        if (std::abs(next.t - config.t_end) <= eps_t) next.t = config.t_end;
        s = std::move(next);
        ++result.accepted_steps;
        const double new_dt = h * std::min(2.0, factor);
        dt = clipped ? std::max(dt, new_dt) : new_dt;

        const double linf_sum = s.u.values.cwiseAbs().maxCoeff() + s.v.values.cwiseAbs().maxCoeff();
        if (!(linf_sum <= config.blowup_threshold)) {
            emit_record(h);
            result.outcome = RunOutcome::blow_up;
            result.halt_time = s.t;
            const bool u_dominates = s.u.values.cwiseAbs().maxCoeff() >= s.v.values.cwiseAbs().maxCoeff();
            std::ostringstream os;
            os << "linf_u + linf_v = " << linf_sum << " exceeds " << config.blowup_threshold
               << " (dominated by " << (u_dominates ? "linf_u" : "linf_v") << ")";
            result.halt_reason = os.str();
            break;
        }

        if (config.output_every <= 0.0) {
            emit_record(h);
        } else if (s.t >= next_output - eps_t || s.t >= config.t_end) {
            emit_record(h);
            while (next_output <= s.t + eps_t) next_output += config.output_every;
        }
        if (config.snapshot_every > 0.0 && s.t >= next_snapshot - eps_t) {
            emit_snapshot();
            while (next_snapshot <= s.t + eps_t) next_snapshot += config.snapshot_every;
        }
    }
    result.final_state = s;
    return result;
}

// ---------------------------------------------------------------- Gronwall

GronwallReport check_gronwall_series(const std::vector<DiagnosticsRecord>& records, double a, double window) {
    if (!(a > 0.0) || !(window > 0.0)) raise(ErrorCode::InvalidArgument, "gronwall check needs a > 0 and window > 0");
    if (records.size() < 3) raise(ErrorCode::InsufficientData, "need at least three records");
    const double t0 = records.front().t;
    const double t_last = records.back().t;
    if (t_last - t0 < 2.0 * window) raise(ErrorCode::InsufficientData, "records span fewer than two windows");

    GronwallReport rep;
    // Smallest C with dy/dt + a y ≤ C(‖Δw‖³ + 1) on the first window.
    for (std::size_t n = 0; n + 1 < records.size() && records[n + 1].t <= t0 + window; ++n) {
        const double dt = records[n + 1].t - records[n].t;
        if (dt <= 0.0) continue;
        const double lhs = (records[n + 1].y_w14 - records[n].y_w14) / dt + a * records[n].y_w14;
        rep.C = std::max(rep.C, lhs / (records[n].l3_lap_w_cubed + 1.0));
    }

    auto h = [&](std::size_t n) { return rep.C * (records[n].l3_lap_w_cubed + 1.0); };
    for (std::size_t k = 0; k < records.size() && records[k].t + window <= t_last; ++k) {
        const double t_end = records[k].t + window;
        double integral_h = 0.0;
        for (std::size_t n = k; n + 1 < records.size() && records[n].t < t_end; ++n) {
            const double ta = records[n].t;
            const double tb = std::min(records[n + 1].t, t_end);
            const double span = records[n + 1].t - ta;
            if (span <= 0.0) continue;
            const double frac = (tb - ta) / span;
            const double hb = h(n) + frac * (h(n + 1) - h(n));
            integral_h += 0.5 * (h(n) + hb) * (tb - ta);
        }
        rep.b = std::max(rep.b, integral_h);
    }

    rep.bound = gronwall_bound(records.front().y_w14, a, rep.b);
    for (const auto& r : records) rep.max_y = std::max(rep.max_y, r.y_w14);
    const double limit = 1.1 * rep.bound;
    rep.ok = rep.max_y <= limit;
    rep.margin = limit > 0.0 ? (limit - rep.max_y) / limit : (rep.ok ? 0.0 : -1.0);
    return rep;
}

}  // namespace coopflux
