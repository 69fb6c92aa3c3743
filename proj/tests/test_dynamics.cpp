#include <cmath>
#include <random>
#include <sstream>

#include "coopflux/dynamics.hpp"
#include "coopflux/errors.hpp"
#include "coopflux/oracles.hpp"
#include "doctest.h"

using namespace coopflux;

namespace {

ModelParams weak_set(double d) {
    ModelParams p;
    p.d1 = d;
    p.d2 = d;
    p.alpha = 1;
    p.beta = 1;
    p.a1 = 1;
    p.a2 = 1;
    p.b1 = 4;
    p.b2 = 1;
    p.c1 = 1;
    p.c2 = 3;
    return p;
}

RunConfig random_run(double d, int cells, double t_end, std::uint64_t seed) {
    RunConfig c;
    c.params = weak_set(d);
    c.grid = Grid::interval(1.0, cells);
    c.initial.kind = InitialKind::random;
    c.initial.u = 0.05;
    c.initial.v = 0.05;
    c.initial.amplitude = 2.4;
    c.initial.seed = seed;
    c.t_end = t_end;
    c.dt_init = 1e-4;
    c.tolerance = 1e-5;
    c.output_every = 0.0;
    c.dt_max = 0.05;
    return c;
}

State constant_state(const Grid& g, double u, double v) { return State{0.0, Field(g, u), Field(g, v)}; }

}  // namespace

TEST_CASE("equilibrium is a fixed point of the step") {
    const Grid g = Grid::interval(1.0, 32);
    const State s = constant_state(g, 4.0 / 11.0, 5.0 / 11.0);
    const State next = step(s, 0.1, weak_set(1.0));
    CHECK((next.u.values.array() - 4.0 / 11.0).abs().maxCoeff() < 1e-12);
    CHECK((next.v.values.array() - 5.0 / 11.0).abs().maxCoeff() < 1e-12);
    CHECK(next.t == doctest::Approx(0.1));
}

TEST_CASE("homogeneous data follow the reaction ODE") {
    RunConfig c;
    c.params = weak_set(1.0);
    c.grid = Grid::interval(1.0, 8);
    c.initial.kind = InitialKind::constant;
    c.initial.u = 1.2;
    c.initial.v = 0.1;
    c.t_end = 5.0;
    c.dt_init = 1e-4;
    c.tolerance = 1e-8;
    c.output_every = 1.0;
    const RunResult r = run(c);
    REQUIRE(r.outcome == RunOutcome::completed);
    const auto tr = oracles::ode_integrate(c.params, 1.2, 0.1, 5.0, 1e-4);
    CHECK(std::abs(r.final_state.u[3] - tr.states.back().u) < 1e-6);
    CHECK(std::abs(r.final_state.v[3] - tr.states.back().v) < 1e-6);
    CHECK((r.final_state.u.values.array() - r.final_state.u[0]).abs().maxCoeff() < 1e-12);
}

TEST_CASE("single step has first-order local error against the ODE") {
    const Grid g = Grid::interval(1.0, 4);
    const ModelParams p = weak_set(1.0);
    std::vector<double> err;
    for (double dt : {0.02, 0.01, 0.005}) {
        const State s = step(constant_state(g, 1.0, 0.3), dt, p);
        const auto tr = oracles::ode_integrate(p, 1.0, 0.3, dt, dt / 100);
        err.push_back(std::abs(s.u[0] - tr.states.back().u) + std::abs(s.v[0] - tr.states.back().v));
    }
    // Local error O(dt²).
    CHECK(std::log2(err[0] / err[1]) == doctest::Approx(2.0).epsilon(0.1));
    CHECK(std::log2(err[1] / err[2]) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("decaying growth rates shrink the sup norm every step") {
    ModelParams p = weak_set(0.5);
    p.a1 = -1;
    p.a2 = -1;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(0.0, 2.0);
    const Grid g = Grid::interval(1.0, 64);
    State s{0.0, Field(g), Field(g)};
    for (int i = 0; i < 64; ++i) {
        s.u[i] = dist(rng);
        s.v[i] = dist(rng);
    }
    double prev = norms(s.u).linf + norms(s.v).linf;
    for (int k = 0; k < 200; ++k) {
        s = step(s, 0.01, p);
        const double now = norms(s.u).linf + norms(s.v).linf;
        CHECK(now < prev);
        prev = now;
    }
}

TEST_CASE("pure diffusion conserves mass") {
    RunConfig c = random_run(0.7, 64, 1.0, 12);
    c.params.alpha = 3.0;
    c.params.beta = 0.5;
    c.pure_diffusion = true;
    c.grid = Grid::rectangle(1.0, 0.5, 24, 12);
    const RunResult r = run(c);
    REQUIRE(r.outcome == RunOutcome::completed);
    for (const auto& rec : r.records) {
        CHECK(std::abs(rec.mass_u - r.records.front().mass_u) < 1e-10);
        CHECK(std::abs(rec.mass_v - r.records.front().mass_v) < 1e-10);
    }
}

TEST_CASE("fixed-step self convergence is first order") {
    ModelParams p = weak_set(0.05);
    p.alpha = 0.5;
    const Grid g = Grid::interval(1.0, 32);
    const Field u = sample(g, [](double x, double) { return 0.5 + 0.3 * std::cos(M_PI * x); });
    const Field v = sample(g, [](double x, double) { return 0.6 + 0.2 * std::cos(2 * M_PI * x); });
    const State s0{0.0, u, v};
    std::vector<State> sol;
    for (double dt : {0.04, 0.02, 0.01, 0.005}) sol.push_back(integrate_fixed(s0, dt, 1.0, p));
    auto diff = [](const State& a, const State& b) {
        return (a.u.values - b.u.values).cwiseAbs().maxCoeff() + (a.v.values - b.v.values).cwiseAbs().maxCoeff();
    };
    const double q1 = std::log2(diff(sol[0], sol[1]) / diff(sol[1], sol[2]));
    const double q2 = std::log2(diff(sol[1], sol[2]) / diff(sol[2], sol[3]));
    CHECK(q1 >= 0.9);
    CHECK(q2 >= 0.9);
    CHECK(q2 <= 1.2);
}

TEST_CASE("diagnostics at simple states") {
    const ModelParams p = weak_set(2.0);
    const Grid g = Grid::interval(1.0, 16);
    const double us = 4.0 / 11.0, vs = 5.0 / 11.0;
    const State eq = constant_state(g, us, vs);
    const DiagnosticsContext ctx = DiagnosticsContext::from_initial(p, eq);
    const DiagnosticsRecord r = compute_diagnostics(eq, ctx);
    CHECK(*r.lyapunov_F == doctest::Approx(0.0));
    CHECK(*r.distance_D == 0.0);
    CHECK(r.y_w14 == 0.0);

    const State doubled = constant_state(g, 2 * us, vs);
    const DiagnosticsRecord r2 = compute_diagnostics(doubled, ctx);
    CHECK(*r2.lyapunov_F == doctest::Approx(us - us * std::log(2.0)).epsilon(1e-13));
    CHECK(*r2.distance_D == doctest::Approx(us * us).epsilon(1e-13));
    // Within the absorbing set at d ≥ d̄ the matrix B is positive definite.
    CHECK(*r2.B_posdef_min > 0.0);
    CHECK(*r2.absorbing_ok);

    State later = doubled;
    later.t = 0.7;
    const DiagnosticsRecord r3 = compute_diagnostics(later, ctx);
    CHECK(std::abs(*r3.xi_t - logistic_xi(0.7, ctx.xi0, p)) < 1e-12);

    State zero = eq;
    zero.u[2] = 0.0;
    CHECK(compute_diagnostics(zero, ctx).F_overflow);
}

TEST_CASE("diagnostics on a non-definite parameter set") {
    ModelParams p = weak_set(1.0);
    p.alpha = 2;
    p.a2 = -1;
    p.b2 = 5;
    p.c1 = 2;
    const Grid g = Grid::interval(1.0, 8);
    const State s = constant_state(g, 0.4, 0.6);
    const DiagnosticsRecord r = compute_diagnostics(s, DiagnosticsContext::from_initial(p, s));
    CHECK_FALSE(r.xi_t.has_value());
    CHECK_FALSE(r.comparison_ok.has_value());
    CHECK_FALSE(r.absorbing_ok.has_value());
    CHECK(r.distance_D.has_value());
}

TEST_CASE("comparison and absorbing bounds along a run") {
    const RunResult r = run(random_run(1.0, 64, 10.0, 4));
    REQUIRE(r.outcome == RunOutcome::completed);
    bool entered = false;
    for (const auto& rec : r.records) {
        CHECK(*rec.comparison_ok);
        if (*rec.absorbing_ok) entered = true;
        else CHECK_FALSE(entered);
        CHECK(norms(r.final_state.u).linf >= 0.0);
    }
    CHECK(entered);
    CHECK(r.final_state.u.values.minCoeff() >= -kPositivityTolerance);
    CHECK(r.final_state.v.values.minCoeff() >= -kPositivityTolerance);
}

TEST_CASE("entropy decays at large diffusion") {
    const RunResult r = run(random_run(2.0, 64, 20.0, 5));
    REQUIRE(r.outcome == RunOutcome::completed);
    for (std::size_t k = 1; k < r.records.size(); ++k) {
        CHECK(*r.records[k].lyapunov_F <= *r.records[k - 1].lyapunov_F + 1e-10);
    }
    CHECK(*r.records.back().distance_D < 1e-8);
}

TEST_CASE("runs are deterministic and the diagnostics stream round trips") {
    RunConfig c = random_run(1.0, 32, 1.0, 99);
    c.output_every = 0.1;
    std::ostringstream a, b;
    for (auto* os : {&a, &b}) {
        write_diagnostics_header(*os);
        const RunResult r = run(c, {[&](const DiagnosticsRecord& rec) { write_diagnostics_row(*os, rec); }, {}});
        CHECK(r.records.size() == 11);
    }
    CHECK(a.str() == b.str());
    std::istringstream in(a.str());
    const auto recs = read_diagnostics(in);
    REQUIRE(recs.size() == 11);
    std::ostringstream again;
    write_diagnostics_header(again);
    for (const auto& rec : recs) write_diagnostics_row(again, rec);
    CHECK(again.str() == a.str());
    CHECK(recs[5].t == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("different seeds give different data") {
    const Grid g = Grid::interval(1.0, 16);
    InitialCondition ic;
    ic.kind = InitialKind::random;
    ic.u = 0.0;
    ic.v = 0.0;
    ic.amplitude = 1.0;
    ic.seed = 1;
    const State a = make_initial_state(ic, g, weak_set(1.0));
    ic.seed = 2;
    const State b = make_initial_state(ic, g, weak_set(1.0));
    CHECK(a.u.values != b.u.values);
    CHECK(a.u.values.minCoeff() >= 0.0);
    CHECK(a.u.values.maxCoeff() < 1.0);
}

TEST_CASE("snapshots are emitted at the requested times") {
    RunConfig c = random_run(1.0, 16, 1.0, 1);
    c.snapshot_every = 0.25;
    std::vector<double> times;
    run(c, {{}, [&](const Snapshot& s) { times.push_back(s.t); }});
    REQUIRE(times.size() == 5);
    for (int k = 0; k < 5; ++k) CHECK(times[k] == doctest::Approx(0.25 * k));
}

TEST_CASE("strong cooperation blows up on homogeneous data") {
    RunConfig c;
    c.params.a1 = 1;
    c.params.a2 = 1;
    c.params.b1 = 1;
    c.params.b2 = 3;
    c.params.c1 = 3;
    c.params.c2 = 1;
    c.params.alpha = 1;
    c.params.beta = 1;
    c.grid = Grid::interval(1.0, 8);
    c.initial.kind = InitialKind::constant;
    c.initial.u = 1.0;
    c.initial.v = 1.0;
    c.t_end = 2.0;
    c.dt_init = 1e-3;
    c.tolerance = 1e-6;
    const RunResult r = run(c);
    CHECK(r.outcome == RunOutcome::blow_up);
    CHECK(r.halt_time == doctest::Approx(std::log(1.5)).epsilon(0.05));
    CHECK(r.halt_reason.find("exceeds") != std::string::npos);
}

TEST_CASE("run configuration validation") {
    RunConfig c = random_run(1.0, 16, 1.0, 1);
    c.t_end = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = random_run(1.0, 16, 1.0, 1);
    c.initial.u = -1.0;
    CHECK_THROWS_AS(run(c), Error);
}

TEST_CASE("gronwall check") {
    // Constant state: y ≡ 0 and the bound holds trivially.
    std::vector<DiagnosticsRecord> flat(30);
    for (int k = 0; k < 30; ++k) flat[k].t = 0.1 * k;
    const GronwallReport rf = check_gronwall_series(flat, 1.0);
    CHECK(rf.ok);
    CHECK(rf.max_y == 0.0);

    const RunResult r = run(random_run(1.0, 64, 5.0, 2));
    const GronwallReport rr = check_gronwall_series(r.records, 1.0);
    CHECK(rr.ok);
    CHECK(rr.margin >= 0.0);

    // Synthetic series that decays on the first window and then explodes.
    std::vector<DiagnosticsRecord> bad(40);
    for (int k = 0; k < 40; ++k) {
        bad[k].t = 0.1 * k;
        bad[k].y_w14 = bad[k].t <= 1.0 ? std::exp(-bad[k].t) : 1e3 * bad[k].t;
    }
    const GronwallReport rb = check_gronwall_series(bad, 1.0);
    CHECK_FALSE(rb.ok);
    CHECK(rb.margin < 0.0);
    CHECK_THROWS_AS(check_gronwall_series(std::vector<DiagnosticsRecord>(2), 1.0), Error);
}
