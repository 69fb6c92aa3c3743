#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "coopflux/cli_io.hpp"
#include "coopflux/errors.hpp"
#include "doctest.h"

using namespace coopflux;
using namespace coopflux::cli;
namespace fs = std::filesystem;

namespace {

const std::string kPatternSet = R"(params:
  d1: 0.05
  d2: 0.05
  alpha: 2
  beta: 1
  a1: 1
  a2: -1
  b1: 4
  b2: 5
  c1: 2
  c2: 3
domain:
  dim: 1
  lengths: [1.5707963267948966]
  cells: [64]
initial:
  kind: eigenmode
  mode: 1
  amplitude: 1.0e-3
time:
  t_end: 20
  dt_init: 1.0e-3
  tolerance: 1.0e-5
  output_every: 1
)";

const std::string kWeak = R"(params:
  d1: 2
  d2: 2
  alpha: 1
  beta: 1
  a1: 1
  a2: 1
  b1: 4
  b2: 1
  c1: 1
  c2: 3
domain:
  dim: 1
  lengths: [1]
  cells: [32]
initial:
  kind: random
  u: 0.05
  v: 0.05
  amplitude: 2.0
  seed: 7
time:
  t_end: 30
  dt_init: 1.0e-3
  tolerance: 1.0e-5
  output_every: 1
  dt_max: 0.1
)";

const std::string kStrong = R"(params: {d1: 1, d2: 1, alpha: 1, beta: 1, a1: 1, a2: 1, b1: 1, b2: 3, c1: 3, c2: 1}
domain: {dim: 1, lengths: [1], cells: [8]}
initial: {kind: constant, u: 1, v: 1}
time: {t_end: 2, dt_init: 1.0e-3, tolerance: 1.0e-6, output_every: 0.1}
)";

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("coopflux_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string write_text(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
    return p.string();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
    const auto pos = s.find(from);
    REQUIRE(pos != std::string::npos);
    return s.replace(pos, from.size(), to);
}

std::string config_error(const std::string& text) {
    try {
        parse_config(text, "cfg.yaml");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ConfigError);
        return e.what();
    }
    return "";
}

std::map<std::string, std::string> read_summary(const fs::path& p) {
    std::map<std::string, std::string> out;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) {
        const auto c = line.find(": ");
        if (c != std::string::npos) out[line.substr(0, c)] = line.substr(c + 2);
    }
    return out;
}

}  // namespace

TEST_CASE("config parsing") {
    const Config c = parse_config(kPatternSet);
    CHECK(c.run.params.alpha == 2.0);
    CHECK(c.run.params.a2 == -1.0);
    CHECK(c.run.grid.cells(0) == 64);
    CHECK(c.run.grid.length(0) == doctest::Approx(M_PI / 2));
    CHECK(c.run.initial.kind == InitialKind::eigenmode);
    CHECK(c.run.initial.amplitude == 1e-3);
    CHECK(c.run.t_end == 20.0);
    CHECK(c.output_directory == "out");

    const Config s = parse_config(kStrong);
    CHECK(s.run.initial.u == 1.0);
    CHECK(s.run.params.b2 == 3.0);
}

TEST_CASE("config errors name the key and line") {
    CHECK(config_error(replace(kWeak, "  b1: 4", "  b1: 0")).find("cfg.yaml:8:7: params.b1: must be positive") !=
          std::string::npos);
    CHECK(config_error(replace(kWeak, "  c2: 3\n", "  c2: 3\n  c3: 1\n")).find("12:3: params.c3: unknown key") !=
          std::string::npos);
    CHECK(config_error(replace(kWeak, "  d1: 2\n", "")).find("params.d1: missing value") != std::string::npos);
    CHECK(config_error(replace(kWeak, "t_end: 30", "t_end: -1")).find("time.t_end: must be positive") !=
          std::string::npos);
    CHECK(config_error(replace(kWeak, "cells: [32]", "cells: [2]")).find("domain.cells") != std::string::npos);
    CHECK(config_error(replace(kWeak, "kind: random", "kind: noise")).find("initial.kind") != std::string::npos);
    CHECK(config_error(kWeak + "extra: 1\n").find("extra: unknown key") != std::string::npos);
    CHECK(config_error(replace(kWeak, "alpha: 1", "alpha: one")).find("params.alpha: expected a number") !=
          std::string::npos);
    CHECK(config_error("params: [1, 2\n").find("cfg.yaml:") != std::string::npos);
}

TEST_CASE("config overrides") {
    const Config d = parse_config_with_override(kWeak, "d", 0.3);
    CHECK(d.run.params.d1 == 0.3);
    CHECK(d.run.params.d2 == 0.3);
    CHECK(parse_config_with_override(kWeak, "params.a1", 0.5).run.params.a1 == 0.5);
    CHECK(parse_config_with_override(kWeak, "time.t_end", 4).run.t_end == 4.0);
    CHECK(parse_config_with_override(kWeak, "blowup_threshold", 10).run.blowup_threshold == 10.0);
    CHECK_THROWS_AS(parse_config_with_override(kWeak, "params.zeta", 1), Error);
    CHECK_THROWS_AS(parse_config_with_override(kWeak, "initial.kind", 1), Error);
    CHECK_THROWS_AS(parse_config_with_override(kWeak, "bogus", 1), Error);
    CHECK_THROWS_AS(parse_config_with_override(kWeak, "params.b1", 0), Error);
}

TEST_CASE("regime report") {
    const Config f = parse_config(kPatternSet);
    std::ostringstream os;
    write_regime_report(os, f.run.params, f.run.grid, 3);
    const std::string r = os.str();
    CHECK(r.find("weaker_condition: fails") != std::string::npos);
    CHECK(r.find("case: ii") != std::string::npos);
    CHECK(r.find("gamma_vs_A_tau_star: 2 > 1") != std::string::npos);
    // Three rows at λ = 4, 16, 36 with decreasing onsets.
    std::istringstream in(r.substr(r.find("j,lambda_j")));
    std::string line;
    std::getline(in, line);
    std::vector<double> lambdas, onsets;
    while (std::getline(in, line)) {
        std::vector<std::string> tok;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) tok.push_back(cell);
        lambdas.push_back(std::stod(tok[1]));
        onsets.push_back(std::stod(tok[5]));
    }
    REQUIRE(lambdas.size() == 3);
    CHECK(lambdas[0] == doctest::Approx(4.0));
    CHECK(lambdas[1] == doctest::Approx(16.0));
    CHECK(lambdas[2] == doctest::Approx(36.0));
    CHECK(onsets[0] > onsets[1]);
    CHECK(onsets[1] > onsets[2]);

    std::ostringstream ws;
    const Config w = parse_config(kWeak);
    write_regime_report(ws, w.run.params, w.run.grid, 0);
    CHECK(ws.str().find("K: 1.679") != std::string::npos);
    CHECK(ws.str().find("d_bar: 1.6897") != std::string::npos);

    // Outside the mode-analysis region each row is still complete.
    std::ostringstream ms;
    write_regime_report(ms, w.run.params, w.run.grid, 2);
    const std::string m = ms.str();
    CHECK(m.find("1,9.869604401,-0.01185414536,9.984221783,NA,NA,no,skip:") != std::string::npos);
    CHECK(m.find("\n2,39.4784176,") != std::string::npos);
}

TEST_CASE("regime command exit codes") {
    const fs::path dir = scratch("regime");
    std::ostringstream out, err;
    CHECK(cmd_regime({write_text(dir / "ok.yaml", kPatternSet), {}, {}}, 3, out, err) == kSuccess);
    CHECK(cmd_regime({write_text(dir / "bad.yaml", replace(kWeak, "  b1: 4", "  b1: 0")), {}, {}}, 3, out, err) ==
          kConfigError);
    CHECK(err.str().find("params.b1") != std::string::npos);
    CHECK(cmd_regime({(dir / "missing.yaml").string(), {}, {}}, 3, out, err) == kConfigError);
}

TEST_CASE("branch export round trip") {
    BranchTable t;
    t.mode = 2;
    t.lambda_h = 15.99876543210123;
    t.d_star = 0.0168798123456789;
    t.rows = {{0.0, 0.0168798123456789, 0.62665706865775, 0.62665706865775, 1, 0.0},
              {1.0 / 3.0, 0.0165, 0.6229, 0.6102, 1, 3.1e-12},
              {0.7, 0.011, std::sqrt(0.3), 0.58, 0, 9.87654321e-11}};
    std::stringstream ss;
    write_branch(ss, t);
    CHECK(read_branch(ss) == t);
    std::stringstream plot;
    write_plot_data(plot, t);
    CHECK(plot.str().rfind("d,l2_norm_u\n", 0) == 0);
    std::stringstream bad("s,d,l2_norm_u,l2_norm_v,stability_index,residual_norm\n1,2,3\n");
    CHECK_THROWS_AS(read_branch(bad), Error);
}

TEST_CASE("argument parsing helpers") {
    CHECK(parse_d_range("0.01:0.2") == std::pair<double, double>(0.01, 0.2));
    CHECK_THROWS_AS(parse_d_range("0.2:0.2"), Error);
    CHECK_THROWS_AS(parse_d_range("0.3:0.2"), Error);
    CHECK_THROWS_AS(parse_d_range("0.2"), Error);
    CHECK_THROWS_AS(parse_d_range("a:b"), Error);
    CHECK(parse_modes("1-3") == std::vector<int>{1, 2, 3});
    CHECK(parse_modes("2,5") == std::vector<int>{2, 5});
    CHECK_THROWS_AS(parse_modes("0"), Error);
    CHECK(parse_values("0.03,0.05,1,2") == std::vector<double>{0.03, 0.05, 1, 2});
    CHECK_THROWS_AS(parse_values("1,x"), Error);
}

TEST_CASE("simulate converges at large diffusion") {
    const fs::path dir = scratch("simulate");
    std::ostringstream out, err;
    const int code = cmd_simulate({write_text(dir / "weak.yaml", kWeak), (dir / "run").string(), {}}, out, err);
    CHECK(code == kSuccess);
    CHECK(slurp(dir / "run" / "summary.txt").find("converged: D(t_end) < 1e-8") != std::string::npos);
    const auto s = read_summary(dir / "run" / "summary.txt");
    CHECK(s.at("comparison_held") == "true");
    CHECK(s.at("absorbing_held") == "true");
    CHECK(fs::exists(dir / "run" / "diagnostics.csv"));
}

TEST_CASE("simulate reports blow-up with its own exit code") {
    const fs::path dir = scratch("blowup");
    std::ostringstream out, err;
    const int code = cmd_simulate({write_text(dir / "strong.yaml", kStrong), (dir / "run").string(), {}}, out, err);
    CHECK(code == kBlowUp);
    const auto s = read_summary(dir / "run" / "summary.txt");
    CHECK(s.at("outcome") == "blow_up");
    CHECK(std::stod(s.at("halt_time")) == doctest::Approx(std::log(1.5)).epsilon(0.05));
}

TEST_CASE("pure diffusion drift and snapshots") {
    const fs::path dir = scratch("pure");
    const std::string cfg = kWeak + "pure_diffusion: true\noutput:\n  snapshot_every: 0.5\n";
    std::ostringstream out, err;
    const std::string path = write_text(dir / "pure.yaml", replace(cfg, "t_end: 30", "t_end: 1"));
    CHECK(cmd_simulate({path, (dir / "run").string(), {}}, out, err) == kSuccess);
    CHECK(std::stod(read_summary(dir / "run" / "summary.txt").at("mass_drift")) < 1e-10);
    CHECK(fs::exists(dir / "run" / "snapshots" / "snapshot_00002.dat"));
    const Snapshot snap = read_snapshot_file((dir / "run" / "snapshots" / "snapshot_00002.dat").string());
    CHECK(snap.t == doctest::Approx(1.0));
}

TEST_CASE("simulate is deterministic for a fixed seed") {
    const fs::path dir = scratch("determinism");
    const std::string path = write_text(dir / "weak.yaml", replace(kWeak, "t_end: 30", "t_end: 2"));
    std::ostringstream out, err;
    cmd_simulate({path, (dir / "a").string(), 5}, out, err);
    cmd_simulate({path, (dir / "b").string(), 5}, out, err);
    cmd_simulate({path, (dir / "c").string(), 6}, out, err);
    CHECK(slurp(dir / "a" / "diagnostics.csv") == slurp(dir / "b" / "diagnostics.csv"));
    CHECK(slurp(dir / "a" / "diagnostics.csv") != slurp(dir / "c" / "diagnostics.csv"));
}

TEST_CASE("initial data from a snapshot file") {
    const fs::path dir = scratch("file_init");
    const Config base = parse_config(kWeak);
    const State s0 = make_initial_state(base.run.initial, base.run.grid, base.run.params);
    write_snapshot_file((dir / "start.dat").string(), Snapshot{0.0, s0.u, s0.v});
    const std::string cfg = replace(kWeak, "  kind: random\n  u: 0.05\n  v: 0.05\n  amplitude: 2.0\n  seed: 7\n",
                                    "  kind: file\n  path: start.dat\n");
    const Config c = load_config(write_text(dir / "file.yaml", cfg));
    const State s1 = make_initial_state(c.run.initial, c.run.grid, c.run.params);
    CHECK(s1.u.values == s0.u.values);
    CHECK(s1.v.values == s0.v.values);
}

TEST_CASE("bifurcate writes branches and skips modes without onset") {
    const fs::path dir = scratch("bifurcate");
    const std::string path = write_text(dir / "pattern.yaml", kPatternSet);
    std::ostringstream out, err;
    CHECK(cmd_bifurcate({path, (dir / "b").string(), {}}, {1, 2, 3}, "0.005:0.2", out, err) == kSuccess);
    std::vector<double> onsets;
    for (int j = 1; j <= 3; ++j) {
        std::ifstream in(dir / "b" / ("branch_" + std::to_string(j) + ".csv"));
        REQUIRE(in);
        const BranchTable t = read_branch(in);
        CHECK(t.mode == j);
        CHECK(t.rows.size() > 2);
        onsets.push_back(t.d_star);
        CHECK(fs::exists(dir / "b" / ("plot_" + std::to_string(j) + ".csv")));
    }
    CHECK(onsets[0] > onsets[1]);
    CHECK(onsets[1] > onsets[2]);

    // λ1 = 0.25 on a long interval gives P_1 < 0.
    const std::string wide = write_text(dir / "wide.yaml", replace(kPatternSet, "1.5707963267948966", "6.283185307179586"));
    std::ostringstream out2, err2;
    CHECK(cmd_bifurcate({wide, (dir / "w").string(), {}}, {1, 4}, "0.005:0.2", out2, err2) == kSuccess);
    CHECK(out2.str().find("mode 1: skipped") != std::string::npos);
    CHECK(fs::exists(dir / "w" / "branch_4.csv"));

    std::ostringstream out3, err3;
    CHECK(cmd_bifurcate({path, (dir / "e").string(), {}}, {1}, "0.1:0.1", out3, err3) == kConfigError);
}

TEST_CASE("sweep over diffusion") {
    const fs::path dir = scratch("sweep");
    const std::string path = write_text(dir / "pattern.yaml", kPatternSet);
    std::ostringstream out, err;
    CHECK(cmd_sweep({path, (dir / "s").string(), {}}, "d", {2, 0.05, 1, 0.03}, out, err) == kSuccess);
    std::istringstream in(slurp(dir / "s" / "sweep.csv"));
    std::string line;
    std::getline(in, line);
    std::vector<double> values, d0, d1;
    while (std::getline(in, line)) {
        std::vector<std::string> tok;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) tok.push_back(cell);
        values.push_back(std::stod(tok[0]));
        CHECK(tok[2] == "completed");
        d0.push_back(std::stod(tok[4]));
        d1.push_back(std::stod(tok[5]));
    }
    REQUIRE(values == std::vector<double>{0.03, 0.05, 1, 2});
    CHECK(d1[0] > d0[0]);  // growth below onset
    CHECK(d1[1] < d0[1]);  // decay above onset
    CHECK(d1[2] < d0[2]);
    CHECK(d1[3] < d0[3]);

    // A single value reproduces a direct simulation.
    std::ostringstream o2, e2;
    CHECK(cmd_sweep({path, (dir / "one").string(), {}}, "d", {0.05}, o2, e2) == kSuccess);
    CHECK(cmd_simulate({path, (dir / "direct").string(), {}}, o2, e2) == kSuccess);
    CHECK(slurp(dir / "one" / "run_0" / "diagnostics.csv") == slurp(dir / "direct" / "diagnostics.csv"));

    std::ostringstream o3, e3;
    CHECK(cmd_sweep({path, (dir / "bad").string(), {}}, "params.nothing", {1}, o3, e3) == kConfigError);
}
