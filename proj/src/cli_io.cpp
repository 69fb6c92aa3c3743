#include "coopflux/cli_io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <yaml-cpp/yaml.h>

#include "coopflux/errors.hpp"

namespace coopflux::cli {

namespace fs = std::filesystem;

namespace {

// Keys accepted in each section; the bool marks numeric scalars that a sweep
// may override.
const std::map<std::string, std::map<std::string, bool>>& schema() {
    static const std::map<std::string, std::map<std::string, bool>> s = {
        {"params",
         {{"d1", true}, {"d2", true}, {"alpha", true}, {"beta", true}, {"a1", true},
          {"a2", true}, {"b1", true}, {"b2", true}, {"c1", true}, {"c2", true}}},
        {"domain", {{"dim", false}, {"lengths", false}, {"cells", false}}},
        {"initial",
         {{"kind", false}, {"u", true}, {"v", true}, {"mode", false}, {"amplitude", true}, {"seed", false},
          {"path", false}}},
        {"time",
         {{"t_end", true}, {"dt_init", true}, {"tolerance", true}, {"output_every", true}, {"dt_max", true},
          {"extrapolate", false}}},
        {"output", {{"directory", false}, {"snapshot_every", true}}},
    };
    return s;
}

const std::map<std::string, bool>& top_level_scalars() {
    static const std::map<std::string, bool> s = {
        {"blowup_threshold", true}, {"absorbing_epsilon", true}, {"pure_diffusion", false}};
    return s;
}

class Loader {
public:
    explicit Loader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(const YAML::Mark& mark, const std::string& key, const std::string& msg) const {
        std::ostringstream os;
        os << source_;
        if (mark.line >= 0) os << ':' << mark.line + 1 << ':' << mark.column + 1;
        os << ": " << key << ": " << msg;
        raise(ErrorCode::ConfigError, os.str());
    }

    void check_keys(const YAML::Node& map, const std::map<std::string, bool>& allowed, const std::string& prefix,
                    const YAML::Mark& parent) const {
        if (!map.IsMap()) fail(map.IsDefined() ? map.Mark() : parent, prefix, "expected a mapping");
        for (const auto& kv : map) {
            const std::string key = kv.first.as<std::string>();
            if (!allowed.count(key)) fail(kv.first.Mark(), prefix + "." + key, "unknown key");
        }
    }

    double number(const YAML::Node& node, const std::string& key, const YAML::Mark& parent) const {
        if (!node.IsDefined() || node.IsNull()) fail(parent, key, "missing value");
        if (!node.IsScalar()) fail(node.Mark(), key, "expected a number");
        try {
            const double x = node.as<double>();
            if (!std::isfinite(x)) fail(node.Mark(), key, "must be finite");
            return x;
        } catch (const YAML::Exception&) {
            fail(node.Mark(), key, "expected a number, got '" + node.Scalar() + "'");
        }
    }

    long long integer(const YAML::Node& node, const std::string& key, const YAML::Mark& parent) const {
        const double x = number(node, key, parent);
        if (x != std::floor(x) || std::abs(x) > 9e15) fail(node.Mark(), key, "expected an integer");
        return static_cast<long long>(x);
    }

    std::string text(const YAML::Node& node, const std::string& key, const YAML::Mark& parent) const {
        if (!node.IsDefined() || node.IsNull()) fail(parent, key, "missing value");
        if (!node.IsScalar()) fail(node.Mark(), key, "expected a string");
        return node.Scalar();
    }

    bool boolean(const YAML::Node& node, const std::string& key) const {
        try {
            return node.as<bool>();
        } catch (const YAML::Exception&) {
            fail(node.Mark(), key, "expected true or false");
        }
    }

    const std::string& source() const { return source_; }

private:
    std::string source_;
};

Config parse_node(const YAML::Node& root, const std::string& source) {
    Loader ld(source);
    const YAML::Mark top = root.Mark();
    if (!root.IsMap()) ld.fail(top, "<root>", "expected a mapping");
    for (const auto& kv : root) {
        const std::string key = kv.first.as<std::string>();
        if (!schema().count(key) && !top_level_scalars().count(key)) ld.fail(kv.first.Mark(), key, "unknown key");
    }

    Config cfg;
    RunConfig& rc = cfg.run;

    // params: all ten coefficients are required.
    const YAML::Node p = root["params"];
    if (!p) ld.fail(top, "params", "missing section");
    ld.check_keys(p, schema().at("params"), "params", top);
    auto coef = [&](const char* name, double& dst, bool positive, bool nonneg) {
        const YAML::Node n = p[name];
        const std::string key = std::string("params.") + name;
        dst = ld.number(n, key, p.Mark());
        if (positive && !(dst > 0.0)) ld.fail(n.Mark(), key, "must be positive");
        if (nonneg && !(dst >= 0.0)) ld.fail(n.Mark(), key, "must be nonnegative");
    };
    coef("d1", rc.params.d1, false, true);
    coef("d2", rc.params.d2, false, true);
    coef("alpha", rc.params.alpha, false, true);
    coef("beta", rc.params.beta, false, true);
    coef("a1", rc.params.a1, false, false);
    coef("a2", rc.params.a2, false, false);
    coef("b1", rc.params.b1, true, false);
    coef("b2", rc.params.b2, true, false);
    coef("c1", rc.params.c1, true, false);
    coef("c2", rc.params.c2, true, false);

    const YAML::Node dom = root["domain"];
    if (!dom) ld.fail(top, "domain", "missing section");
    ld.check_keys(dom, schema().at("domain"), "domain", top);
    const long long dim = ld.integer(dom["dim"], "domain.dim", dom.Mark());
    if (dim != 1 && dim != 2) ld.fail(dom["dim"].Mark(), "domain.dim", "must be 1 or 2");
    auto list = [&](const char* name) {
        const YAML::Node n = dom[name];
        const std::string key = std::string("domain.") + name;
        if (!n) ld.fail(dom.Mark(), key, "missing value");
        if (!n.IsSequence() || static_cast<long long>(n.size()) != dim) {
            ld.fail(n.Mark(), key, "expected a list of " + std::to_string(dim) + " entries");
        }
        return n;
    };
    const YAML::Node lengths = list("lengths");
    const YAML::Node cells = list("cells");
    std::array<double, 2> lx{1.0, 1.0};
    std::array<int, 2> nx{4, 1};
    for (int a = 0; a < dim; ++a) {
        lx[a] = ld.number(lengths[a], "domain.lengths", lengths.Mark());
        if (!(lx[a] > 0.0)) ld.fail(lengths[a].Mark(), "domain.lengths", "must be positive");
        const long long c = ld.integer(cells[a], "domain.cells", cells.Mark());
        if (c < 4 || c > 100000000) ld.fail(cells[a].Mark(), "domain.cells", "need at least 4 cells per axis");
        nx[a] = static_cast<int>(c);
    }
    rc.grid = dim == 1 ? Grid::interval(lx[0], nx[0]) : Grid::rectangle(lx[0], lx[1], nx[0], nx[1]);

    if (const YAML::Node ini = root["initial"]) {
        ld.check_keys(ini, schema().at("initial"), "initial", top);
        InitialCondition& ic = rc.initial;
        const std::string kind = ld.text(ini["kind"], "initial.kind", ini.Mark());
        if (kind == "constant") ic.kind = InitialKind::constant;
        else if (kind == "eigenmode") ic.kind = InitialKind::eigenmode;
        else if (kind == "random") ic.kind = InitialKind::random;
        else if (kind == "file") ic.kind = InitialKind::file;
        else ld.fail(ini["kind"].Mark(), "initial.kind", "expected constant, eigenmode, random or file");
        for (const char* name : {"u", "v"}) {
            if (const YAML::Node n = ini[name]) {
                const double x = ld.number(n, std::string("initial.") + name, ini.Mark());
                if (!(x >= 0.0)) ld.fail(n.Mark(), std::string("initial.") + name, "must be nonnegative");
                (name[0] == 'u' ? ic.u : ic.v) = x;
            }
        }
        if (const YAML::Node n = ini["amplitude"]) ic.amplitude = ld.number(n, "initial.amplitude", ini.Mark());
        if (const YAML::Node n = ini["mode"]) {
            const long long m = ld.integer(n, "initial.mode", ini.Mark());
            if (m < 1 || m >= rc.grid.cell_count()) ld.fail(n.Mark(), "initial.mode", "out of range");
            ic.mode = static_cast<int>(m);
        }
        if (const YAML::Node n = ini["seed"]) {
            const long long s = ld.integer(n, "initial.seed", ini.Mark());
            if (s < 0) ld.fail(n.Mark(), "initial.seed", "must be nonnegative");
            ic.seed = static_cast<std::uint64_t>(s);
        }
        if (const YAML::Node n = ini["path"]) ic.path = ld.text(n, "initial.path", ini.Mark());
        if ((ic.kind == InitialKind::constant || ic.kind == InitialKind::random) && (!ic.u || !ic.v)) {
            ld.fail(ini.Mark(), "initial", "kind '" + kind + "' needs u and v");
        }
        if (ic.kind == InitialKind::random && !(ic.amplitude >= 0.0)) {
            ld.fail(ini["amplitude"].Mark(), "initial.amplitude", "must be nonnegative");
        }
        if (ic.kind == InitialKind::file && ic.path.empty()) ld.fail(ini.Mark(), "initial.path", "missing value");
        if (ic.kind == InitialKind::file && !fs::path(ic.path).is_absolute() && source != "<config>") {
            const fs::path base = fs::path(source).parent_path();
            if (!base.empty()) ic.path = (base / ic.path).string();
        }
    }

    if (const YAML::Node t = root["time"]) {
        ld.check_keys(t, schema().at("time"), "time", top);
        auto pos = [&](const char* name, double& dst, bool allow_zero) {
            if (const YAML::Node n = t[name]) {
                const std::string key = std::string("time.") + name;
                dst = ld.number(n, key, t.Mark());
                if (allow_zero ? !(dst >= 0.0) : !(dst > 0.0)) {
                    ld.fail(n.Mark(), key, allow_zero ? "must be nonnegative" : "must be positive");
                }
            }
        };
        pos("t_end", rc.t_end, false);
        pos("dt_init", rc.dt_init, false);
        pos("tolerance", rc.tolerance, false);
        pos("output_every", rc.output_every, true);
        pos("dt_max", rc.dt_max, false);
        if (const YAML::Node n = t["extrapolate"]) rc.extrapolate = ld.boolean(n, "time.extrapolate");
    }

    if (const YAML::Node o = root["output"]) {
        ld.check_keys(o, schema().at("output"), "output", top);
        if (const YAML::Node n = o["directory"]) cfg.output_directory = ld.text(n, "output.directory", o.Mark());
        if (const YAML::Node n = o["snapshot_every"]) {
            rc.snapshot_every = ld.number(n, "output.snapshot_every", o.Mark());
            if (!(rc.snapshot_every >= 0.0)) ld.fail(n.Mark(), "output.snapshot_every", "must be nonnegative");
        }
    }

    if (const YAML::Node n = root["blowup_threshold"]) {
        rc.blowup_threshold = ld.number(n, "blowup_threshold", top);
        if (!(rc.blowup_threshold > 0.0)) ld.fail(n.Mark(), "blowup_threshold", "must be positive");
    }
    if (const YAML::Node n = root["absorbing_epsilon"]) {
        rc.absorbing_epsilon = ld.number(n, "absorbing_epsilon", top);
        if (!(rc.absorbing_epsilon > 0.0)) ld.fail(n.Mark(), "absorbing_epsilon", "must be positive");
    }
    if (const YAML::Node n = root["pure_diffusion"]) rc.pure_diffusion = ld.boolean(n, "pure_diffusion");

    try {
        rc.validate();
    } catch (const Error& e) {
        ld.fail(top, "<config>", e.what());
    }
    return cfg;
}

YAML::Node load_yaml(const std::string& text, const std::string& source) {
    try {
        return YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        std::ostringstream os;
        os << source << ':' << e.mark.line + 1 << ':' << e.mark.column + 1 << ": " << e.msg;
        raise(ErrorCode::ConfigError, os.str());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCode::ConfigError, path + ": cannot open");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fmt(double x) {
    std::ostringstream os;
    os << std::setprecision(10) << x;
    return os.str();
}

template <class T>
std::string fmt_opt(const std::optional<T>& x) {
    if (!x) return "NA";
    if constexpr (std::is_same_v<T, bool>) return *x ? "true" : "false";
    else return fmt(*x);
}

int exit_code_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::ConfigError:
        case ErrorCode::InvalidArgument:
        case ErrorCode::IoError: return kConfigError;
        default: return kSolverFailure;
    }
}

Config load_with_overrides(const CommonOptions& opt) {
    Config cfg = load_config(opt.config_path);
    if (opt.out) cfg.output_directory = *opt.out;
    if (opt.seed) cfg.run.initial.seed = *opt.seed;
    return cfg;
}

}  // namespace

Config parse_config(const std::string& text, const std::string& source) {
    return parse_node(load_yaml(text, source), source);
}

Config load_config(const std::string& path) { return parse_config(read_file(path), path); }

Config parse_config_with_override(const std::string& text, const std::string& axis, double value,
                                  const std::string& source) {
    YAML::Node root = load_yaml(text, source);
    if (!root.IsMap()) raise(ErrorCode::ConfigError, source + ": expected a mapping");
    if (axis == "d") {
        if (!root["params"]) raise(ErrorCode::ConfigError, source + ": params: missing section");
        root["params"]["d1"] = value;
        root["params"]["d2"] = value;
        return parse_node(root, source);
    }
    const auto dot = axis.find('.');
    if (dot == std::string::npos) {
        const auto it = top_level_scalars().find(axis);
        if (it == top_level_scalars().end() || !it->second) {
            raise(ErrorCode::ConfigError, "sweep axis '" + axis + "' is not a numeric config key");
        }
        root[axis] = value;
        return parse_node(root, source);
    }
    const std::string section = axis.substr(0, dot);
    const std::string key = axis.substr(dot + 1);
    const auto sec = schema().find(section);
    if (sec == schema().end() || !sec->second.count(key) || !sec->second.at(key)) {
        raise(ErrorCode::ConfigError, "sweep axis '" + axis + "' is not a numeric config key");
    }
    root[section][key] = value;
    return parse_node(root, source);
}

void write_regime_report(std::ostream& os, const ModelParams& params, const Grid& grid, int modes) {
    const DerivedQuantities dq = derive(params);
    const auto& p = params;
    os << "gamma: " << fmt(dq.gamma) << '\n';
    os << "weak_condition: " << (p.b1 * p.c2 > p.b2 * p.c1 ? "holds" : "fails") << " (b1*c2 = " << fmt(p.b1 * p.c2)
       << ", b2*c1 = " << fmt(p.b2 * p.c1) << ")\n";
    os << "weaker_condition: " << (dq.weaker_condition ? "holds" : "fails")
       << " (2*sqrt(gamma*b1*c2) = " << fmt(2.0 * std::sqrt(dq.gamma * p.b1 * p.c2))
       << ", c1 + gamma*b2 = " << fmt(p.c1 + dq.gamma * p.b2) << ")\n";
    os << "case: " << to_string(dq.case_label) << '\n';
    os << "u_star: " << fmt_opt(dq.u_star) << '\n';
    os << "v_star: " << fmt_opt(dq.v_star) << '\n';
    os << "lambda_star: " << fmt(dq.lambda_star) << '\n';
    os << "a_tilde: " << fmt(dq.a_tilde) << '\n';
    os << "K: " << fmt_opt(dq.K) << '\n';
    os << "d_bar: " << fmt_opt(dq.d_bar) << '\n';
    os << "tau_star: " << fmt_opt(dq.tau_star) << '\n';
    os << "A_ratio: " << fmt_opt(dq.A_ratio) << '\n';
    const bool hinpu = check_hinpu(params);
    os << "hinpu: " << (hinpu ? "holds" : "fails") << '\n';
    if (dq.A_ratio && dq.tau_star) {
        const double at = *dq.A_ratio * *dq.tau_star;
        os << "gamma_vs_A_tau_star: " << fmt(dq.gamma) << (dq.gamma > at ? " > " : dq.gamma < at ? " < " : " = ")
           << fmt(at) << '\n';
    }
    if (modes <= 0) return;
    os << "modes:\n";
    os << "j,lambda_j,P_j,Q_j,d_star_formula,d_star_det,in_R_j,note\n";
    const auto pairs = neumann_eigenpairs_analytic(grid, modes + 1);
    for (int j = 1; j < static_cast<int>(pairs.size()); ++j) {
        const double lj = pairs[j].lambda;
        os << j << ',' << fmt(lj) << ',';
        if (!dq.has_coexistence()) {
            os << "NA,NA,NA,NA,NA,no coexistence state\n";
            continue;
        }
        bool in_r = false;
        try {
            in_r = region_Rj_membership(params, lj);
        } catch (const Error&) {
        }
        try {
            const ModeData md = mode_analysis(params, j, lj);
            os << fmt(md.P_j) << ',' << fmt(md.Q_j) << ',' << fmt(md.d_star_formula) << ',' << fmt(md.d_star_det)
               << ',' << (in_r ? "yes" : "no") << ',' << (md.discrepancy ? "formula and determinant roots differ" : "")
               << '\n';
        } catch (const Error& e) {
            os << fmt(mode_P(params, lj)) << ',' << fmt(mode_Q(params, lj)) << ",NA,NA," << (in_r ? "yes" : "no")
               << ",skip: " << e.what() << '\n';
        }
    }
}

void write_summary(std::ostream& os, const SimulationSummary& s) {
    os << "outcome: " << to_string(s.outcome) << '\n';
    os << "t_final: " << fmt(s.t_final) << '\n';
    if (s.outcome != RunOutcome::completed) {
        os << "halt_time: " << fmt(s.halt_time) << '\n';
        os << "halt_reason: " << s.halt_reason << '\n';
    }
    os << "records: " << s.records << '\n';
    os << "accepted_steps: " << s.accepted_steps << '\n';
    os << "rejected_steps: " << s.rejected_steps << '\n';
    os << "D_initial: " << fmt_opt(s.D_initial) << '\n';
    os << "D_final: " << fmt_opt(s.D_final) << '\n';
    os << "F_final: " << fmt_opt(s.F_final) << '\n';
    os << "comparison_held: " << fmt_opt(s.comparison_held) << '\n';
    os << "absorbing_held: " << fmt_opt(s.absorbing_held) << '\n';
    os << "mass_drift: " << fmt(s.mass_drift) << '\n';
    if (s.converged()) os << "converged: D(t_end) < 1e-8\n";
}

SimulationSummary simulate_to_directory(const RunConfig& config, const std::string& directory) {
    std::error_code ec;
    fs::create_directories(directory, ec);
    if (ec) raise(ErrorCode::IoError, directory + ": " + ec.message());
    const fs::path dir(directory);
    if (config.snapshot_every > 0.0) fs::create_directories(dir / "snapshots", ec);

    std::ofstream diag(dir / "diagnostics.csv");
    if (!diag) raise(ErrorCode::IoError, (dir / "diagnostics.csv").string() + ": cannot write");
    write_diagnostics_header(diag);
    int snap_index = 0;
    RunObserver obs;
    obs.on_record = [&](const DiagnosticsRecord& r) { write_diagnostics_row(diag, r); };
    obs.on_snapshot = [&](const Snapshot& snap) {
        std::ostringstream name;
        name << "snapshot_" << std::setw(5) << std::setfill('0') << snap_index++ << ".dat";
        write_snapshot_file((dir / "snapshots" / name.str()).string(), snap);
    };
    const RunResult res = run(config, obs);
    diag.close();

    SimulationSummary s;
    s.outcome = res.outcome;
    s.t_final = res.final_state.t;
    s.halt_time = res.halt_time;
    s.halt_reason = res.halt_reason;
    s.accepted_steps = res.accepted_steps;
    s.rejected_steps = res.rejected_steps;
    s.records = res.records.size();
    if (!res.records.empty()) {
        const auto& first = res.records.front();
        const auto& last = res.records.back();
        s.D_initial = first.distance_D;
        s.D_final = last.distance_D;
        s.F_final = last.lyapunov_F;
        bool any_cmp = false, cmp = true, abs_entered = false, abs_ok = true, any_abs = false;
        for (const auto& r : res.records) {
            s.mass_drift = std::max({s.mass_drift, std::abs(r.mass_u - first.mass_u), std::abs(r.mass_v - first.mass_v)});
            if (r.comparison_ok) {
                any_cmp = true;
                cmp = cmp && *r.comparison_ok;
            }
            if (r.absorbing_ok) {
                any_abs = true;
                if (*r.absorbing_ok) abs_entered = true;
                else if (abs_entered) abs_ok = false;
            }
        }
        if (any_cmp) s.comparison_held = cmp;
        if (any_abs) s.absorbing_held = abs_entered && abs_ok;
    }
    std::ofstream sum(dir / "summary.txt");
    if (!sum) raise(ErrorCode::IoError, (dir / "summary.txt").string() + ": cannot write");
    write_summary(sum, s);
    return s;
}

BranchTable to_table(const Branch& branch) {
    BranchTable t;
    t.mode = branch.mode;
    t.lambda_h = branch.lambda_h;
    t.d_star = branch.d_star;
    for (const auto& p : branch.points) {
        t.rows.push_back({p.s, p.d, p.l2_norm_u, p.l2_norm_v, p.stability_index, p.residual_norm});
    }
    return t;
}

void write_branch(std::ostream& os, const BranchTable& t) {
    os << std::setprecision(17);
    os << "# mode " << t.mode << '\n';
    os << "# lambda_h " << t.lambda_h << '\n';
    os << "# d_star " << t.d_star << '\n';
    os << "s,d,l2_norm_u,l2_norm_v,stability_index,residual_norm\n";
    for (const auto& r : t.rows) {
        os << r.s << ',' << r.d << ',' << r.l2_norm_u << ',' << r.l2_norm_v << ',' << r.stability_index << ','
           << r.residual_norm << '\n';
    }
}

BranchTable read_branch(std::istream& is) {
    BranchTable t;
    std::string line;
    bool header = false;
    int lineno = 0;
    auto bad = [&](const std::string& msg) {
        raise(ErrorCode::IoError, "branch file line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ss(line.substr(1));
            std::string key;
            ss >> key;
            if (key == "mode") ss >> t.mode;
            else if (key == "lambda_h") ss >> t.lambda_h;
            else if (key == "d_star") ss >> t.d_star;
            if (ss.fail()) bad("malformed header");
            continue;
        }
        if (!header) {
            if (line != "s,d,l2_norm_u,l2_norm_v,stability_index,residual_norm") bad("unexpected column header");
            header = true;
            continue;
        }
        std::vector<std::string> tok;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) tok.push_back(cell);
        if (tok.size() != 6) bad("expected 6 columns");
        try {
            t.rows.push_back({std::stod(tok[0]), std::stod(tok[1]), std::stod(tok[2]), std::stod(tok[3]),
                              std::stoi(tok[4]), std::stod(tok[5])});
        } catch (const std::exception&) {
            bad("non-numeric entry");
        }
    }
    if (!header) raise(ErrorCode::IoError, "branch file has no column header");
    return t;
}

void write_plot_data(std::ostream& os, const BranchTable& t) {
    os << std::setprecision(17) << "d,l2_norm_u\n";
    for (const auto& r : t.rows) os << r.d << ',' << r.l2_norm_u << '\n';
}

std::pair<double, double> parse_d_range(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) raise(ErrorCode::InvalidArgument, "d-range must look like lo:hi");
    double lo = 0.0, hi = 0.0;
    try {
        std::size_t used = 0;
        lo = std::stod(text.substr(0, colon), &used);
        if (used != colon) throw std::invalid_argument("lo");
        const std::string rest = text.substr(colon + 1);
        hi = std::stod(rest, &used);
        if (used != rest.size()) throw std::invalid_argument("hi");
    } catch (const std::exception&) {
        raise(ErrorCode::InvalidArgument, "d-range must look like lo:hi, got '" + text + "'");
    }
    if (!(lo > 0.0) || !(hi > lo)) raise(ErrorCode::InvalidArgument, "d-range '" + text + "' is empty");
    return {lo, hi};
}

std::vector<int> parse_modes(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto dash = item.find('-');
        try {
            if (dash != std::string::npos && dash > 0) {
                const int a = std::stoi(item.substr(0, dash));
                const int b = std::stoi(item.substr(dash + 1));
                for (int j = a; j <= b; ++j) out.push_back(j);
            } else {
                out.push_back(std::stoi(item));
            }
        } catch (const std::exception&) {
            raise(ErrorCode::InvalidArgument, "bad mode list '" + text + "'");
        }
    }
    if (out.empty() || *std::min_element(out.begin(), out.end()) < 1) {
        raise(ErrorCode::InvalidArgument, "mode list must contain positive integers");
    }
    return out;
}

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            raise(ErrorCode::InvalidArgument, "bad value list '" + text + "'");
        }
    }
    if (out.empty()) raise(ErrorCode::InvalidArgument, "value list is empty");
    return out;
}

int cmd_regime(const CommonOptions& opt, int modes, std::ostream& out, std::ostream& err) {
    try {
        const Config cfg = load_with_overrides(opt);
        write_regime_report(out, cfg.run.params, cfg.run.grid, modes);
        return kSuccess;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

int cmd_simulate(const CommonOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        const Config cfg = load_with_overrides(opt);
        const SimulationSummary s = simulate_to_directory(cfg.run, cfg.output_directory);
        write_summary(out, s);
        if (s.outcome == RunOutcome::blow_up) return kBlowUp;
        if (s.outcome == RunOutcome::step_collapse) return kSolverFailure;
        return kSuccess;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}

int cmd_bifurcate(const CommonOptions& opt, const std::vector<int>& modes, const std::string& d_range,
                  std::ostream& out, std::ostream& err) {
    Config cfg;
    std::pair<double, double> range;
    try {
        cfg = load_with_overrides(opt);
        range = parse_d_range(d_range);
        if (modes.empty()) raise(ErrorCode::InvalidArgument, "no modes requested");
        fs::create_directories(cfg.output_directory);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    }
    int code = kSuccess;
    const fs::path dir(cfg.output_directory);
    for (int j : modes) {
        try {
            const Branch b = continue_branch(cfg.run.params, cfg.run.grid, j, range.first, range.second);
            const BranchTable t = to_table(b);
            const std::string stem = "branch_" + std::to_string(j);
            std::ofstream bf(dir / (stem + ".csv"));
            write_branch(bf, t);
            std::ofstream pf(dir / ("plot_" + std::to_string(j) + ".csv"));
            write_plot_data(pf, t);
            out << "mode " << j << ": d_star " << fmt(b.d_star) << " (formula " << fmt(b.analytic.d_star_formula)
                << ", determinant " << fmt(b.analytic.d_star_det) << "), " << b.points.size() << " points, "
                << b.termination << '\n';
        } catch (const Error& e) {
            if (e.code() == ErrorCode::NotABifurcation || e.code() == ErrorCode::HypothesisNotMet) {
                out << "mode " << j << ": skipped: " << e.what() << '\n';
            } else {
                err << "mode " << j << ": failed: " << e.what() << '\n';
                code = kSolverFailure;
            }
        }
    }
    return code;
}

int cmd_sweep(const CommonOptions& opt, const std::string& axis, const std::vector<double>& values,
              std::ostream& out, std::ostream& err) {
    std::string text;
    Config base;
    try {
        text = read_file(opt.config_path);
        base = load_with_overrides(opt);
        parse_config_with_override(text, axis, values.at(0), opt.config_path);
        fs::create_directories(base.output_directory);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    }

    struct Row {
        std::optional<SimulationSummary> summary;
        std::string error;
    };
    std::vector<Row> rows(values.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < values.size(); i = next++) {
            try {
                Config c = parse_config_with_override(text, axis, values[i], opt.config_path);
                if (opt.seed) c.run.initial.seed = *opt.seed;
                const std::string dir = (fs::path(base.output_directory) / ("run_" + std::to_string(i))).string();
                rows[i].summary = simulate_to_directory(c.run, dir);
            } catch (const std::exception& e) {
                rows[i].error = e.what();
            }
        }
    };
    unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("COOPFLUX_WORKERS")) {
        try {
            workers = static_cast<unsigned>(std::max(1, std::stoi(env)));
        } catch (const std::exception&) {
            err << "warning: ignoring COOPFLUX_WORKERS='" << env << "'\n";
        }
    }
    workers = std::min<unsigned>(workers, static_cast<unsigned>(values.size()));
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    // Rows are merged in ascending value order regardless of completion order.
    std::vector<std::size_t> order(values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });

    std::ofstream table(fs::path(base.output_directory) / "sweep.csv");
    std::ostringstream body;
    body << "value,run,outcome,t_final,D_initial,D_final,F_final,error\n";
    for (std::size_t i : order) {
        const Row& r = rows[i];
        body << std::setprecision(17) << values[i] << ",run_" << i << ',';
        if (r.summary) {
            body << to_string(r.summary->outcome) << ',' << r.summary->t_final << ',' << fmt_opt(r.summary->D_initial)
                 << ',' << fmt_opt(r.summary->D_final) << ',' << fmt_opt(r.summary->F_final) << ",\n";
        } else {
            std::string msg = r.error;
            std::replace(msg.begin(), msg.end(), ',', ';');
            body << "failed,NA,NA,NA,NA," << msg << '\n';
        }
    }
    table << body.str();
    out << body.str();
    return kSuccess;
}

}  // namespace coopflux::cli
