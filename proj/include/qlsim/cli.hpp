#pragma once

// Command-line front end. Exit codes: 0 success, 1 domain/config/fit error,
// 2 numeric non-convergence, 3 capacity exceeded.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include "qlsim/config.hpp"
#include "qlsim/criticality.hpp"
#include "qlsim/dmrg.hpp"
#include "qlsim/ed.hpp"
#include "qlsim/mpo.hpp"
#include "qlsim/mps.hpp"
#include "qlsim/observables.hpp"
#include "qlsim/polaron.hpp"
#include "qlsim/symmetries.hpp"

#ifndef QLSIM_VERSION
#define QLSIM_VERSION "unknown"
#endif

namespace qlsim::cli {

namespace fs = std::filesystem;

enum ExitCode { ok = 0, domain_error = 1, numeric_error = 2, capacity_error = 3 };

/// Single writer for one output directory; every file lands via rename.
class OutputDir {
public:
    explicit OutputDir(fs::path dir) : dir_(std::move(dir)) {}

    const fs::path &path() const { return dir_; }

    void write(const std::string &name, const std::string &content) {
        std::lock_guard lock(mu_);
        fs::create_directories(dir_);
        const fs::path target = dir_ / name;
        const fs::path tmp = dir_ / (name + ".tmp");
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out)
                detail::raise<DomainError>("OutputDir", "cannot open " + tmp.string());
            out << content;
            out.flush();
            if (!out)
                detail::raise<DomainError>("OutputDir", "write failed for " + tmp.string());
        }
        fs::rename(tmp, target);
        if (std::find(files_.begin(), files_.end(), name) == files_.end())
            files_.push_back(name);
    }

    std::vector<std::string> files() const {
        std::lock_guard lock(mu_);
        return files_;
    }

private:
    fs::path dir_;
    mutable std::mutex mu_;
    std::vector<std::string> files_;
};

namespace detail {

inline std::string read_file(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    if (!in)
        qlsim::detail::raise<DomainError>("read_file", "cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string csv_text(const std::string &s) {
    std::string out = s;
    for (char &c : out)
        if (c == ',' || c == '\n' || c == '\r')
            c = ';';
    return out;
}

inline std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string &name) const {
        for (size_t k = 0; k < header.size(); ++k)
            if (header[k] == name)
                return static_cast<int>(k);
        return -1;
    }
};

inline std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');)
        out.push_back(cell);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

inline CsvTable read_csv(const fs::path &p) {
    std::istringstream in(read_file(p));
    CsvTable t;
    std::string line;
    if (!std::getline(in, line))
        qlsim::detail::raise<DomainError>("read_csv", p.string() + " is empty");
    t.header = split_csv_line(line);
    while (std::getline(in, line))
        if (!line.empty())
            t.rows.push_back(split_csv_line(line));
    return t;
}

inline double csv_real(const std::string &s) {
    if (s == "nan")
        return std::numeric_limits<double>::quiet_NaN();
    return qlsim::detail::parse_double(s);
}

inline std::string observables_block(const ObservableRow &r) {
    return std::string(observable_csv_header()) + "\n" + to_csv(r) + "\n";
}

inline std::string profiles_csv(const ExpectationProvider &p) {
    const auto &lat = p.lattice();
    const auto photons = photon_profile(p);
    const auto bonds = p.bond_entropies();
    std::string out = "site,kind,index,photons,lambda1,lambda4,lambda6,lambda8,bond_entropy_right\n";
    int cav = 0;
    for (int k = 0; k < lat.n_sites(); ++k) {
        const bool qutrit = lat.site(k).kind == SiteKind::qutrit;
        out += std::to_string(k) + "," + (qutrit ? "qutrit" : "cavity") + ",";
        out += std::to_string(qutrit ? lat.qutrit_at(k) : lat.cavity_at(k)) + ",";
        if (qutrit) {
            out += "nan";
            for (int a : {1, 4, 6, 8}) {
                const SiteOperator op{k, gell_mann(a)};
                out += "," + format_real(p.expect(std::span<const SiteOperator>(&op, 1)).real());
            }
        } else {
            out += format_real(photons[static_cast<size_t>(cav++)]) + ",nan,nan,nan,nan";
        }
        out += "," + (static_cast<size_t>(k) < bonds.size() ? format_real(bonds[static_cast<size_t>(k)]) : "nan");
        out += "\n";
    }
    return out;
}

} // namespace detail

struct Invocation {
    std::string subcommand;
    RunConfig config;
    std::string checkpoint;
};

struct Context {
    Invocation inv;
    OutputDir out;
    nlohmann::json extra = nlohmann::json::object();
};

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_ed(Context &ctx) {
    const RunConfig &c = ctx.inv.config;
    SweepPlan plan = c.sweep_plan();
    plan.engine = Engine::ed;
    plan.validate();
    const LatticeSpec lat = c.lattice();
    check_budget(lat, kDefaultDimBudget, "ed");
    const auto terms = qlsim::detail::sweep_terms(plan, c.params, lat);
    const auto h = terms_to_operator(std::span<const int>(lat.site_dims()), terms);
    const auto r = ground_state(h, c.ed_states, plan.ed);

    std::string energies = "index,energy,residual\n";
    for (size_t k = 0; k < r.eigenvalues.size(); ++k)
        energies += std::to_string(k) + "," + format_real(r.eigenvalues[k]) + "," + format_real(r.residuals[k]) + "\n";
    const StateVectorProvider prov(r.eigenvectors[0], lat);
    ObservableRow row;
    row.s = c.params.s;
    row.g = c.params.g;
    row.L = c.L;
    row.n_max = c.model == ModelKind::full ? c.n_max : 0;
    row.obs = measure(prov, c.params.s, c.mode);
    row.energy = r.eigenvalues[0];
    row.converged = true;
    ctx.out.write("energies.csv", energies);
    ctx.out.write("observables.csv", detail::observables_block(row));
    ctx.out.write("profiles.csv", detail::profiles_csv(prov));
    ctx.extra["method"] = r.method;
    ctx.extra["matvecs"] = r.matvecs;
    ctx.extra["dimension"] = static_cast<long long>(h.dim());
    std::cout << "E0 = " << format_real(r.eigenvalues[0]) << " (" << r.method << ", dim " << h.dim() << ")\n";
    return ok;
}

inline int cmd_dmrg(Context &ctx) {
    const RunConfig &c = ctx.inv.config;
    SweepPlan plan = c.sweep_plan();
    plan.validate();
    const LatticeSpec lat = c.lattice();
    const auto terms = qlsim::detail::sweep_terms(plan, c.params, lat);
    const auto mpo = build_mpo<double>(std::span<const int>(lat.site_dims()), terms);

    std::optional<MatrixProductState<double>> init;
    const fs::path ckpt = ctx.inv.checkpoint;
    if (!ckpt.empty() && fs::exists(ckpt)) {
        auto [state, saved] = load_checkpoint<double>(ckpt);
        if (saved.site_dims() != lat.site_dims() || saved.n_cells() != lat.n_cells() ||
            saved.boundary() != lat.boundary() || saved.with_cavities() != lat.with_cavities())
            qlsim::detail::raise<DomainError>("dmrg", "checkpoint lattice " + saved.describe() +
                                                          " does not match " + lat.describe());
        init = std::move(state);
        ctx.extra["resumed_from"] = ckpt.string();
    }
    if (!init)
        init = MatrixProductState<double>::random(lat.site_dims(), c.init_bond, c.seed);

    DmrgOptions opt = plan.dmrg;
    opt.on_sweep = [](int sweep, double energy, int bond) {
        std::cerr << "sweep " << sweep << "  E = " << format_real(energy) << "  bond = " << bond << "\n";
    };
    auto r = dmrg_ground_state(mpo, std::move(*init), plan.policy, opt);
    if (!ckpt.empty())
        save_checkpoint(ckpt, r.state, lat);

    const MpsProvider<double> prov(r.state, lat);
    ObservableRow row;
    row.s = c.params.s;
    row.g = c.params.g;
    row.L = c.L;
    row.chi = c.chi;
    row.n_max = c.model == ModelKind::full ? c.n_max : 0;
    row.obs = measure(prov, c.params.s, c.mode);
    row.energy = r.energy;
    row.converged = r.converged;

    std::string energies = "sweep,energy\n";
    for (size_t k = 0; k < r.sweep_energies.size(); ++k)
        energies += std::to_string(k + 1) + "," + format_real(r.sweep_energies[k]) + "\n";
    std::string spectrum = "bond,index,singular_value\n";
    for (const auto &b : bond_spectra(r.state))
        for (size_t k = 0; k < b.singular_values.size(); ++k)
            spectrum += std::to_string(b.bond) + "," + std::to_string(k) + "," + format_real(b.singular_values[k]) + "\n";
    std::string pairing = "bond,pairing_score,trivial\n";
    for (const auto &d : spectrum_degeneracy_report(r.state))
        pairing += std::to_string(d.bond) + "," + format_real(d.score) + "," + (d.trivial ? "1" : "0") + "\n";

    ctx.out.write("energies.csv", energies);
    ctx.out.write("observables.csv", detail::observables_block(row));
    ctx.out.write("profiles.csv", detail::profiles_csv(prov));
    ctx.out.write("spectrum.csv", spectrum);
    ctx.out.write("pairing.csv", pairing);
    ctx.extra["sweeps"] = r.sweeps;
    ctx.extra["converged"] = r.converged;
    ctx.extra["max_truncation"] = r.max_truncation;
    ctx.extra["max_bond"] = r.max_bond;
    std::cout << "E = " << format_real(r.energy) << " after " << r.sweeps << " sweeps"
              << (r.converged ? "" : " (not converged)") << "\n";
    if (!r.converged) {
        std::cerr << "error: energy not converged to " << c.energy_tol << " within " << c.sweeps << " sweeps\n";
        return numeric_error;
    }
    return ok;
}

inline std::string sweep_csv(const SweepResult &res) {
    std::string out = std::string(observable_csv_header()) + ",status\n";
    for (const auto &p : res.points)
        out += to_csv(p.row) + "," + detail::csv_text(p.row.status) + "\n";
    return out;
}

inline int cmd_sweep(Context &ctx) {
    const RunConfig &c = ctx.inv.config;
    const SweepPlan plan = c.sweep_plan();
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = run_sweep(plan, [&](size_t k, const SweepPoint &p) {
        std::cerr << "[" << k + 1 << "/" << plan.grid.size() << "] " << to_string(plan.axis) << " = "
                  << format_real(plan.grid[k]) << "  " << p.row.status << "  "
                  << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
    });
    ctx.out.write("sweep.csv", sweep_csv(res));
    auto timing = nlohmann::json::array();
    int failed = 0;
    for (const auto &p : res.points) {
        timing.push_back({{"seconds", p.seconds}, {"sweeps", p.sweeps}, {"max_truncation", p.max_truncation},
                          {"method", p.method}, {"status", p.row.status}});
        failed += p.row.status != "ok";
    }
    ctx.extra["points"] = timing;
    ctx.extra["failed_points"] = failed;
    std::cout << res.points.size() - failed << " of " << res.points.size() << " points ok\n";
    return ok;
}

inline std::vector<FitPoint> fit_points(const detail::CsvTable &t, const std::string &x_name, const std::string &y_name) {
    const int xc = t.column(x_name), yc = t.column(y_name), sc = t.column("status");
    if (xc < 0 || yc < 0)
        qlsim::detail::raise<DomainError>("fit", "input lacks column '" + (xc < 0 ? x_name : y_name) + "'");
    std::vector<FitPoint> pts;
    for (const auto &r : t.rows) {
        if (static_cast<int>(r.size()) <= std::max(xc, yc))
            qlsim::detail::raise<DomainError>("fit", "short CSV row");
        if (sc >= 0 && sc < static_cast<int>(r.size()) && r[static_cast<size_t>(sc)] != "ok")
            continue;
        const double x = detail::csv_real(r[static_cast<size_t>(xc)]);
        const double y = detail::csv_real(r[static_cast<size_t>(yc)]);
        if (std::isfinite(x) && std::isfinite(y))
            pts.push_back({x, std::abs(y)});
    }
    return pts;
}

inline double model_value(double x, double x_c, double amp, double beta, FitSide side) {
    const double d = side == FitSide::above ? x - x_c : x_c - x;
    return d > 0 ? amp * std::pow(d, beta) : 0.0;
}

inline int cmd_fit(Context &ctx) {
    const RunConfig &c = ctx.inv.config;
    const fs::path input = c.input.empty() ? fs::path(c.out) / "sweep.csv" : fs::path(c.input);
    const auto pts = fit_points(detail::read_csv(input), to_string(c.axis), c.column);
    const auto f = fit_power_law(pts, c.side, c.fit_options());

    std::string table = "column,side,x_c,beta,amplitude,residual,log_residual,fixed_beta,fixed_beta_x_c,"
                        "fixed_beta_amplitude,fixed_beta_residual,noise_floor,window_lo,window_hi,n_points,iterations\n";
    table += c.column + "," + to_string(f.side);
    for (double v : {f.x_c, f.beta, f.amplitude, f.residual, f.log_residual, f.fixed_beta, f.fixed_beta_x_c,
                     f.fixed_beta_amplitude, f.fixed_beta_residual, f.noise_floor, f.window_lo, f.window_hi})
        table += "," + format_real(v);
    table += "," + std::to_string(f.n_points) + "," + std::to_string(f.iterations) + "\n";

    std::string curve = "x,value,in_window,model,model_fixed_beta\n";
    for (const auto &p : pts) {
        const bool in = p.x >= f.window_lo && p.x <= f.window_hi;
        curve += format_real(p.x) + "," + format_real(p.value) + "," + (in ? "1" : "0") + "," +
                 format_real(model_value(p.x, f.x_c, f.amplitude, f.beta, f.side)) + "," +
                 format_real(model_value(p.x, f.fixed_beta_x_c, f.fixed_beta_amplitude, f.fixed_beta, f.side)) + "\n";
    }
    ctx.out.write("fit.csv", table);
    ctx.out.write("fit_curve.csv", curve);
    ctx.extra["input"] = input.string();
    std::cout << c.column << ": x_c = " << format_real(f.x_c) << ", beta = " << format_real(f.beta) << " ("
              << f.n_points << " points in [" << format_real(f.window_lo) << ", " << format_real(f.window_hi)
              << "])\n";
    return ok;
}

inline int cmd_phase_diagram(Context &ctx) {
    const RunConfig &c = ctx.inv.config;
    std::string out = std::string(observable_csv_header()) + ",status,phase\n";
    const auto thresholds = c.thresholds();
    for (double s : c.phase_s) {
        SweepPlan plan = c.sweep_plan();
        plan.axis = SweepAxis::g;
        plan.base.s = s;
        plan.grid = c.phase_g;
        const auto res = run_sweep(plan);
        for (const auto &p : res.points) {
            const std::string phase = p.row.status == "ok" ? to_string(classify_phase(p.row.obs, thresholds)) : "failed";
            out += to_csv(p.row) + "," + detail::csv_text(p.row.status) + "," + phase + "\n";
            std::cerr << "s = " << format_real(s) << "  g = " << format_real(p.row.g) << "  " << phase << "\n";
        }
    }
    ctx.out.write("phase_diagram.csv", out);
    return ok;
}

inline int cmd_symmetry_check(Context &ctx) {
    const RunConfig &c = ctx.inv.config;
    const LatticeSpec lat = lattice_layout(c.sym_cells, c.sym_boundary, c.sym_n_max);
    check_budget(lat, kDefaultDimBudget, "symmetry-check");
    const ModelParams &p = c.params;
    const auto h = build_full_hamiltonian(p, lat);
    const double tol = 1e-12;

    std::vector<SymmetryOperator> ops{parity_operator(lat)};
    if (lat.periodic() && lat.n_cells() % 2 == 0)
        ops.push_back(quasi_translation(lat));
    for (auto &g : gauge_generators(lat))
        ops.push_back(std::move(g));

    std::string out = "operator,s,g,relative_norm,expected,pass\n";
    int failures = 0;
    const auto rows = symmetry_report(h, ops);
    for (size_t k = 0; k < ops.size(); ++k) {
        const bool expect = ops[k].commutes_for(p);
        const bool pass = expect ? rows[k].relative_norm <= tol : rows[k].relative_norm > tol;
        failures += !pass;
        out += rows[k].name + "," + format_real(p.s) + "," + format_real(p.g) + "," + format_real(rows[k].relative_norm) +
               "," + (expect ? "commutes" : "breaks") + "," + (pass ? "1" : "0") + "\n";
    }
    // Duality: U H(s) U^dagger = H(-s).
    ModelParams flipped = p;
    flipped.s = -p.s;
    const auto u = duality_unitary(lat).unitary;
    OperatorMatrix diff = u * h * u.adjoint() - build_full_hamiltonian(flipped, lat);
    const double hn = h.frobenius_norm();
    const double dual = hn > 0 ? diff.frobenius_norm() / hn : diff.frobenius_norm();
    const bool dual_pass = dual <= tol;
    failures += !dual_pass;
    out += "U(s->-s)," + format_real(p.s) + "," + format_real(p.g) + "," + format_real(dual) + ",maps," +
           (dual_pass ? "1" : "0") + "\n";
    ctx.out.write("symmetry_report.csv", out);
    ctx.extra["lattice"] = lat.describe();
    ctx.extra["failed_checks"] = failures;
    std::cout << out;
    return ok;
}

inline int cmd_polaron_check(Context &ctx) {
    const RunConfig &c = ctx.inv.config;
    std::string out = "check,parameter,value,tolerance,pass\n";
    auto add = [&](const std::string &check, double param, double value, double tol, bool pass) {
        out += check + "," + format_real(param) + "," + format_real(value) + "," + format_real(tol) + "," +
               (pass ? "1" : "0") + "\n";
    };
    for (double g : c.polaron_g) {
        const double gamma = solve_gamma(g, c.params.omega);
        const double resid = std::abs(coupling_for_gamma(gamma, c.params.omega) - g);
        add("solve_gamma_residual", g, resid, 1e-12, resid <= 1e-12);
        ModelParams p = c.params;
        p.g = g;
        const auto pc = renormalized_couplings(p, CouplingForm::printed);
        if (g > 0) {
            const double d = std::abs(pc.J - pc.J_alternate);
            add("J_forms_difference", g, d, 1e-10, d <= 1e-10);
        }
    }
    const double g_small = 1e-4;
    const double slope = solve_gamma(g_small, 1.0) / g_small;
    add("gamma_slope_small_g", g_small, slope, 0.02, std::abs(slope + 1.0) <= 0.02);

    const LatticeSpec lat = lattice_layout(c.polaron_cells, Boundary::periodic, c.polaron_n_max);
    const auto chain = LatticeSpec::qutrit_chain(lat.n_qutrits(), Boundary::periodic);
    std::vector<double> diffs;
    for (double gamma : {-0.2, -0.1, -0.05}) {
        ModelParams p = c.params;
        p.g = coupling_for_gamma(gamma, p.omega);
        const auto o = polaron_oracle(p, lat, c.polaron_n_max);
        const double d = polaron_discrepancy(o, build_effective_hamiltonian(renormalized_couplings(p, c.form), chain));
        diffs.push_back(d);
        add("oracle_discrepancy", gamma, d, std::numeric_limits<double>::quiet_NaN(), true);
    }
    for (size_t k = 1; k < diffs.size(); ++k) {
        const double ratio = diffs[k - 1] / diffs[k];
        // expected window [64, 1024] for an eighth-order remainder
        add("oracle_halving_ratio", k == 1 ? -0.1 : -0.05, ratio, 1024.0, ratio >= 64.0 && ratio <= 1024.0);
    }
    ctx.out.write("polaron_report.csv", out);
    ctx.extra["oracle_lattice"] = lat.describe();
    std::cout << out;
    return ok;
}

// ---------------------------------------------------------------------------
// Dispatch

inline nlohmann::json manifest(const Context &ctx, int code, const std::string &error, double seconds,
                               const std::vector<std::string> &args) {
    nlohmann::json m;
    m["tool"] = "qlsim";
    m["version"] = QLSIM_VERSION;
    m["subcommand"] = ctx.inv.subcommand;
    m["arguments"] = args;
    m["config"] = serialize_config(ctx.inv.config);
    m["config_file"] = "config-" + ctx.inv.subcommand + ".ini";
    m["rerun"] = "qlsim " + ctx.inv.subcommand + " --config config-" + ctx.inv.subcommand + ".ini" +
                 (ctx.inv.checkpoint.empty() ? "" : " --checkpoint " + ctx.inv.checkpoint);
    m["seed"] = ctx.inv.config.seed;
    m["workers"] = ctx.inv.config.workers;
    m["versions"] = {{"qlsim", QLSIM_VERSION},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"compiler", __VERSION__},
                     {"cplusplus", __cplusplus}};
    m["wall_seconds"] = seconds;
    m["timestamp"] = detail::utc_timestamp();
    m["exit_code"] = code;
    if (!error.empty())
        m["error"] = error;
    m["outputs"] = ctx.out.files();
    m["details"] = ctx.extra;
    return m;
}

inline int default_workers() {
    if (const char *w = std::getenv("QLSIM_WORKERS")) {
        try {
            const long long n = qlsim::detail::parse_integer(w);
            if (n >= 1 && n <= 1024)
                return static_cast<int>(n);
        } catch (const std::exception &) {
        }
        std::cerr << "warning: ignoring invalid QLSIM_WORKERS='" << w << "'\n";
    }
    return 1;
}

/// Full CLI entry point; returns the process exit code.
inline int run(int argc, char **argv) {
    CLI::App app{"qlsim: Rabi-Hubbard qutrit chain simulator"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.set_version_flag("--version", QLSIM_VERSION);

    std::string config_path, out_dir, checkpoint;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers, cells, chi, nmax;
    std::optional<double> s, g;
    app.add_option("--config", config_path, "configuration file")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed, "random seed");
    app.add_option("--workers", workers, "worker threads (default: QLSIM_WORKERS or 1)");
    app.add_option("--s", s, "drive s");
    app.add_option("--g", g, "coupling g");
    app.add_option("--cells", cells, "cells (full model) or qutrits (effective model)");
    app.add_option("--chi", chi, "bond dimension cap");
    app.add_option("--nmax", nmax, "photon cutoff");

    auto *c_ed = app.add_subcommand("ed", "exact ground state");
    auto *c_dmrg = app.add_subcommand("dmrg", "DMRG ground state");
    c_dmrg->add_option("--checkpoint", checkpoint, "MPS checkpoint to resume from and write");
    auto *c_sweep = app.add_subcommand("sweep", "parameter sweep");
    auto *c_fit = app.add_subcommand("fit", "power-law fit of a sweep");
    auto *c_phase = app.add_subcommand("phase-diagram", "phase labels on an (s, g) grid");
    auto *c_sym = app.add_subcommand("symmetry-check", "symmetry report for the full model");
    auto *c_pol = app.add_subcommand("polaron-check", "effective model against the exact polaron transform");
    const std::vector<std::pair<CLI::App *, int (*)(Context &)>> handlers{
        {c_ed, cmd_ed},       {c_dmrg, cmd_dmrg}, {c_sweep, cmd_sweep},          {c_fit, cmd_fit},
        {c_phase, cmd_phase_diagram}, {c_sym, cmd_symmetry_check}, {c_pol, cmd_polaron_check}};

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return domain_error;
    }

    std::vector<std::string> args(argv + 1, argv + argc);
    Invocation inv;
    int (*handler)(Context &) = nullptr;
    for (const auto &[sub, fn] : handlers)
        if (sub->parsed()) {
            inv.subcommand = sub->get_name();
            handler = fn;
        }
    inv.checkpoint = checkpoint;

    try {
        std::vector<std::string> keys;
        RunConfig c = config_path.empty() ? RunConfig{} : parse_config(detail::read_file(config_path), &keys);
        if (std::find(keys.begin(), keys.end(), "run.workers") == keys.end())
            c.workers = default_workers();
        if (!out_dir.empty())
            c.out = out_dir;
        if (seed)
            c.seed = *seed;
        if (workers)
            c.workers = *workers;
        if (s)
            c.params.s = *s;
        if (g)
            c.params.g = *g;
        if (chi)
            c.chi = *chi;
        const bool sym = inv.subcommand == "symmetry-check", pol = inv.subcommand == "polaron-check";
        if (cells)
            (sym ? c.sym_cells : pol ? c.polaron_cells : c.L) = *cells;
        if (nmax)
            (sym ? c.sym_n_max : pol ? c.polaron_n_max : c.n_max) = *nmax;
        const auto problems = config_violations(c);
        if (!problems.empty()) {
            std::string msg = "invalid configuration:";
            for (const auto &p : problems)
                msg += "\n  " + p;
            throw ConfigError(msg, problems);
        }
        inv.config = c;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return domain_error;
    }

    Context ctx{inv, OutputDir(inv.config.out)};
    const auto t0 = std::chrono::steady_clock::now();
    int code = ok;
    std::string error;
    try {
        ctx.out.write("config-" + inv.subcommand + ".ini", serialize_config(inv.config));
        code = handler(ctx);
    } catch (const CapacityError &e) {
        code = capacity_error;
        error = e.what();
    } catch (const NumericError &e) {
        code = numeric_error;
        error = e.what();
    } catch (const std::exception &e) {
        // DomainError, FitError, UnsupportedError and I/O failures
        code = domain_error;
        error = e.what();
    }
    if (!error.empty())
        std::cerr << "error: " << error << "\n";
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    try {
        ctx.out.write("manifest-" + inv.subcommand + ".json", manifest(ctx, code, error, seconds, args).dump(2) + "\n");
    } catch (const std::exception &e) {
        std::cerr << "error: cannot write manifest: " << e.what() << "\n";
        if (code == ok)
            code = domain_error;
    }
    return code;
}

} // namespace qlsim::cli
