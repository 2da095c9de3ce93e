#pragma once

// Parameter sweeps, power-law fits near transitions and phase labels.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "qlsim/dmrg.hpp"
#include "qlsim/ed.hpp"
#include "qlsim/model.hpp"
#include "qlsim/observables.hpp"
#include "qlsim/polaron.hpp"

namespace qlsim {

enum class ModelKind { full, effective };
enum class Engine { ed, dmrg };
enum class SweepAxis { g, s };
enum class FitSide { above, below };

inline std::string to_string(ModelKind m) { return m == ModelKind::full ? "full" : "effective"; }
inline std::string to_string(Engine e) { return e == Engine::ed ? "ed" : "dmrg"; }
inline std::string to_string(SweepAxis a) { return a == SweepAxis::g ? "g" : "s"; }
inline std::string to_string(FitSide s) { return s == FitSide::above ? "above" : "below"; }

struct SweepPlan {
    ModelKind model = ModelKind::effective;
    Engine engine = Engine::dmrg;
    SweepAxis axis = SweepAxis::g;
    ModelParams base;          // the swept coupling is overwritten per point
    std::vector<double> grid;  // values of the swept coupling
    int L = 16;                // cells (full model) or qutrits (effective model)
    Boundary boundary = Boundary::open;
    int n_max = 4;
    CouplingForm form = CouplingForm::printed;
    ExtractionMode mode = ExtractionMode::correlator;
    PinningField pinning;
    TruncationPolicy policy;
    DmrgOptions dmrg;
    EdOptions ed;
    std::uint64_t seed = 20240611;
    int init_bond = 8;         // bond dimension of the random initial MPS
    bool warm_start = true;    // start each DMRG point from the previous state
    int workers = 1;           // only used without warm starts

    LatticeSpec lattice() const {
        return model == ModelKind::full ? lattice_layout(L, boundary, n_max) : LatticeSpec::qutrit_chain(L, boundary);
    }

    ModelParams params_at(double x) const {
        ModelParams p = base;
        (axis == SweepAxis::g ? p.g : p.s) = x;
        return p;
    }

    void validate() const {
        if (grid.empty())
            detail::raise<DomainError>("SweepPlan", "grid is empty");
        for (size_t k = 1; k < grid.size(); ++k)
            if (!(grid[k] > grid[k - 1]))
                detail::raise<DomainError>("SweepPlan", "grid must be strictly increasing");
        for (double x : grid)
            params_at(x).validate();
        if (workers < 1)
            detail::raise<DomainError>("SweepPlan", "workers must be >= 1");
        if (init_bond < 1)
            detail::raise<DomainError>("SweepPlan", "init_bond must be >= 1");
        policy.validate();
        dmrg.validate();
        (void)lattice();
    }
};

struct SweepPoint {
    ObservableRow row;
    double seconds = 0.0;
    int sweeps = 0;
    double max_truncation = 0.0;
    std::string method;
};

struct SweepResult {
    std::vector<SweepPoint> points;

    std::vector<ObservableRow> rows() const {
        std::vector<ObservableRow> r;
        for (const auto &p : points)
            r.push_back(p.row);
        return r;
    }
};

namespace detail {

inline OrderParameters nan_observables(ExtractionMode mode) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    OrderParameters o{nan, nan, nan, nan, nan, nan, nan, mode};
    return o;
}

inline std::vector<ProductTerm> sweep_terms(const SweepPlan &plan, const ModelParams &p, const LatticeSpec &lat) {
    auto terms = plan.model == ModelKind::full ? full_model_terms(p, lat)
                                               : effective_terms(renormalized_couplings(p, plan.form), lat);
    add_pinning(terms, lat, plan.pinning);
    return terms;
}

inline SweepPoint sweep_point_ed(const SweepPlan &plan, const ModelParams &p, const LatticeSpec &lat) {
    check_budget(lat, kDefaultDimBudget, "run_sweep");
    const auto terms = sweep_terms(plan, p, lat);
    const auto h = terms_to_operator(std::span<const int>(lat.site_dims()), terms);
    const auto r = ground_state(h, 1, plan.ed);
    const StateVectorProvider prov(r.eigenvectors[0], lat);
    SweepPoint pt;
    pt.row.obs = measure(prov, p.s, plan.mode);
    pt.row.energy = r.eigenvalues[0];
    pt.row.converged = true;
    pt.row.chi = 0;
    pt.method = r.method;
    return pt;
}

inline SweepPoint sweep_point_dmrg(const SweepPlan &plan, const ModelParams &p, const LatticeSpec &lat,
                                   std::optional<MatrixProductState<double>> &state, std::uint64_t seed) {
    const auto terms = sweep_terms(plan, p, lat);
    const auto mpo = build_mpo<double>(std::span<const int>(lat.site_dims()), terms);
    auto init = state ? *state : MatrixProductState<double>::random(lat.site_dims(), plan.init_bond, seed);
    auto r = dmrg_ground_state(mpo, std::move(init), plan.policy, plan.dmrg);
    SweepPoint pt;
    const MpsProvider<double> prov(r.state, lat);
    pt.row.obs = measure(prov, p.s, plan.mode);
    pt.row.energy = r.energy;
    pt.row.converged = r.converged;
    pt.row.chi = plan.policy.chi_max;
    pt.sweeps = r.sweeps;
    pt.max_truncation = r.max_truncation;
    pt.method = "dmrg";
    state = std::move(r.state);
    return pt;
}

} // namespace detail

/// One row per grid point; failures are recorded in the row status.
inline SweepResult run_sweep(const SweepPlan &plan, const std::function<void(size_t, const SweepPoint &)> &on_point = {}) {
    plan.validate();
    const LatticeSpec lat = plan.lattice();
    SweepResult out;
    out.points.resize(plan.grid.size());
    std::mutex report;

    auto run_one = [&](size_t k, std::optional<MatrixProductState<double>> &state) {
        const ModelParams p = plan.params_at(plan.grid[k]);
        const auto t0 = std::chrono::steady_clock::now();
        SweepPoint pt;
        try {
            pt = plan.engine == Engine::ed ? detail::sweep_point_ed(plan, p, lat)
                                           : detail::sweep_point_dmrg(plan, p, lat, state, plan.seed + k);
        } catch (const std::exception &e) {
            pt = SweepPoint{};
            pt.row.obs = detail::nan_observables(plan.mode);
            pt.row.energy = std::numeric_limits<double>::quiet_NaN();
            pt.row.converged = false;
            pt.row.status = e.what();
            state.reset();
        }
        pt.row.s = p.s;
        pt.row.g = p.g;
        pt.row.L = plan.L;
        pt.row.n_max = plan.model == ModelKind::full ? plan.n_max : 0;
        if (plan.engine == Engine::dmrg)
            pt.row.chi = plan.policy.chi_max;
        pt.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.points[k] = pt;
        if (on_point) {
            std::lock_guard<std::mutex> lock(report);
            on_point(k, out.points[k]);
        }
    };

    const bool chained = plan.engine == Engine::dmrg && plan.warm_start;
    if (chained || plan.workers == 1) {
        std::optional<MatrixProductState<double>> state;
        for (size_t k = 0; k < plan.grid.size(); ++k) {
            if (!chained)
                state.reset();
            run_one(k, state);
        }
        return out;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    const int n = std::min<int>(plan.workers, static_cast<int>(plan.grid.size()));
    for (int w = 0; w < n; ++w)
        pool.emplace_back([&] {
            for (size_t k = next++; k < plan.grid.size(); k = next++) {
                std::optional<MatrixProductState<double>> state;
                run_one(k, state);
            }
        });
    for (auto &t : pool)
        t.join();
    return out;
}

// ---------------------------------------------------------------------------
// Power-law fits O = A (x - x_c)^beta on the ordered side

struct FitOptions {
    double noise_floor = -1.0;    // < 0: estimated from the disordered side
    double floor_factor = 3.0;
    double window_fraction = 0.3; // of the x range, measured from x_c; also bounds x_c below the data
    int min_points = 4;
    double fixed_beta = 0.125;    // reference exponent for the fixed-beta residual
    int max_iterations = 50;
};

struct FitResult {
    double x_c = 0.0;
    double beta = 0.0;
    double amplitude = 0.0;
    double residual = 0.0;     // rms of O - model over the window
    double log_residual = 0.0; // rms in ln O
    double fixed_beta = 0.125;
    double fixed_beta_x_c = 0.0;
    double fixed_beta_amplitude = 0.0;
    double fixed_beta_residual = 0.0;
    double noise_floor = 0.0;
    double window_lo = 0.0;
    double window_hi = 0.0;
    int n_points = 0;
    int iterations = 0;
    FitSide side = FitSide::above;
};

struct FitPoint {
    double x = 0.0;
    double value = 0.0;
};

namespace detail {

struct LogFit {
    double log_a = 0.0;
    double beta = 0.0;
    double sse = std::numeric_limits<double>::infinity();
};

/// ln O = ln A + beta ln(x - x_c) over points with x > x_c; beta fixed when given.
inline LogFit log_fit(const std::vector<FitPoint> &pts, double x_c, std::optional<double> beta_fixed) {
    const size_t n = pts.size();
    std::vector<double> u(n), v(n);
    for (size_t k = 0; k < n; ++k) {
        u[k] = std::log(pts[k].x - x_c);
        v[k] = std::log(pts[k].value);
    }
    LogFit f;
    const double mu = std::accumulate(u.begin(), u.end(), 0.0) / n;
    const double mv = std::accumulate(v.begin(), v.end(), 0.0) / n;
    if (beta_fixed) {
        f.beta = *beta_fixed;
    } else {
        double suu = 0, suv = 0;
        for (size_t k = 0; k < n; ++k) {
            suu += (u[k] - mu) * (u[k] - mu);
            suv += (u[k] - mu) * (v[k] - mv);
        }
        f.beta = suu > 0 ? suv / suu : 0.0;
    }
    f.log_a = mv - f.beta * mu;
    f.sse = 0.0;
    for (size_t k = 0; k < n; ++k) {
        const double r = v[k] - f.log_a - f.beta * u[k];
        f.sse += r * r;
    }
    return f;
}

/// Minimize the profile residual over x_c = x_near - exp(t), t in [t_lo, t_hi].
inline std::pair<double, LogFit> best_x_c(const std::vector<FitPoint> &pts, double x_near, double t_lo, double t_hi,
                                          std::optional<double> beta_fixed) {
    auto cost = [&](double t) { return log_fit(pts, x_near - std::exp(t), beta_fixed).sse; };
    const int grid = 120;
    double best_t = t_lo, best_c = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= grid; ++k) {
        const double t = t_lo + (t_hi - t_lo) * k / grid;
        const double c = cost(t);
        if (c < best_c) {
            best_c = c;
            best_t = t;
        }
    }
    const double h = (t_hi - t_lo) / grid;
    double a = std::max(t_lo, best_t - h), b = std::min(t_hi, best_t + h);
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double c1 = b - r * (b - a), c2 = a + r * (b - a);
    double f1 = cost(c1), f2 = cost(c2);
    for (int it = 0; it < 200 && b - a > 1e-14; ++it) {
        if (f1 < f2) {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - r * (b - a);
            f1 = cost(c1);
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + r * (b - a);
            f2 = cost(c2);
        }
    }
    double t = 0.5 * (a + b);
    if (best_c < cost(t))
        t = best_t;
    const double x_c = x_near - std::exp(t);
    return {x_c, log_fit(pts, x_c, beta_fixed)};
}

inline double rms_model(const std::vector<FitPoint> &pts, double x_c, double amp, double beta) {
    double acc = 0.0;
    for (const auto &p : pts) {
        const double r = p.value - amp * std::pow(p.x - x_c, beta);
        acc += r * r;
    }
    return std::sqrt(acc / pts.size());
}

} // namespace detail

/// Least-squares fit of O = A Theta(x - x_c)(x - x_c)^beta (side above) or
/// O = A Theta(x_c - x)(x_c - x)^beta (side below) with free x_c, A, beta.
inline FitResult fit_power_law(std::vector<FitPoint> points, FitSide side, const FitOptions &opt = {}) {
    const char *where = "fit_power_law";
    if (static_cast<int>(points.size()) < opt.min_points)
        detail::raise<FitError>(where, "need at least " + std::to_string(opt.min_points) + " points, got " +
                                           std::to_string(points.size()));
    for (const auto &p : points)
        if (!std::isfinite(p.x) || !std::isfinite(p.value))
            detail::raise<FitError>(where, "non-finite data point");
    // Work on the "above" orientation.
    const double flip = side == FitSide::above ? 1.0 : -1.0;
    for (auto &p : points)
        p.x *= flip;
    std::sort(points.begin(), points.end(), [](const FitPoint &a, const FitPoint &b) { return a.x < b.x; });
    for (size_t k = 1; k < points.size(); ++k)
        if (points[k].x == points[k - 1].x)
            detail::raise<FitError>(where, "duplicate abscissa");
    const double range = points.back().x - points.front().x;
    double vmax = 0.0, vmin = std::numeric_limits<double>::infinity();
    for (const auto &p : points) {
        vmax = std::max(vmax, p.value);
        vmin = std::min(vmin, p.value);
    }
    if (!(vmax > 0.0) || vmax - vmin <= 1e-14 * vmax)
        detail::raise<FitError>(where, "flat or non-positive data (max " + std::to_string(vmax) + ")");

    // Start at the first rise of at least half the largest one, counting the
    // first point as a rise from zero.
    auto rise = [&](size_t k) { return k == 0 ? points[0].value : points[k].value - points[k - 1].value; };
    double max_rise = 0.0;
    for (size_t k = 0; k < points.size(); ++k)
        max_rise = std::max(max_rise, rise(k));
    size_t k0 = 0;
    while (rise(k0) < 0.5 * max_rise)
        ++k0;
    double x_c = k0 > 0 ? 0.5 * (points[k0 - 1].x + points[k0].x) : points[0].x - 0.5 * (points[1].x - points[0].x);

    auto estimate_floor = [&](double xc) {
        if (opt.noise_floor >= 0.0)
            return opt.noise_floor;
        double acc = 0.0;
        int n = 0;
        for (const auto &p : points)
            if (p.x <= xc) {
                acc += p.value * p.value;
                ++n;
            }
        return n ? std::sqrt(acc / n) : 0.0;
    };
    auto select = [&](double xc, double floor) {
        std::vector<FitPoint> s;
        for (const auto &p : points)
            if (p.x > xc && p.x - xc <= opt.window_fraction * range && p.value > opt.floor_factor * floor &&
                p.value > 0.0)
                s.push_back(p);
        return s;
    };

    FitResult res;
    res.side = side;
    res.fixed_beta = opt.fixed_beta;
    std::vector<FitPoint> sel, previous;
    double floor = 0.0;
    detail::LogFit best;
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        floor = estimate_floor(x_c);
        sel = select(x_c, floor);
        if (static_cast<int>(sel.size()) < opt.min_points)
            detail::raise<FitError>(where, "only " + std::to_string(sel.size()) +
                                               " points in the fit window above the noise floor " +
                                               std::to_string(floor));
        const double near = sel.front().x;
        const double t_hi = std::log(opt.window_fraction * range);
        const double t_lo = std::log(1e-9 * range);
        auto [xc_new, f] = detail::best_x_c(sel, near, t_lo, t_hi, std::nullopt);
        best = f;
        const bool same = sel.size() == previous.size() &&
                          std::equal(sel.begin(), sel.end(), previous.begin(),
                                     [](const FitPoint &a, const FitPoint &b) { return a.x == b.x; });
        x_c = xc_new;
        if (same)
            break;
        previous = sel;
    }
    if (!(best.beta > 0.0))
        detail::raise<FitError>(where, "fitted exponent is not positive (" + std::to_string(best.beta) + ")");
    res.iterations = it + 1;
    res.beta = best.beta;
    res.amplitude = std::exp(best.log_a);
    res.log_residual = std::sqrt(best.sse / sel.size());
    res.residual = detail::rms_model(sel, x_c, res.amplitude, res.beta);
    res.noise_floor = floor;
    res.n_points = static_cast<int>(sel.size());
    const auto [xc_fixed, ff] = detail::best_x_c(sel, sel.front().x, std::log(1e-9 * range),
                                                 std::log(opt.window_fraction * range), opt.fixed_beta);
    res.fixed_beta_amplitude = std::exp(ff.log_a);
    res.fixed_beta_residual = detail::rms_model(sel, xc_fixed, res.fixed_beta_amplitude, opt.fixed_beta);
    res.x_c = flip * x_c;
    res.fixed_beta_x_c = flip * xc_fixed;
    const double w0 = flip * sel.front().x, w1 = flip * sel.back().x;
    res.window_lo = std::min(w0, w1);
    res.window_hi = std::max(w0, w1);
    return res;
}

// ---------------------------------------------------------------------------
// Phase labels

enum class Phase { N, SR, CDW, NE, supersolid_candidate };

inline std::string to_string(Phase p) {
    switch (p) {
    case Phase::N: return "N";
    case Phase::SR: return "SR";
    case Phase::CDW: return "CDW";
    case Phase::NE: return "NE";
    case Phase::supersolid_candidate: return "supersolid-candidate";
    }
    return "?";
}

struct PhaseThresholds {
    double sr = 0.1;      // on max(|phi|, |phi4|, |phi6|)
    double cdw = 0.1;     // on |varphi|
    double entropy = 0.3; // bulk mean bond entropy separating NE from N
};

inline Phase classify_phase(const OrderParameters &o, const PhaseThresholds &t = {}) {
    double sr = 0.0;
    for (double v : {o.phi, o.phi4, o.phi6})
        if (std::isfinite(v))
            sr = std::max(sr, std::abs(v));
    const bool is_sr = sr > t.sr;
    const bool is_cdw = std::isfinite(o.varphi) && std::abs(o.varphi) > t.cdw;
    if (is_sr && is_cdw)
        return Phase::supersolid_candidate;
    if (is_sr)
        return Phase::SR;
    if (is_cdw)
        return Phase::CDW;
    return std::isfinite(o.entropy_mean) && o.entropy_mean > t.entropy ? Phase::NE : Phase::N;
}

} // namespace qlsim
