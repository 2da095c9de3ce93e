#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "qlsim/criticality.hpp"
#include "qlsim/symmetries.hpp"

using namespace qlsim;

namespace {

std::vector<FitPoint> power_data(double x_c, double beta, double amp, double lo, double hi, int n, FitSide side,
                                 double noise = 0.0, unsigned seed = 1) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<FitPoint> pts;
    for (int k = 0; k < n; ++k) {
        const double x = lo + (hi - lo) * (k + 1) / n;
        const double d = side == FitSide::above ? x - x_c : x_c - x;
        double v = d > 0 ? amp * std::pow(d, beta) : 0.0;
        if (noise > 0)
            v *= 1.0 + noise * nd(rng);
        pts.push_back({x, v});
    }
    return pts;
}

double single_qutrit_ground(double Omega, double s) {
    const DenseC h = -(Omega / std::sqrt(3.0)) * gell_mann(8).dense() - s * gell_mann(1).dense();
    Eigen::SelfAdjointEigenSolver<DenseC> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

OrderParameters params(double phi, double phi4, double varphi, double entropy) {
    OrderParameters o;
    o.phi = phi;
    o.phi4 = phi4;
    o.phi6 = 0.0;
    o.varphi = varphi;
    o.entropy_mean = entropy;
    return o;
}

} // namespace

TEST(PowerLawFit, RecoversExactIsingExponent) {
    const auto r = fit_power_law(power_data(1.0, 0.125, 1.0, 1.0, 1.2, 20, FitSide::above), FitSide::above);
    EXPECT_NEAR(r.x_c, 1.0, 1e-3);
    EXPECT_NEAR(r.beta, 0.125, 1e-3);
    EXPECT_NEAR(r.amplitude, 1.0, 1e-3);
    EXPECT_LT(r.residual, 1e-10);
    EXPECT_GE(r.n_points, 4);
    EXPECT_LE(r.window_hi - r.x_c, 0.3 * 0.19 + 1e-12);
}

TEST(PowerLawFit, ExactForSeveralExponents) {
    for (double beta : {0.125, 0.5, 1.0}) {
        const auto r = fit_power_law(power_data(0.7, beta, 2.5, 0.5, 1.1, 40, FitSide::above), FitSide::above);
        EXPECT_LT(r.residual, 1e-10) << beta;
        EXPECT_NEAR(r.beta, beta, 1e-8) << beta;
        EXPECT_NEAR(r.x_c, 0.7, 1e-8) << beta;
        EXPECT_NEAR(r.amplitude, 2.5, 1e-7) << beta;
    }
}

TEST(PowerLawFit, OrderedBelowTheTransition) {
    const auto r = fit_power_law(power_data(0.9, 0.125, 0.8, 0.5, 1.3, 40, FitSide::below), FitSide::below);
    EXPECT_NEAR(r.x_c, 0.9, 1e-8);
    EXPECT_NEAR(r.beta, 0.125, 1e-8);
    EXPECT_LT(r.residual, 1e-10);
    EXPECT_LT(r.window_hi, 0.9);
    EXPECT_EQ(r.side, FitSide::below);
}

TEST(PowerLawFit, ScaleCovariant) {
    auto pts = power_data(1.0, 0.3, 1.0, 0.8, 1.4, 30, FitSide::above, 0.01, 5);
    const auto a = fit_power_law(pts, FitSide::above);
    for (auto &p : pts)
        p.value *= 7.3;
    const auto b = fit_power_law(pts, FitSide::above);
    EXPECT_NEAR(b.x_c, a.x_c, 1e-10);
    EXPECT_NEAR(b.beta, a.beta, 1e-10);
    EXPECT_NEAR(b.amplitude / a.amplitude, 7.3, 1e-9);
}

TEST(PowerLawFit, OnePercentNoise) {
    for (unsigned seed = 1; seed <= 20; ++seed) {
        const auto r =
            fit_power_law(power_data(1.0, 0.125, 1.0, 1.0, 1.2, 100, FitSide::above, 0.01, seed), FitSide::above);
        EXPECT_NEAR(r.beta, 0.125, 0.02) << seed;
    }
}

TEST(PowerLawFit, FixedExponentResidual) {
    const auto ising = fit_power_law(power_data(1.0, 0.125, 1.0, 0.9, 1.3, 40, FitSide::above), FitSide::above);
    EXPECT_LT(ising.fixed_beta_residual, 1e-9);
    EXPECT_NEAR(ising.fixed_beta_x_c, 1.0, 1e-6);
    const auto mean_field = fit_power_law(power_data(1.0, 0.5, 1.0, 0.9, 1.3, 40, FitSide::above), FitSide::above);
    EXPECT_GT(mean_field.fixed_beta_residual, 1e-3);
    EXPECT_LT(mean_field.residual, 1e-10);
}

TEST(PowerLawFit, NoiseFloorExcludesDisorderedTail) {
    auto pts = power_data(1.0, 0.125, 1.0, 0.8, 1.2, 40, FitSide::above);
    for (auto &p : pts)
        if (p.x <= 1.0)
            p.value = 1e-3;
    const auto r = fit_power_law(pts, FitSide::above);
    EXPECT_NEAR(r.noise_floor, 1e-3, 1e-12);
    EXPECT_NEAR(r.beta, 0.125, 1e-6);
    EXPECT_NEAR(r.x_c, 1.0, 1e-6);
}

TEST(PowerLawFit, RejectsDegenerateInput) {
    EXPECT_THROW(fit_power_law({{1, 1}, {2, 2}, {3, 3}}, FitSide::above), FitError);
    EXPECT_THROW(fit_power_law({{1, 0.5}, {2, 0.5}, {3, 0.5}, {4, 0.5}, {5, 0.5}}, FitSide::above), FitError);
    EXPECT_THROW(fit_power_law({{1, 0}, {2, 0}, {3, 0}, {4, 0}}, FitSide::above), FitError);
    EXPECT_THROW(fit_power_law({{1, 0.1}, {1, 0.2}, {3, 0.3}, {4, 0.4}}, FitSide::above), FitError);
    // FitError is a domain error for exit-code purposes.
    EXPECT_THROW(fit_power_law({{1, 1}}, FitSide::below), DomainError);
}

TEST(PhaseLabels, Definitions) {
    EXPECT_EQ(classify_phase(params(0, 0, 0, 0.01)), Phase::N);
    EXPECT_EQ(classify_phase(params(0, 0, 0.7, 0.2)), Phase::CDW);
    EXPECT_EQ(classify_phase(params(0.4, 0.3, 0, 0.2)), Phase::SR);
    EXPECT_EQ(classify_phase(params(std::nan(""), 0.5, 0.0, 0.8)), Phase::SR);
    EXPECT_EQ(classify_phase(params(0, 0, 0, 0.6)), Phase::NE);
    EXPECT_EQ(classify_phase(params(0.5, 0, -0.5, 0.6)), Phase::supersolid_candidate);
    EXPECT_EQ(to_string(Phase::supersolid_candidate), "supersolid-candidate");
}

TEST(PhaseLabels, DualPointsShareLabels) {
    const auto lat = lattice_layout(3, Boundary::open, 3);
    const auto u = duality_unitary(lat);
    for (double g : {0.2, 0.8, 1.4}) {
        const ModelParams p{1.0, 1.0, 0.3, g}, q{1.0, 1.0, -0.3, g};
        const auto a = ground_state(build_full_hamiltonian(p, lat));
        const StateVectorProvider pa(a.eigenvectors[0], lat);
        const StateVectorProvider pb(u.unitary.apply(a.eigenvectors[0]), lat);
        const auto oa = measure(pa, p.s, ExtractionMode::correlator);
        const auto ob = measure(pb, q.s, ExtractionMode::correlator);
        EXPECT_NEAR(oa.phi, ob.phi, 1e-10);
        EXPECT_NEAR(oa.phi4, ob.phi4, 1e-10);
        EXPECT_EQ(classify_phase(oa), classify_phase(ob));
        const auto b = ground_state(build_full_hamiltonian(q, lat));
        EXPECT_NEAR(a.eigenvalues[0], b.eigenvalues[0], 1e-10);
    }
}

TEST(Sweep, DecoupledPointsAreAnalytic) {
    SweepPlan plan;
    plan.model = ModelKind::full;
    plan.engine = Engine::ed;
    plan.axis = SweepAxis::s;
    plan.base = {1.0, 0.9, 0.0, 0.0};
    plan.grid = {-0.3, -0.1, 0.1, 0.3};
    plan.L = 3;
    plan.n_max = 3;
    plan.mode = ExtractionMode::pinned;
    const auto res = run_sweep(plan);
    ASSERT_EQ(res.points.size(), 4u);
    const auto lat = plan.lattice();
    for (size_t k = 0; k < 4; ++k) {
        const auto &row = res.points[k].row;
        EXPECT_EQ(row.status, "ok");
        EXPECT_NEAR(row.energy, lat.n_qutrits() * single_qutrit_ground(0.9, plan.grid[k]), 1e-10);
        EXPECT_NEAR(row.obs.phi, 0.0, 1e-10);
        EXPECT_NEAR(row.obs.phi4, 0.0, 1e-10);
        EXPECT_NEAR(row.obs.phi6, 0.0, 1e-10);
        EXPECT_NEAR(row.obs.cdw_contrast, 0.0, 1e-10);
        EXPECT_EQ(row.s, plan.grid[k]);
    }
}

TEST(Sweep, MatchesPointByPointDiagonalization) {
    SweepPlan plan;
    plan.model = ModelKind::full;
    plan.engine = Engine::ed;
    plan.base = {1.0, 1.0, 0.2, 0.0};
    plan.grid = {0.3, 0.6, 0.9};
    plan.L = 2;
    plan.n_max = 4;
    plan.boundary = Boundary::periodic;
    plan.mode = ExtractionMode::pinned;
    const auto res = run_sweep(plan);
    const auto lat = plan.lattice();
    for (size_t k = 0; k < plan.grid.size(); ++k) {
        const ModelParams p{1.0, 1.0, 0.2, plan.grid[k]};
        const auto r = ground_state(build_full_hamiltonian(p, lat));
        EXPECT_NEAR(res.points[k].row.energy, r.eigenvalues[0], 1e-12);
        const auto o = measure(StateVectorProvider(r.eigenvectors[0], lat), 0.2, plan.mode);
        EXPECT_NEAR(res.points[k].row.obs.phi, o.phi, 1e-10);
        EXPECT_NEAR(res.points[k].row.obs.phi4, o.phi4, 1e-10);
        EXPECT_NEAR(res.points[k].row.obs.varphi, o.varphi, 1e-10);
        EXPECT_NEAR(res.points[k].row.obs.entropy_mean, o.entropy_mean, 1e-10);
    }
}

TEST(Sweep, DmrgIsDeterministic) {
    SweepPlan plan;
    plan.model = ModelKind::effective;
    plan.engine = Engine::dmrg;
    plan.base = {1.0, 1.0, 0.2, 0.0};
    plan.grid = {0.3, 0.5, 0.7};
    plan.L = 10;
    plan.policy.chi_max = 16;
    auto csv = [&] {
        std::string s;
        for (const auto &r : run_sweep(plan).rows())
            s += to_csv(r) + "\n";
        return s;
    };
    const std::string a = csv();
    EXPECT_EQ(a, csv());
    plan.warm_start = false;
    const std::string cold = csv();
    plan.workers = 3;
    EXPECT_EQ(cold, csv());
}

TEST(Sweep, DmrgMatchesEffectiveDiagonalization) {
    SweepPlan plan;
    plan.model = ModelKind::effective;
    plan.base = {1.0, 1.0, 0.065, 0.0};
    plan.grid = {0.2, 0.6};
    plan.L = 8;
    plan.policy.chi_max = 81;
    plan.dmrg.local_max_iter = 100;
    const auto dm = run_sweep(plan);
    plan.engine = Engine::ed;
    const auto ed = run_sweep(plan);
    for (size_t k = 0; k < plan.grid.size(); ++k) {
        EXPECT_NEAR(dm.points[k].row.energy, ed.points[k].row.energy, 1e-8);
        EXPECT_NEAR(dm.points[k].row.obs.varphi, ed.points[k].row.obs.varphi, 1e-6);
        EXPECT_NEAR(dm.points[k].row.obs.phi4, ed.points[k].row.obs.phi4, 1e-6);
        EXPECT_TRUE(std::isnan(dm.points[k].row.obs.phi));
    }
}

TEST(Sweep, FailuresAreRecordedPerRow) {
    SweepPlan plan;
    plan.model = ModelKind::full;
    plan.engine = Engine::ed;
    plan.base = {1.0, 1.0, 0.1, 0.0};
    plan.grid = {0.2, 0.4};
    plan.L = 12;
    plan.n_max = 4;
    const auto res = run_sweep(plan);
    ASSERT_EQ(res.points.size(), 2u);
    for (const auto &p : res.points) {
        EXPECT_NE(p.row.status, "ok");
        EXPECT_FALSE(p.row.converged);
        EXPECT_TRUE(std::isnan(p.row.energy));
    }
    EXPECT_EQ(res.points[1].row.g, 0.4);
}

TEST(Sweep, PlanValidation) {
    SweepPlan plan;
    plan.grid = {0.3, 0.2};
    EXPECT_THROW(run_sweep(plan), DomainError);
    plan.grid = {};
    EXPECT_THROW(run_sweep(plan), DomainError);
    plan.grid = {-0.1, 0.2};
    EXPECT_THROW(run_sweep(plan), DomainError);
}
