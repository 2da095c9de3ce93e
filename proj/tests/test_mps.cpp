#include <gtest/gtest.h>

#include <random>

#include "qlsim/dmrg.hpp"
#include "qlsim/ed.hpp"
#include "qlsim/model.hpp"
#include "qlsim/polaron.hpp"

using namespace qlsim;

namespace {

OperatorMatrix random_local(int d, std::mt19937 &rng) {
    std::normal_distribution<double> nd;
    DenseC m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            m(i, j) = {nd(rng), nd(rng)};
    return OperatorMatrix::from_dense(m);
}

double ed_energy(const OperatorMatrix &h) { return ground_state(h).eigenvalues[0]; }

} // namespace

TEST(Mps, RandomIsCanonicalAndNormalized) {
    const std::vector<int> dims{3, 4, 3, 4, 3};
    auto m = MatrixProductState<double>::random(dims, 8, 1);
    EXPECT_LE(m.canonical_error(), 1e-10);
    EXPECT_NEAR(m.to_dense().norm(), 1.0, 1e-12);
    EXPECT_EQ(m.bond_dim(0), 3);
    EXPECT_EQ(m.bond_dim(1), 8);
    EXPECT_EQ(m.bond_dim(3), 3);
    for (int c : {4, 2, 0}) {
        m.move_center(c);
        EXPECT_EQ(m.center(), c);
        EXPECT_LE(m.canonical_error(), 1e-10);
    }
    const auto m2 = MatrixProductState<double>::random(dims, 8, 1);
    EXPECT_EQ((m2.to_dense() - MatrixProductState<double>::random(dims, 8, 1).to_dense()).norm(), 0.0);
}

TEST(Mps, DenseRoundTrip) {
    std::mt19937 rng(4);
    std::normal_distribution<double> nd;
    const std::vector<int> dims{2, 3, 2, 3};
    VecC psi(36);
    for (auto &x : psi)
        x = {nd(rng), nd(rng)};
    psi.normalize();
    const auto m = MatrixProductState<cplx>::from_dense(psi, dims);
    EXPECT_LE((m.to_dense() - psi).norm(), 1e-12);
    EXPECT_NEAR(std::abs(overlap(m, m)), 1.0, 1e-12);
}

TEST(Mps, ExpectationMatchesDense) {
    std::mt19937 rng(8);
    const std::vector<int> dims{3, 2, 3, 2, 3};
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto m = MatrixProductState<cplx>::random(dims, 5, seed);
        const VecC psi = m.to_dense();
        EXPECT_NEAR(std::abs(mps_expectation(m, {}) - 1.0), 0.0, 1e-12);
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<SiteOperator> ops;
            for (int k = 0; k < 5; ++k)
                if ((rng() % 2) != 0)
                    ops.push_back({k, random_local(dims[static_cast<size_t>(k)], rng)});
            const auto dense = embed(std::span<const SiteOperator>(ops), dims);
            const cplx expect = psi.dot(dense.apply(psi));
            for (int c : {0, 2, 4}) {
                m.move_center(c);
                EXPECT_LE(std::abs(mps_expectation(m, std::span<const SiteOperator>(ops)) - expect), 1e-12);
            }
        }
    }
    auto m = MatrixProductState<cplx>::random(dims, 5, 1);
    EXPECT_THROW(mps_expectation(m, {{1, gell_mann(3)}}), DomainError);
    EXPECT_THROW(mps_expectation(m, {{2, gell_mann(3)}, {0, gell_mann(3)}}), DomainError);
}

TEST(Mps, ProductStateExpectation) {
    const auto lat = lattice_layout(2, Boundary::open, 3);
    const std::vector<int> levels(static_cast<size_t>(lat.n_sites()), 0);
    const auto m = MatrixProductState<double>::basis_state(lat.site_dims(), levels);
    for (int j = 0; j < lat.n_qutrits(); ++j)
        EXPECT_NEAR(mps_expectation(m, {{lat.qutrit_site(j), gell_mann(3)}}).real(), 1.0, 1e-14);
    EXPECT_EQ(m.max_bond_dim(), 1);
    const auto spec = bond_entropy(m, 1);
    EXPECT_EQ(spec.singular_values.size(), 1u);
    EXPECT_NEAR(spec.entropy, 0.0, 1e-14);
    EXPECT_TRUE(pairing_score(spec).trivial);
}

TEST(Mps, MpoExpectationMatchesDense) {
    const auto lat = lattice_layout(2, Boundary::open, 3);
    const ModelParams p{1.0, 0.8, 0.3, 0.6};
    const auto m = MatrixProductState<double>::random(lat.site_dims(), 6, 3);
    const VecC psi = m.to_dense();
    const auto h = build_full_hamiltonian(p, lat);
    EXPECT_NEAR(mpo_expectation(m, build_full_mpo(p, lat)).real(), psi.dot(h.apply(psi)).real(), 1e-12);
}

TEST(Mps, BellPairEntropyAndPairing) {
    VecC bell = VecC::Zero(4);
    bell(0) = bell(3) = 1.0 / std::sqrt(2.0);
    const std::vector<int> dims{2, 2};
    const auto m = MatrixProductState<cplx>::from_dense(bell, dims);
    const auto b = bond_entropy(m, 0);
    EXPECT_NEAR(b.entropy, std::log(2.0), 1e-12);
    EXPECT_LE(pairing_score(b).score, 1e-12);
    BondSpectrum paired{0, {0.5, 0.5, 0.3, 0.3, 0.1, 0.1}, 0.0};
    EXPECT_LE(pairing_score(paired).score, 1e-12);
    BondSpectrum unpaired{0, {0.8, 0.4, 0.2, 0.1}, 0.0};
    EXPECT_GT(pairing_score(unpaired).score, 0.3);
}

TEST(Mps, CheckpointRoundTrip) {
    const auto lat = lattice_layout(2, Boundary::open, 3);
    auto m = MatrixProductState<double>::random(lat.site_dims(), 6, 9);
    m.move_center(2);
    const auto path = std::filesystem::temp_directory_path() / "qlsim_ckpt_test.bin";
    save_checkpoint(path, m, lat);
    const auto [back, lat2] = load_checkpoint<double>(path);
    EXPECT_EQ(lat2, lat);
    EXPECT_EQ(back.center(), 2);
    for (int k = 0; k < m.n_sites(); ++k)
        EXPECT_EQ((back.tensor(k) - m.tensor(k)).norm(), 0.0);
    {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        os << "NOTANMPS";
    }
    EXPECT_THROW(load_checkpoint<double>(path), DomainError);
    std::filesystem::remove(path);
    EXPECT_THROW(save_checkpoint(path, m, lattice_layout(3, Boundary::open, 3)), DomainError);
}

TEST(Dmrg, DecoupledChainIsProductState) {
    const auto lat = lattice_layout(3, Boundary::open, 3);
    const ModelParams p{1.0, 0.9, 0.25, 0.0};
    TruncationPolicy pol;
    pol.chi_max = 16;
    DmrgOptions opt;
    const auto r = dmrg_ground_state(build_full_mpo(p, lat), MatrixProductState<double>::random(lat.site_dims(), 8, 1),
                                     pol, opt);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.sweeps, 2);
    EXPECT_NEAR(r.energy, 4 * (-0.9 / 3 - 0.25), 1e-10);
    EXPECT_EQ(r.max_bond, 1);
}

TEST(Dmrg, MatchesExactDiagonalization) {
    const auto lat = lattice_layout(3, Boundary::open, 3);
    TruncationPolicy pol;
    pol.chi_max = 64;
    DmrgOptions opt;
    opt.local_max_iter = 100;
    for (double g : {0.2, 0.5, 0.8}) {
        const ModelParams p{1.0, 1.0, 0.2, g};
        const auto ed = ground_state(build_full_hamiltonian(p, lat));
        ASSERT_EQ(ed.eigenvalues.size(), 1u);
        const auto r = dmrg_ground_state(build_full_mpo(p, lat), MatrixProductState<double>::random(lat.site_dims(), 8, 1),
                                         pol, opt);
        EXPECT_TRUE(r.converged);
        EXPECT_NEAR(r.energy, ed.eigenvalues[0], 1e-8) << g;
        EXPECT_LE(r.state.canonical_error(), 1e-10);
        const auto spectra = bond_spectra(r.state);
        for (const auto &b : spectra)
            EXPECT_NEAR(b.entropy, bipartite_entropy(ed.eigenvectors[0], lat.site_dims(), b.bond + 1), 1e-8)
                << g << " bond " << b.bond;
        for (size_t h = 1; h < r.energy_history.size(); ++h)
            EXPECT_LE(r.energy_history[h], r.energy_history[h - 1] + 1e-10);
    }
}

TEST(Dmrg, VariationalInBondDimension) {
    const auto lat = lattice_layout(3, Boundary::open, 3);
    const ModelParams p{1.0, 1.0, 0.1, 0.7};
    const double exact = ed_energy(build_full_hamiltonian(p, lat));
    const auto mpo = build_full_mpo(p, lat);
    double prev = std::numeric_limits<double>::infinity();
    for (int chi : {2, 4, 8, 16, 32}) {
        TruncationPolicy pol;
        pol.chi_max = chi;
        const auto r = dmrg_ground_state(mpo, MatrixProductState<double>::random(lat.site_dims(), 8, 1), pol, DmrgOptions{});
        const double e = mpo_expectation(r.state, mpo).real();
        EXPECT_NEAR(e, r.energy, 1e-8 + r.max_truncation * 10);
        EXPECT_GE(e, exact - 1e-10) << chi;
        EXPECT_LE(e, prev + 1e-10) << chi;
        prev = e;
    }
    EXPECT_NEAR(prev, exact, 1e-8);
}

TEST(Dmrg, EffectiveModelAgainstExact) {
    const auto chain = LatticeSpec::qutrit_chain(8, Boundary::open);
    const auto c = renormalized_couplings({1.0, 1.0, 0.2, 0.6});
    TruncationPolicy pol;
    pol.chi_max = 40;
    const auto r = dmrg_ground_state(build_effective_mpo(c, chain),
                                     MatrixProductState<double>::random(chain.site_dims(), 8, 2), pol, DmrgOptions{});
    EXPECT_NEAR(r.energy, ed_energy(build_effective_hamiltonian(c, chain)), 1e-8);
}

TEST(Dmrg, Errors) {
    const auto lat = lattice_layout(1, Boundary::open, 3);
    const auto mpo = build_full_mpo(ModelParams{}, lat);
    TruncationPolicy pol;
    pol.chi_max = 100000;
    pol.svd_cutoff = 0.0;
    EXPECT_THROW(dmrg_ground_state(mpo, MatrixProductState<double>::random(lat.site_dims(), 4, 1), pol, DmrgOptions{}),
                 CapacityError);
    pol = {};
    pol.chi_max = 0;
    EXPECT_THROW(dmrg_ground_state(mpo, MatrixProductState<double>::random(lat.site_dims(), 4, 1), pol, DmrgOptions{}),
                 DomainError);
    EXPECT_THROW(dmrg_ground_state(build_full_mpo(ModelParams{}, lattice_layout(2, Boundary::open, 3)),
                                   MatrixProductState<double>::random(lat.site_dims(), 4, 1), TruncationPolicy{},
                                   DmrgOptions{}),
                 DomainError);
}
