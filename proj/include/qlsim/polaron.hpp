#pragma once

// Polaron (Lang-Firsov) reduction of the cavity-qutrit chain to an
// interacting qutrit chain, plus a brute-force check of the reduction.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "qlsim/algebra.hpp"
#include "qlsim/lattice.hpp"
#include "qlsim/model.hpp"
#include "qlsim/mpo.hpp"

namespace qlsim {

struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    friend bool operator==(const Rational &, const Rational &) = default;
};

/// Truncated even power series sum_k c_k gamma^{2k}.
struct SeriesFunction {
    std::string name;
    std::vector<Rational> coefficients;
    double validity = 1.0; ///< |gamma| beyond this is flagged as inaccurate

    int truncation_order() const { return 2 * (static_cast<int>(coefficients.size()) - 1); }

    double operator()(double gamma) const {
        const double x = gamma * gamma;
        double acc = 0.0;
        for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it)
            acc = acc * x + it->value();
        return acc;
    }

    double derivative(double gamma) const {
        double acc = 0.0;
        for (size_t k = 1; k < coefficients.size(); ++k)
            acc += coefficients[k].value() * 2.0 * static_cast<double>(k) *
                   std::pow(gamma, 2.0 * static_cast<double>(k) - 1.0);
        return acc;
    }

    /// Plain term-by-term summation (reference for the Horner evaluation).
    double sum_terms(double gamma) const {
        double acc = 0.0;
        for (size_t k = 0; k < coefficients.size(); ++k)
            acc += coefficients[k].value() * std::pow(gamma, 2.0 * static_cast<double>(k));
        return acc;
    }

    bool in_window(double gamma) const { return std::abs(gamma) <= validity; }
};

inline const SeriesFunction &series_f1() {
    static const SeriesFunction f{"f1", {{1, 1}, {-1, 1}, {5, 6}, {-17, 30}}};
    return f;
}

inline const SeriesFunction &series_f8() {
    static const SeriesFunction f{"f8", {{1, 1}, {-3, 1}, {4, 1}, {-16, 5}}};
    return f;
}

inline const SeriesFunction &series_fg() {
    static const SeriesFunction f{"fg", {{1, 1}, {-1, 2}, {1, 6}, {-1, 30}, {1, 210}}};
    return f;
}

inline double f1(double gamma) { return series_f1()(gamma); }
inline double f8(double gamma) { return series_f8()(gamma); }
inline double fg(double gamma) { return series_fg()(gamma); }

/// <0|p^n|0> for the vacuum: 0 for odd n, Gamma((n+1)/2)/sqrt(pi) otherwise.
inline double coherent_moment(int n) {
    if (n < 0)
        detail::raise<DomainError>("coherent_moment", "n must be >= 0");
    if (n % 2)
        return 0.0;
    return std::tgamma(0.5 * (n + 1)) / std::sqrt(std::numbers::pi);
}

/// Root of g fg(gamma) + omega gamma = 0 on the branch through gamma = 0.
///
/// Walks down from 0 until the sign changes, bisects, then polishes with
/// Newton steps.
inline double solve_gamma(double g, double omega) {
    if (!(omega > 0.0))
        detail::raise<DomainError>("solve_gamma", "omega must be > 0");
    if (!(g >= 0.0))
        detail::raise<DomainError>("solve_gamma", "g must be >= 0");
    if (g == 0.0)
        return 0.0;
    auto F = [&](double x) { return g * fg(x) + omega * x; };
    auto dF = [&](double x) { return g * series_fg().derivative(x) + omega; };

    const double limit = -(2.0 * g / omega + 1.0);
    const double step = 1e-2 * std::min(1.0, g / omega);
    double hi = 0.0, lo = 0.0;
    bool found = false;
    for (double x = -step; x >= limit - 1e-15; x -= step) {
        if (F(x) <= 0.0) {
            lo = x;
            hi = x + step;
            found = true;
            break;
        }
    }
    if (!found)
        detail::raise<NumericError>("solve_gamma", "no sign change of g*fg(x) + omega*x on [" +
                                                       std::to_string(limit) + ", 0] for g=" + std::to_string(g));
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        (F(mid) <= 0.0 ? lo : hi) = mid;
    }
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 5; ++it) {
        const double d = dF(x);
        if (d == 0.0)
            break;
        const double nx = x - F(x) / d;
        if (nx < lo - 1e-12 || nx > hi + 1e-12)
            break;
        x = nx;
    }
    if (std::abs(F(x)) > 1e-12)
        detail::raise<NumericError>("solve_gamma", "residual " + std::to_string(std::abs(F(x))) + " above 1e-12");
    return x;
}

/// Which algebraic form of the renormalized couplings to use.
///
/// `printed`: J = -2(w gamma^2 + 2 gamma fg), Omega~ = f8 W + J/2.
/// `oracle`:  J = -2(w gamma^2 + 2 g gamma fg), Omega~ = f8 W - J/2; this is
///            what the exact vacuum projection reproduces at low order.
enum class CouplingForm { printed, oracle };

inline std::string to_string(CouplingForm f) { return f == CouplingForm::printed ? "printed" : "oracle"; }

struct PolaronCouplings {
    double gamma = 0.0;
    double J = 0.0;
    double s_tilde = 0.0;
    double Omega_tilde = 0.0;
    /// J from the second printed expression 2 w gamma^2 (2-g)/g (NaN at g=0).
    double J_alternate = 0.0;
    CouplingForm form = CouplingForm::printed;
    bool series_warning = false; ///< |gamma| outside the series validity window
};

inline PolaronCouplings couplings_at_gamma(const ModelParams &p, double gamma,
                                           CouplingForm form = CouplingForm::printed) {
    PolaronCouplings c;
    c.gamma = gamma;
    c.form = form;
    const double fgv = fg(gamma);
    if (form == CouplingForm::printed) {
        c.J = -2.0 * (p.omega * gamma * gamma + 2.0 * gamma * fgv);
        c.Omega_tilde = f8(gamma) * p.Omega + 0.5 * c.J;
    } else {
        c.J = -2.0 * (p.omega * gamma * gamma + 2.0 * p.g * gamma * fgv);
        c.Omega_tilde = f8(gamma) * p.Omega - 0.5 * c.J;
    }
    c.s_tilde = f1(gamma) * p.s;
    c.J_alternate = p.g > 0.0 ? 2.0 * p.omega * gamma * gamma * (2.0 - p.g) / p.g : std::nan("");
    c.series_warning = !(series_f1().in_window(gamma) && series_f8().in_window(gamma) && series_fg().in_window(gamma));
    return c;
}

inline PolaronCouplings renormalized_couplings(const ModelParams &p, CouplingForm form = CouplingForm::printed) {
    p.validate();
    return couplings_at_gamma(p, solve_gamma(p.g, p.omega), form);
}

// ---------------------------------------------------------------------------
// Effective qutrit Hamiltonian

/// -s~ sum l1 - (W~/sqrt3) sum l8 - J sum_{i odd} l4 l4 - J sum_{i even} l6 l6
/// on a qutrit-only chain.
inline std::vector<ProductTerm> effective_terms(const PolaronCouplings &c, const LatticeSpec &chain) {
    if (chain.with_cavities())
        detail::raise<DomainError>("effective_terms", "expected a qutrit-only chain");
    std::vector<ProductTerm> terms;
    for (int j = 0; j < chain.n_qutrits(); ++j) {
        if (c.s_tilde != 0.0)
            terms.push_back({-c.s_tilde, {{chain.qutrit_site(j), gell_mann(1)}}});
        if (c.Omega_tilde != 0.0)
            terms.push_back({-c.Omega_tilde / std::sqrt(3.0), {{chain.qutrit_site(j), gell_mann(8)}}});
    }
    if (c.J != 0.0) {
        for (int i = 1; i <= chain.n_cavities(); ++i) {
            const auto [l, r] = chain.cavity_neighbors(i);
            const int a = chain.qutrit_site(l), b = chain.qutrit_site(r);
            if (a == b)
                continue;
            const OperatorMatrix op = gell_mann(LatticeSpec::cavity_is_odd(i) ? 4 : 6);
            terms.push_back({-c.J, {{std::min(a, b), op}, {std::max(a, b), op}}});
        }
    }
    return terms;
}

inline OperatorMatrix build_effective_hamiltonian(const PolaronCouplings &c, const LatticeSpec &chain,
                                                  Index max_dim = kDefaultDimBudget) {
    check_budget(chain, max_dim, "build_effective_hamiltonian");
    OperatorMatrix h = OperatorMatrix::zero(chain.total_dim(), chain.describe());
    const auto &dims = chain.site_dims();
    for (int j = 0; j < chain.n_qutrits(); ++j) {
        const int q = chain.qutrit_site(j);
        h -= c.s_tilde * embed({{q, gell_mann(1)}}, dims);
        h -= (c.Omega_tilde / std::sqrt(3.0)) * embed({{q, gell_mann(8)}}, dims);
    }
    for (int i = 1; i <= chain.n_cavities(); ++i) {
        const auto [l, r] = chain.cavity_neighbors(i);
        if (chain.qutrit_site(l) == chain.qutrit_site(r))
            continue;
        const OperatorMatrix op = gell_mann(LatticeSpec::cavity_is_odd(i) ? 4 : 6);
        h -= c.J * embed({{chain.qutrit_site(l), op}}, dims) * embed({{chain.qutrit_site(r), op}}, dims);
    }
    return {h.sparse(), chain.describe()};
}

inline OperatorMatrix build_effective_hamiltonian(const ModelParams &p, int n_qutrits, Boundary boundary,
                                                  CouplingForm form = CouplingForm::printed) {
    return build_effective_hamiltonian(renormalized_couplings(p, form), LatticeSpec::qutrit_chain(n_qutrits, boundary));
}

template <class T = double>
MatrixProductOperator<T> build_effective_mpo(const PolaronCouplings &c, const LatticeSpec &chain,
                                             const PinningField &pin = {}) {
    auto terms = effective_terms(c, chain);
    add_pinning(terms, chain, pin);
    return build_mpo<T>(std::span<const int>(chain.site_dims()), terms);
}

// ---------------------------------------------------------------------------
// Brute-force oracle

namespace detail {

/// Generator sum_i (a_i - a_i^+) P_{i-1,i} on a cavity lattice.
inline OperatorMatrix polaron_generator(const LatticeSpec &lat) {
    const int nm = lat.n_max();
    const OperatorMatrix a = boson_op(BosonOp::annihilate, nm);
    const OperatorMatrix am = a - a.adjoint();
    OperatorMatrix d = OperatorMatrix::zero(lat.total_dim());
    for (int i = 1; i <= lat.n_cavities(); ++i) {
        const auto [l, r] = lat.cavity_neighbors(i);
        const OperatorMatrix lq = gell_mann(LatticeSpec::cavity_is_odd(i) ? 4 : 6);
        const OperatorMatrix pb = embed({{lat.qutrit_site(l), lq}}, lat) + embed({{lat.qutrit_site(r), lq}}, lat);
        d += embed({{lat.cavity_site(i), am}}, lat) * pb;
    }
    return d;
}

/// Full-space index of (photon vacuum, qutrit product state q).
inline Index vacuum_index(const LatticeSpec &lat, Index q) {
    const auto &dims = lat.site_dims();
    // Decode q over the qutrit sites (most significant first).
    std::vector<int> levels(static_cast<size_t>(lat.n_qutrits()));
    for (int j = lat.n_qutrits() - 1; j >= 0; --j) {
        levels[static_cast<size_t>(j)] = static_cast<int>(q % 3);
        q /= 3;
    }
    Index idx = 0;
    for (int k = 0; k < lat.n_sites(); ++k) {
        const int j = lat.qutrit_at(k);
        idx = idx * dims[static_cast<size_t>(k)] + (j >= 0 ? levels[static_cast<size_t>(j)] : 0);
    }
    return idx;
}

} // namespace detail

/// <0_ph| U O U^dagger |0_ph> as an operator on the qutrit space, with
/// U = exp(gamma sum_i (a_i - a_i^+) P_{i-1,i}).
inline OperatorMatrix vacuum_projected_transform(const OperatorMatrix &op, const LatticeSpec &lat, double gamma,
                                                 Index max_dim = 1 << 18) {
    if (!lat.with_cavities())
        detail::raise<DomainError>("vacuum_projected_transform", "lattice needs cavity sites");
    check_budget(lat, max_dim, "polaron_oracle");
    if (op.dim() != lat.total_dim())
        detail::raise<DomainError>("vacuum_projected_transform", "operator dimension mismatch");
    const OperatorMatrix gen = detail::polaron_generator(lat);
    Index nq = 1;
    for (int j = 0; j < lat.n_qutrits(); ++j)
        nq *= 3;
    std::vector<VecC> psi(static_cast<size_t>(nq));
    for (Index q = 0; q < nq; ++q) {
        VecC v = VecC::Zero(lat.total_dim());
        v(detail::vacuum_index(lat, q)) = 1.0;
        psi[static_cast<size_t>(q)] = expm_multiply(gen, -gamma, v); // U^dagger |0, q>
    }
    DenseC out(nq, nq);
    for (Index c = 0; c < nq; ++c) {
        const VecC hv = op.sparse() * psi[static_cast<size_t>(c)];
        for (Index r = 0; r < nq; ++r)
            out(r, c) = psi[static_cast<size_t>(r)].dot(hv);
    }
    return OperatorMatrix::from_dense(out, "qutrit-chain");
}

/// Exact photon-vacuum expectation of U_gamma H U_gamma^dagger on a small
/// lattice. gamma defaults to the root of the decoupling equation.
inline OperatorMatrix polaron_oracle(const ModelParams &p, const LatticeSpec &lat, int n_max_oracle,
                                     std::optional<double> gamma = std::nullopt, Index max_dim = 1 << 18) {
    const LatticeSpec big(lat.n_cells(), lat.boundary(), n_max_oracle);
    check_budget(big, max_dim, "polaron_oracle");
    const double gm = gamma ? *gamma : solve_gamma(p.g, p.omega);
    return vacuum_projected_transform(build_full_hamiltonian(p, big, max_dim), big, gm, max_dim);
}

/// max |oracle - H_eff| after removing the identity component.
inline double polaron_discrepancy(const OperatorMatrix &oracle, const OperatorMatrix &h_eff) {
    if (oracle.dim() != h_eff.dim())
        detail::raise<DomainError>("polaron_discrepancy", "dimension mismatch");
    DenseC d = oracle.dense() - h_eff.dense();
    const cplx shift = d.trace() / static_cast<double>(d.rows());
    d -= shift * DenseC::Identity(d.rows(), d.cols());
    return d.cwiseAbs().maxCoeff();
}

/// Coupling g that puts the decoupling root at gamma (gamma < 0).
inline double coupling_for_gamma(double gamma, double omega) {
    if (!(gamma <= 0.0))
        detail::raise<DomainError>("coupling_for_gamma", "gamma must be <= 0 for g >= 0");
    return -omega * gamma / fg(gamma);
}

} // namespace qlsim
