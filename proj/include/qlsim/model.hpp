#pragma once

// Full boson-qutrit Hamiltonian, its MPO, the Hadamard-rotated form and the
// projected two-level limit.

#include <cmath>
#include <string>
#include <vector>

#include "qlsim/algebra.hpp"
#include "qlsim/lattice.hpp"
#include "qlsim/mpo.hpp"

namespace qlsim {

/// Couplings in units where hbar = 1 (and usually omega = 1).
struct ModelParams {
    double omega = 1.0; ///< cavity frequency
    double Omega = 1.0; ///< qutrit gap
    double s = 0.0;     ///< dipolar drive on |1> <-> |2>
    double g = 0.0;     ///< light-matter coupling

    void validate() const {
        if (!(omega > 0.0))
            detail::raise<DomainError>("ModelParams", "omega must be > 0");
        if (!(Omega >= 0.0))
            detail::raise<DomainError>("ModelParams", "Omega must be >= 0");
        if (!(g >= 0.0))
            detail::raise<DomainError>("ModelParams", "g must be >= 0");
        if (!std::isfinite(s))
            detail::raise<DomainError>("ModelParams", "s must be finite");
    }
    friend bool operator==(const ModelParams &, const ModelParams &) = default;
};

inline constexpr Index kDefaultDimBudget = 1 << 21;

inline void check_budget(const LatticeSpec &lat, Index max_dim, const char *where) {
    if (lat.log_total_dim() > std::log(static_cast<double>(max_dim)) + 1e-9)
        detail::raise<CapacityError>(where, "Hilbert dimension of " + lat.describe() +
                                                " exceeds budget " + std::to_string(max_dim));
}

namespace detail {

inline OperatorMatrix quadrature_x(int n_max) { return boson_op(BosonOp::quadrature_x, n_max); }

} // namespace detail

/// All terms of H as product terms in site order (feeds the MPO builder).
inline std::vector<ProductTerm> full_model_terms(const ModelParams &p, const LatticeSpec &lat) {
    p.validate();
    if (!lat.with_cavities())
        detail::raise<DomainError>("full_model_terms", "lattice has no cavities");
    const int nm = lat.n_max();
    const OperatorMatrix num = boson_op(BosonOp::number, nm);
    const OperatorMatrix x = detail::quadrature_x(nm);
    const OperatorMatrix l1 = gell_mann(1), l4 = gell_mann(4), l6 = gell_mann(6), l8 = gell_mann(8);
    std::vector<ProductTerm> terms;
    for (int i = 1; i <= lat.n_cavities(); ++i)
        if (p.omega != 0.0)
            terms.push_back({p.omega, {{lat.cavity_site(i), num}}});
    for (int j = 0; j < lat.n_qutrits(); ++j) {
        if (p.Omega != 0.0)
            terms.push_back({-p.Omega / std::sqrt(3.0), {{lat.qutrit_site(j), l8}}});
        if (p.s != 0.0)
            terms.push_back({-p.s, {{lat.qutrit_site(j), l1}}});
    }
    if (p.g != 0.0) {
        for (int i = 1; i <= lat.n_cavities(); ++i) {
            const OperatorMatrix &lq = LatticeSpec::cavity_is_odd(i) ? l4 : l6;
            const auto [left, right] = lat.cavity_neighbors(i);
            const int cs = lat.cavity_site(i);
            for (int q : {left, right}) {
                const int qs = lat.qutrit_site(q);
                if (qs < cs)
                    terms.push_back({p.g, {{qs, lq}, {cs, x}}});
                else
                    terms.push_back({p.g, {{cs, x}, {qs, lq}}});
            }
        }
    }
    return terms;
}

/// H = w sum n - (W/sqrt3) sum l8 - s sum l1
///     + g sum_{i odd} (a_i + a_i^+)(l4_{i-1} + l4_i) + g sum_{i even} (a_i + a_i^+)(l6_{i-1} + l6_i)
inline OperatorMatrix build_full_hamiltonian(const ModelParams &p, const LatticeSpec &lat,
                                             Index max_dim = kDefaultDimBudget) {
    p.validate();
    if (!lat.with_cavities())
        detail::raise<DomainError>("build_full_hamiltonian", "lattice has no cavities");
    check_budget(lat, max_dim, "build_full_hamiltonian");
    const int nm = lat.n_max();
    const OperatorMatrix num = boson_op(BosonOp::number, nm);
    const OperatorMatrix x = detail::quadrature_x(nm);
    OperatorMatrix h = OperatorMatrix::zero(lat.total_dim(), lat.describe());
    for (int i = 1; i <= lat.n_cavities(); ++i)
        h += p.omega * embed({{lat.cavity_site(i), num}}, lat);
    for (int j = 0; j < lat.n_qutrits(); ++j) {
        h -= (p.Omega / std::sqrt(3.0)) * embed({{lat.qutrit_site(j), gell_mann(8)}}, lat);
        h -= p.s * embed({{lat.qutrit_site(j), gell_mann(1)}}, lat);
    }
    for (int i = 1; i <= lat.n_cavities(); ++i) {
        const auto [left, right] = lat.cavity_neighbors(i);
        const OperatorMatrix lq = gell_mann(LatticeSpec::cavity_is_odd(i) ? 4 : 6);
        const OperatorMatrix xi = embed({{lat.cavity_site(i), x}}, lat);
        const OperatorMatrix bond =
            embed({{lat.qutrit_site(left), lq}}, lat) + embed({{lat.qutrit_site(right), lq}}, lat);
        h += p.g * (xi * bond);
    }
    return h;
}

/// Optional boundary field eps * O on the first and last qutrit, used to
/// select one symmetry-broken branch in finite-chain runs.
struct PinningField {
    double strength = 0.0;
    int gell_mann_index = 4;
    bool staggered = false; ///< multiply the right end by (-1)^j
};

inline void add_pinning(std::vector<ProductTerm> &terms, const LatticeSpec &lat, const PinningField &pin) {
    if (pin.strength == 0.0)
        return;
    const OperatorMatrix op = gell_mann(pin.gell_mann_index);
    const int last = lat.n_qutrits() - 1;
    terms.push_back({-pin.strength, {{lat.qutrit_site(0), op}}});
    if (last > 0) {
        const double sign = (pin.staggered && last % 2 != 0) ? -1.0 : 1.0;
        terms.push_back({-pin.strength * sign, {{lat.qutrit_site(last), op}}});
    }
}

template <class T = double>
MatrixProductOperator<T> build_full_mpo(const ModelParams &p, const LatticeSpec &lat,
                                        const PinningField &pin = {}) {
    auto terms = full_model_terms(p, lat);
    add_pinning(terms, lat, pin);
    return build_mpo<T>(std::span<const int>(lat.site_dims()), terms);
}

// ---------------------------------------------------------------------------
// Hadamard-rotated Hamiltonian

/// |1> -> (|1>+|2>)/sqrt2, |2> -> (|1>-|2>)/sqrt2, |3> -> |3>.
inline OperatorMatrix hadamard_qutrit() {
    const double r = 1.0 / std::sqrt(2.0);
    DenseC m = DenseC::Zero(3, 3);
    m(0, 0) = r;
    m(1, 0) = r;
    m(0, 1) = r;
    m(1, 1) = -r;
    m(2, 2) = 1.0;
    return OperatorMatrix::from_dense(m, "qutrit");
}

inline OperatorMatrix hadamard_rotation(const LatticeSpec &lat) {
    std::vector<SiteOperator> ops;
    for (int j = 0; j < lat.n_qutrits(); ++j)
        ops.push_back({lat.qutrit_site(j), hadamard_qutrit()});
    return embed(std::span<const SiteOperator>(ops), lat);
}

/// V H V^dagger with V the product of qutrit Hadamards.
inline OperatorMatrix build_rotated_hamiltonian(const ModelParams &p, const LatticeSpec &lat,
                                                Index max_dim = kDefaultDimBudget) {
    const OperatorMatrix h = build_full_hamiltonian(p, lat, max_dim);
    const OperatorMatrix v = hadamard_rotation(lat);
    return {(v * h * v.adjoint()).sparse(), lat.describe()};
}

/// Rotated Hamiltonian written out term by term:
/// w sum n - (W/sqrt3) sum l8 - s sum l3
///   + g sum_{i odd} x_i ((l4+l6)_{i-1} + (l4+l6)_i)/sqrt2
///   + g sum_{i even} x_i ((l4-l6)_{i-1} + (l4-l6)_i)/sqrt2
inline OperatorMatrix build_rotated_explicit(const ModelParams &p, const LatticeSpec &lat,
                                             Index max_dim = kDefaultDimBudget) {
    p.validate();
    check_budget(lat, max_dim, "build_rotated_explicit");
    const int nm = lat.n_max();
    const double r2 = 1.0 / std::sqrt(2.0);
    const OperatorMatrix plus = r2 * (gell_mann(4) + gell_mann(6));
    const OperatorMatrix minus = r2 * (gell_mann(4) - gell_mann(6));
    OperatorMatrix h = OperatorMatrix::zero(lat.total_dim(), lat.describe());
    for (int i = 1; i <= lat.n_cavities(); ++i)
        h += p.omega * embed({{lat.cavity_site(i), boson_op(BosonOp::number, nm)}}, lat);
    for (int j = 0; j < lat.n_qutrits(); ++j) {
        h -= (p.Omega / std::sqrt(3.0)) * embed({{lat.qutrit_site(j), gell_mann(8)}}, lat);
        h -= p.s * embed({{lat.qutrit_site(j), gell_mann(3)}}, lat);
    }
    for (int i = 1; i <= lat.n_cavities(); ++i) {
        const auto [left, right] = lat.cavity_neighbors(i);
        const OperatorMatrix &lq = LatticeSpec::cavity_is_odd(i) ? plus : minus;
        const OperatorMatrix xi = embed({{lat.cavity_site(i), detail::quadrature_x(nm)}}, lat);
        h += p.g * (xi * (embed({{lat.qutrit_site(left), lq}}, lat) + embed({{lat.qutrit_site(right), lq}}, lat)));
    }
    return h;
}

// ---------------------------------------------------------------------------
// Two-level (Ising) limit on {|1>, |3>}

/// Couplings of the projected model
/// w sum n - h sum sz + c sum x_i (sx_{i-1} + sx_i) + e0 * n_qutrits.
///
/// sz = |1><1| - |3><3| and sx = |1><3| + |3><1|. Projecting
/// -(W/sqrt3) l8 - s l3 onto {|1>,|3>} gives diag(-W/3 - s, 2W/3).
struct IsingLimitModel {
    double omega = 1.0;
    double Omega = 1.0;
    double s = 0.0;
    double g = 0.0;

    static IsingLimitModel from(const ModelParams &p) { return {p.omega, p.Omega, p.s, p.g}; }

    double coupling() const { return g / std::sqrt(2.0); }
    double field() const { return 0.5 * (Omega + s); }
    double offset_per_qutrit() const { return Omega / 6.0 - 0.5 * s; }
};

/// Site dims of the two-level lattice: 2 on qutrit sites, n_max on cavities.
inline std::vector<int> two_level_dims(const LatticeSpec &lat) {
    std::vector<int> d = lat.site_dims();
    for (int k = 0; k < lat.n_sites(); ++k)
        if (lat.site(k).kind == SiteKind::qutrit)
            d[static_cast<size_t>(k)] = 2;
    return d;
}

/// Full-space indices of product states with every qutrit in |1> or |3>.
inline std::vector<Index> two_level_basis(const LatticeSpec &lat) {
    const auto &dims = lat.site_dims();
    const Index total = lat.total_dim();
    std::vector<Index> kept;
    for (Index idx = 0; idx < total; ++idx) {
        Index rem = idx;
        bool ok = true;
        for (int k = lat.n_sites() - 1; k >= 0; --k) {
            const int d = dims[static_cast<size_t>(k)];
            const auto local = static_cast<int>(rem % d);
            rem /= d;
            if (lat.site(k).kind == SiteKind::qutrit && local == 1)
                ok = false;
        }
        if (ok)
            kept.push_back(idx);
    }
    return kept;
}

/// P H' P restricted to the two-level subspace, in the basis ordered like
/// two_level_dims (level |1> -> 0, |3> -> 1).
inline OperatorMatrix build_ising_limit(const ModelParams &p, const LatticeSpec &lat,
                                        Index max_dim = kDefaultDimBudget) {
    const OperatorMatrix hr = build_rotated_hamiltonian(p, lat, max_dim);
    const std::vector<Index> kept = two_level_basis(lat);
    std::vector<Index> pos(static_cast<size_t>(hr.dim()), -1);
    for (size_t k = 0; k < kept.size(); ++k)
        pos[static_cast<size_t>(kept[k])] = static_cast<Index>(k);
    std::vector<Eigen::Triplet<cplx>> trip;
    for (Index r = 0; r < hr.sparse().outerSize(); ++r) {
        if (pos[static_cast<size_t>(r)] < 0)
            continue;
        for (SparseC::InnerIterator it(hr.sparse(), r); it; ++it) {
            const Index c = pos[static_cast<size_t>(it.col())];
            if (c >= 0)
                trip.emplace_back(pos[static_cast<size_t>(r)], c, it.value());
        }
    }
    const auto n = static_cast<Index>(kept.size());
    SparseC m(n, n);
    m.setFromTriplets(trip.begin(), trip.end());
    return {std::move(m), "two-level"};
}

inline OperatorMatrix sigma_z_two_level() {
    DenseC m = DenseC::Zero(2, 2);
    m(0, 0) = 1.0;
    m(1, 1) = -1.0;
    return OperatorMatrix::from_dense(m, "qubit");
}

inline OperatorMatrix sigma_x_two_level() {
    DenseC m = DenseC::Zero(2, 2);
    m(0, 1) = m(1, 0) = 1.0;
    return OperatorMatrix::from_dense(m, "qubit");
}

/// Explicit two-level formula built directly from IsingLimitModel.
inline OperatorMatrix build_ising_explicit(const IsingLimitModel &m, const LatticeSpec &lat) {
    const std::vector<int> dims = two_level_dims(lat);
    Index total = 1;
    for (int d : dims)
        total *= d;
    const std::span<const int> sd(dims);
    const int nm = lat.n_max();
    OperatorMatrix h = OperatorMatrix::identity(total) * cplx(m.offset_per_qutrit() * lat.n_qutrits());
    for (int i = 1; i <= lat.n_cavities(); ++i)
        h += m.omega * embed({{lat.cavity_site(i), boson_op(BosonOp::number, nm)}}, sd);
    for (int j = 0; j < lat.n_qutrits(); ++j)
        h -= m.field() * embed({{lat.qutrit_site(j), sigma_z_two_level()}}, sd);
    for (int i = 1; i <= lat.n_cavities(); ++i) {
        const auto [left, right] = lat.cavity_neighbors(i);
        const OperatorMatrix xi = embed({{lat.cavity_site(i), detail::quadrature_x(nm)}}, sd);
        const OperatorMatrix sx = embed({{lat.qutrit_site(left), sigma_x_two_level()}}, sd) +
                                  embed({{lat.qutrit_site(right), sigma_x_two_level()}}, sd);
        h += m.coupling() * (xi * sx);
    }
    return {h.sparse(), "two-level"};
}

} // namespace qlsim
