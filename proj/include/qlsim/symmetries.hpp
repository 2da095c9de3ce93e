#pragma once

// Parity, duality, quasi-translation and local gauge operators.

#include <functional>
#include <string>
#include <vector>

#include "qlsim/lattice.hpp"
#include "qlsim/model.hpp"

namespace qlsim {

struct SymmetryOperator {
    OperatorMatrix unitary;
    std::string name;
    std::string expected_domain; // e.g. "all", "s = 0 only", "periodic"
    /// Parameter predicate for expected commutation with H.
    std::function<bool(const ModelParams &)> commutes_for = [](const ModelParams &) { return true; };

    bool is_unitary(double tol = 1e-12) const {
        return max_abs_diff(unitary * unitary.adjoint(), OperatorMatrix::identity(unitary.dim())) <= tol;
    }
};

namespace detail {

/// Product of single-site diagonal phases, one vector per site (empty = identity).
inline OperatorMatrix product_diagonal(const LatticeSpec &lat, const std::vector<std::vector<double>> &local,
                                       const std::string &tag, Index max_dim) {
    check_budget(lat, max_dim, tag.c_str());
    const auto &dims = lat.site_dims();
    const Index total = lat.total_dim();
    std::vector<cplx> diag(static_cast<size_t>(total));
    std::vector<int> digits(dims.size(), 0);
    for (Index idx = 0; idx < total; ++idx) {
        double v = 1.0;
        for (size_t k = 0; k < dims.size(); ++k)
            if (!local[k].empty())
                v *= local[k][static_cast<size_t>(digits[k])];
        diag[static_cast<size_t>(idx)] = v;
        for (int k = static_cast<int>(dims.size()) - 1; k >= 0; --k) {
            if (++digits[static_cast<size_t>(k)] < dims[static_cast<size_t>(k)])
                break;
            digits[static_cast<size_t>(k)] = 0;
        }
    }
    return OperatorMatrix::diagonal(diag, tag);
}

inline std::vector<double> photon_parity(int dim) {
    std::vector<double> p(static_cast<size_t>(dim));
    for (int n = 0; n < dim; ++n)
        p[static_cast<size_t>(n)] = n % 2 ? -1.0 : 1.0;
    return p;
}

/// exp(i pi |k><k|) on a qutrit, k = 1, 2, 3.
inline std::vector<double> level_flip(int k) {
    std::vector<double> b(3, 1.0);
    b[static_cast<size_t>(k - 1)] = -1.0;
    return b;
}

inline std::vector<std::vector<double>> identity_phases(const LatticeSpec &lat) {
    return std::vector<std::vector<double>>(static_cast<size_t>(lat.n_sites()));
}

} // namespace detail

/// Pi = exp(-i pi N_ex), N_ex = sum_i (n_i + sqrt3 lambda8_i).
inline SymmetryOperator parity_operator(const LatticeSpec &lat, Index max_dim = kDefaultDimBudget) {
    auto ph = detail::identity_phases(lat);
    for (int k = 0; k < lat.n_sites(); ++k) {
        if (lat.site(k).kind == SiteKind::qutrit)
            ph[static_cast<size_t>(k)] = {-1.0, -1.0, 1.0};
        else
            ph[static_cast<size_t>(k)] = detail::photon_parity(lat.site(k).dim);
    }
    return {detail::product_diagonal(lat, ph, "parity", max_dim), "Pi", "all"};
}

/// U = exp(i pi sum_i (|1><1|_i + [i odd] n_i)); maps H(s) to H(-s).
inline SymmetryOperator duality_unitary(const LatticeSpec &lat, Index max_dim = kDefaultDimBudget) {
    auto ph = detail::identity_phases(lat);
    for (int k = 0; k < lat.n_sites(); ++k) {
        if (lat.site(k).kind == SiteKind::qutrit)
            ph[static_cast<size_t>(k)] = detail::level_flip(1);
        else if (LatticeSpec::cavity_is_odd(lat.cavity_at(k)))
            ph[static_cast<size_t>(k)] = detail::photon_parity(lat.site(k).dim);
    }
    SymmetryOperator op{detail::product_diagonal(lat, ph, "duality", max_dim), "U", "maps s to -s"};
    op.commutes_for = [](const ModelParams &p) { return p.s == 0.0; };
    return op;
}

/// Translation by `cells` unit cells combined with |1> <-> |2> on every qutrit
/// (applied `cells` times). Periodic chains with an even number of cells only.
inline OperatorMatrix quasi_translation_power(const LatticeSpec &lat, int cells, Index max_dim = kDefaultDimBudget) {
    if (!lat.periodic())
        detail::raise<UnsupportedError>("quasi_translation", "requires periodic boundary");
    if (lat.n_cells() % 2 != 0)
        detail::raise<DomainError>("quasi_translation", "odd number of cells breaks the lambda4/lambda6 alternation");
    check_budget(lat, max_dim, "quasi_translation");
    const int n = lat.n_sites();
    const int per_cell = lat.with_cavities() ? 2 : 1;
    const int shift = ((cells * per_cell) % n + n) % n;
    const bool swap = (cells % 2) != 0;
    const auto &dims = lat.site_dims();
    const Index total = lat.total_dim();
    std::vector<Index> stride(static_cast<size_t>(n), 1);
    for (int k = n - 2; k >= 0; --k)
        stride[static_cast<size_t>(k)] = stride[static_cast<size_t>(k + 1)] * dims[static_cast<size_t>(k + 1)];
    std::vector<Eigen::Triplet<cplx>> trip;
    trip.reserve(static_cast<size_t>(total));
    std::vector<int> digits(static_cast<size_t>(n), 0);
    for (Index idx = 0; idx < total; ++idx) {
        Index target = 0;
        for (int k = 0; k < n; ++k) {
            int d = digits[static_cast<size_t>(k)];
            if (swap && lat.site(k).kind == SiteKind::qutrit && d < 2)
                d = 1 - d;
            target += d * stride[static_cast<size_t>((k + shift) % n)];
        }
        trip.emplace_back(target, idx, 1.0);
        for (int k = n - 1; k >= 0; --k) {
            if (++digits[static_cast<size_t>(k)] < dims[static_cast<size_t>(k)])
                break;
            digits[static_cast<size_t>(k)] = 0;
        }
    }
    SparseC m(total, total);
    m.setFromTriplets(trip.begin(), trip.end());
    return {std::move(m), "quasi-translation"};
}

inline SymmetryOperator quasi_translation(const LatticeSpec &lat, Index max_dim = kDefaultDimBudget) {
    return {quasi_translation_power(lat, 1, max_dim), "T~", "periodic"};
}

/// G_i = B^k_left exp(i pi n_i) B^k_right for each cavity i, k = 1 (odd) or 2 (even).
inline std::vector<SymmetryOperator> gauge_generators(const LatticeSpec &lat, Index max_dim = kDefaultDimBudget) {
    if (!lat.with_cavities())
        detail::raise<DomainError>("gauge_generators", "lattice has no cavities");
    std::vector<SymmetryOperator> out;
    for (int i = 1; i <= lat.n_cavities(); ++i) {
        auto ph = detail::identity_phases(lat);
        const int k = LatticeSpec::cavity_is_odd(i) ? 1 : 2;
        const auto [l, r] = lat.cavity_neighbors(i);
        ph[static_cast<size_t>(lat.cavity_site(i))] = detail::photon_parity(lat.n_max());
        auto flip = detail::level_flip(k);
        auto &left = ph[static_cast<size_t>(lat.qutrit_site(l))];
        left = flip;
        auto &right = ph[static_cast<size_t>(lat.qutrit_site(r))];
        if (right.empty()) {
            right = flip;
        } else {
            for (size_t a = 0; a < 3; ++a)
                right[a] *= flip[a];
        }
        SymmetryOperator op{detail::product_diagonal(lat, ph, "gauge", max_dim), "G" + std::to_string(i),
                            "s = 0 only"};
        op.commutes_for = [](const ModelParams &p) { return p.s == 0.0; };
        out.push_back(std::move(op));
    }
    return out;
}

/// Restriction of Pi to a qutrit-only chain.
inline SymmetryOperator qutrit_parity(const LatticeSpec &chain, Index max_dim = kDefaultDimBudget) {
    if (chain.with_cavities())
        detail::raise<DomainError>("qutrit_parity", "expects a qutrit-only chain");
    return parity_operator(chain, max_dim);
}

/// max |A - c B| where c is the unit phase of <B, A>.
inline double phase_adjusted_difference(const OperatorMatrix &a, const OperatorMatrix &b) {
    if (a.dim() != b.dim())
        detail::raise<DomainError>("phase_adjusted_difference", "dimension mismatch");
    cplx overlap{0.0};
    const SparseC prod = a.sparse().cwiseProduct(b.sparse().conjugate());
    for (Index k = 0; k < prod.outerSize(); ++k)
        for (SparseC::InnerIterator it(prod, k); it; ++it)
            overlap += it.value();
    const cplx phase = std::abs(overlap) > 0 ? overlap / std::abs(overlap) : cplx{1.0};
    return max_abs_diff(a, phase * b);
}

inline OperatorMatrix product_of(const std::vector<SymmetryOperator> &ops) {
    if (ops.empty())
        detail::raise<DomainError>("product_of", "empty operator list");
    OperatorMatrix p = ops.front().unitary;
    for (size_t k = 1; k < ops.size(); ++k)
        p = p * ops[k].unitary;
    return p;
}

struct SymmetryReportRow {
    std::string name;
    double relative_norm = 0.0; // ||[H, O]||_F / ||H||_F
};

inline std::vector<SymmetryReportRow> symmetry_report(const OperatorMatrix &h, const std::vector<SymmetryOperator> &ops) {
    const double hn = h.frobenius_norm();
    std::vector<SymmetryReportRow> rows;
    for (const auto &op : ops) {
        if (op.unitary.dim() != h.dim())
            detail::raise<DomainError>("symmetry_report", "dimension mismatch for " + op.name);
        const double c = commutator(h, op.unitary).frobenius_norm();
        rows.push_back({op.name, hn > 0 ? c / hn : c});
    }
    return rows;
}

} // namespace qlsim
