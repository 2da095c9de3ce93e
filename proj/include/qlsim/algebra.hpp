#pragma once

// Local operator toolkit: Gell-Mann matrices, truncated bosons, Kronecker
// embedding into product spaces and a few small-matrix utilities.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qlsim/errors.hpp"

namespace qlsim {

using cplx = std::complex<double>;
using Index = Eigen::Index;
using DenseC = Eigen::MatrixXcd;
using VecC = Eigen::VectorXcd;
using SparseC = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

inline constexpr cplx I_unit{0.0, 1.0};

/// Sparse complex matrix tagged with the basis it acts on.
///
/// Entries are kept in canonical form (row-major, sorted column indices, no
/// stored zeros) so two operators built along different paths compare
/// equal entry by entry.
class OperatorMatrix {
public:
    OperatorMatrix() = default;

    OperatorMatrix(SparseC m, std::string basis_tag = {})
        : m_(std::move(m)), tag_(std::move(basis_tag)) {
        if (m_.rows() != m_.cols())
            detail::raise<DomainError>("OperatorMatrix", "matrix must be square");
        canonicalize();
    }

    static OperatorMatrix identity(Index dim, std::string tag = {}) {
        SparseC m(dim, dim);
        m.setIdentity();
        return {std::move(m), std::move(tag)};
    }

    static OperatorMatrix zero(Index dim, std::string tag = {}) {
        return {SparseC(dim, dim), std::move(tag)};
    }

    static OperatorMatrix from_dense(const DenseC &d, std::string tag = {},
                                     double drop_tol = 0.0) {
        if (d.rows() != d.cols())
            detail::raise<DomainError>("OperatorMatrix::from_dense", "matrix must be square");
        std::vector<Eigen::Triplet<cplx>> trip;
        for (Index r = 0; r < d.rows(); ++r)
            for (Index c = 0; c < d.cols(); ++c)
                if (std::abs(d(r, c)) > drop_tol)
                    trip.emplace_back(r, c, d(r, c));
        SparseC m(d.rows(), d.cols());
        m.setFromTriplets(trip.begin(), trip.end());
        return {std::move(m), std::move(tag)};
    }

    static OperatorMatrix diagonal(std::span<const cplx> diag, std::string tag = {}) {
        const auto n = static_cast<Index>(diag.size());
        std::vector<Eigen::Triplet<cplx>> trip;
        for (Index i = 0; i < n; ++i)
            if (diag[i] != cplx{0.0})
                trip.emplace_back(i, i, diag[i]);
        SparseC m(n, n);
        m.setFromTriplets(trip.begin(), trip.end());
        return {std::move(m), std::move(tag)};
    }

    Index dim() const { return m_.rows(); }
    const SparseC &sparse() const { return m_; }
    DenseC dense() const { return DenseC(m_); }
    const std::string &basis_tag() const { return tag_; }
    Index nonzeros() const { return m_.nonZeros(); }

    cplx operator()(Index r, Index c) const { return m_.coeff(r, c); }

    double max_abs() const {
        double mx = 0.0;
        for (Index k = 0; k < m_.outerSize(); ++k)
            for (SparseC::InnerIterator it(m_, k); it; ++it)
                mx = std::max(mx, std::abs(it.value()));
        return mx;
    }

    double frobenius_norm() const { return m_.norm(); }

    cplx trace() const {
        cplx t{0.0};
        for (Index k = 0; k < m_.outerSize(); ++k)
            for (SparseC::InnerIterator it(m_, k); it; ++it)
                if (it.row() == it.col())
                    t += it.value();
        return t;
    }

    OperatorMatrix adjoint() const { return {SparseC(m_.adjoint()), tag_}; }

    /// A == A^dagger entrywise within tol (scaled by max(1, max|A|)).
    bool is_hermitian(double tol = 1e-14) const {
        SparseC d = m_ - SparseC(m_.adjoint());
        return max_abs_of(d) <= tol * std::max(1.0, max_abs());
    }

    bool is_antihermitian(double tol = 1e-14) const {
        SparseC d = m_ + SparseC(m_.adjoint());
        return max_abs_of(d) <= tol * std::max(1.0, max_abs());
    }

    /// Returns true if every entry is real within tol.
    bool is_real(double tol = 0.0) const {
        for (Index k = 0; k < m_.outerSize(); ++k)
            for (SparseC::InnerIterator it(m_, k); it; ++it)
                if (std::abs(it.value().imag()) > tol)
                    return false;
        return true;
    }

    VecC apply(const VecC &v) const {
        if (v.size() != dim())
            detail::raise<DomainError>("OperatorMatrix::apply", "dimension mismatch");
        return m_ * v;
    }

    OperatorMatrix &operator+=(const OperatorMatrix &o) {
        check_same_dim(o, "operator+=");
        m_ += o.m_;
        canonicalize();
        return *this;
    }
    OperatorMatrix &operator-=(const OperatorMatrix &o) {
        check_same_dim(o, "operator-=");
        m_ -= o.m_;
        canonicalize();
        return *this;
    }
    OperatorMatrix &operator*=(cplx c) {
        m_ *= c;
        canonicalize();
        return *this;
    }

    friend OperatorMatrix operator+(OperatorMatrix a, const OperatorMatrix &b) { return a += b; }
    friend OperatorMatrix operator-(OperatorMatrix a, const OperatorMatrix &b) { return a -= b; }
    friend OperatorMatrix operator*(cplx c, OperatorMatrix a) { return a *= c; }
    friend OperatorMatrix operator*(OperatorMatrix a, cplx c) { return a *= c; }
    friend OperatorMatrix operator*(const OperatorMatrix &a, const OperatorMatrix &b) {
        a.check_same_dim(b, "operator*");
        return {SparseC(a.m_ * b.m_), a.tag_};
    }

private:
    static double max_abs_of(const SparseC &s) {
        double mx = 0.0;
        for (Index k = 0; k < s.outerSize(); ++k)
            for (SparseC::InnerIterator it(s, k); it; ++it)
                mx = std::max(mx, std::abs(it.value()));
        return mx;
    }

    void check_same_dim(const OperatorMatrix &o, const char *what) const {
        if (o.dim() != dim())
            detail::raise<DomainError>(std::string("OperatorMatrix::") + what,
                                       "dimension mismatch " + std::to_string(dim()) + " vs " +
                                           std::to_string(o.dim()));
    }

    void canonicalize() {
        m_.prune(cplx{0.0});
        m_.makeCompressed();
    }

    SparseC m_;
    std::string tag_;
};

inline OperatorMatrix commutator(const OperatorMatrix &a, const OperatorMatrix &b) {
    return a * b - b * a;
}

/// max_ij |A_ij - B_ij|
inline double max_abs_diff(const OperatorMatrix &a, const OperatorMatrix &b) {
    return (a - b).max_abs();
}

// ---------------------------------------------------------------------------
// Local sites

enum class SiteKind { qutrit, cavity };

struct LocalSite {
    SiteKind kind = SiteKind::qutrit;
    int dim = 3;

    static LocalSite qutrit() { return {SiteKind::qutrit, 3}; }
    static LocalSite cavity(int n_max) {
        if (n_max < 2)
            detail::raise<DomainError>("LocalSite::cavity", "n_max must be >= 2");
        return {SiteKind::cavity, n_max};
    }
    friend bool operator==(const LocalSite &, const LocalSite &) = default;
};

// ---------------------------------------------------------------------------
// Gell-Mann matrices, basis |1>,|2>,|3>.

inline OperatorMatrix gell_mann(int index) {
    if (index < 1 || index > 8)
        detail::raise<DomainError>("gell_mann", "index must be in 1..8, got " + std::to_string(index));
    DenseC m = DenseC::Zero(3, 3);
    switch (index) {
    case 1: m(0, 1) = m(1, 0) = 1.0; break;
    case 2: m(0, 1) = -I_unit; m(1, 0) = I_unit; break;
    case 3: m(0, 0) = 1.0; m(1, 1) = -1.0; break;
    case 4: m(0, 2) = m(2, 0) = 1.0; break;
    case 5: m(0, 2) = -I_unit; m(2, 0) = I_unit; break;
    case 6: m(1, 2) = m(2, 1) = 1.0; break;
    case 7: m(1, 2) = -I_unit; m(2, 1) = I_unit; break;
    case 8: {
        const double r = 1.0 / std::sqrt(3.0);
        m(0, 0) = m(1, 1) = r;
        m(2, 2) = -2.0 * r;
        break;
    }
    }
    return OperatorMatrix::from_dense(m, "qutrit");
}

/// |k><l| on a qutrit, 1-based level labels.
inline OperatorMatrix qutrit_projector(int k, int l) {
    if (k < 1 || k > 3 || l < 1 || l > 3)
        detail::raise<DomainError>("qutrit_projector", "levels must be in 1..3");
    DenseC m = DenseC::Zero(3, 3);
    m(k - 1, l - 1) = 1.0;
    return OperatorMatrix::from_dense(m, "qutrit");
}

// ---------------------------------------------------------------------------
// Truncated bosons, Fock basis |0>..|n_max-1>.

enum class BosonOp { annihilate, create, number, quadrature_p, quadrature_x };

inline OperatorMatrix boson_op(BosonOp kind, int n_max) {
    if (n_max < 2)
        detail::raise<DomainError>("boson_op", "n_max must be >= 2, got " + std::to_string(n_max));
    DenseC a = DenseC::Zero(n_max, n_max);
    for (int n = 1; n < n_max; ++n)
        a(n - 1, n) = std::sqrt(static_cast<double>(n));
    DenseC out;
    switch (kind) {
    case BosonOp::annihilate: out = a; break;
    case BosonOp::create: out = a.adjoint(); break;
    case BosonOp::number: out = a.adjoint() * a; break;
    case BosonOp::quadrature_p: out = -I_unit * (a - a.adjoint()) / std::sqrt(2.0); break;
    case BosonOp::quadrature_x: out = a + a.adjoint(); break;
    }
    return OperatorMatrix::from_dense(out, "cavity");
}

// ---------------------------------------------------------------------------
// Embedding

struct SiteOperator {
    int site = 0;
    OperatorMatrix op;
};

inline OperatorMatrix kron(const OperatorMatrix &a, const OperatorMatrix &b) {
    const Index da = a.dim(), db = b.dim();
    std::vector<Eigen::Triplet<cplx>> trip;
    trip.reserve(static_cast<size_t>(a.nonzeros() * b.nonzeros()));
    for (Index ka = 0; ka < a.sparse().outerSize(); ++ka)
        for (SparseC::InnerIterator ia(a.sparse(), ka); ia; ++ia)
            for (Index kb = 0; kb < b.sparse().outerSize(); ++kb)
                for (SparseC::InnerIterator ib(b.sparse(), kb); ib; ++ib)
                    trip.emplace_back(ia.row() * db + ib.row(), ia.col() * db + ib.col(),
                                      ia.value() * ib.value());
    SparseC m(da * db, da * db);
    m.setFromTriplets(trip.begin(), trip.end());
    return {std::move(m), "product"};
}

/// Kronecker product of the listed single-site operators with identities on
/// every other site. Site 0 is the most significant index.
inline OperatorMatrix embed(std::span<const SiteOperator> ops, std::span<const int> site_dims,
                            std::string tag = "product") {
    const int n_sites = static_cast<int>(site_dims.size());
    std::vector<const OperatorMatrix *> slot(site_dims.size(), nullptr);
    for (const auto &so : ops) {
        if (so.site < 0 || so.site >= n_sites)
            detail::raise<DomainError>("embed", "site index " + std::to_string(so.site) + " out of range");
        if (so.op.dim() != site_dims[so.site])
            detail::raise<DomainError>("embed", "operator dim " + std::to_string(so.op.dim()) +
                                                    " does not match site " + std::to_string(so.site) +
                                                    " dim " + std::to_string(site_dims[so.site]));
        if (slot[so.site])
            detail::raise<DomainError>("embed", "more than one operator on site " + std::to_string(so.site));
        slot[so.site] = &so.op;
    }
    // Group consecutive identity sites into a single identity block.
    OperatorMatrix acc = OperatorMatrix::identity(1);
    Index pending_identity = 1;
    for (int s = 0; s < n_sites; ++s) {
        if (!slot[s]) {
            pending_identity *= site_dims[s];
            continue;
        }
        if (pending_identity > 1)
            acc = kron(acc, OperatorMatrix::identity(pending_identity));
        pending_identity = 1;
        acc = kron(acc, *slot[s]);
    }
    if (pending_identity > 1)
        acc = kron(acc, OperatorMatrix::identity(pending_identity));
    return {acc.sparse(), std::move(tag)};
}

inline OperatorMatrix embed(std::initializer_list<SiteOperator> ops, std::span<const int> site_dims,
                            std::string tag = "product") {
    return embed(std::span<const SiteOperator>(ops.begin(), ops.size()), site_dims, std::move(tag));
}

// ---------------------------------------------------------------------------
// Exponentials

enum class GeneratorKind { hermitian, antihermitian };

/// exp(-i angle G) for hermitian G, exp(angle G) for anti-hermitian G.
///
/// Hermitian generators go through an eigendecomposition; anti-hermitian
/// ones through Pade scaling-and-squaring.
inline OperatorMatrix unitary_from_generator(const OperatorMatrix &G, double angle,
                                             GeneratorKind kind = GeneratorKind::hermitian,
                                             double tol = 1e-12) {
    DenseC out;
    if (kind == GeneratorKind::hermitian) {
        if (!G.is_hermitian(tol))
            detail::raise<DomainError>("unitary_from_generator", "generator is not hermitian");
        Eigen::SelfAdjointEigenSolver<DenseC> es(G.dense());
        VecC ph = (-I_unit * angle * es.eigenvalues().cast<cplx>()).array().exp();
        out = es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
    } else {
        if (!G.is_antihermitian(tol))
            detail::raise<DomainError>("unitary_from_generator", "generator is not anti-hermitian");
        DenseC a = angle * G.dense();
        out = a.exp();
    }
    return OperatorMatrix::from_dense(out, G.basis_tag(), 1e-15);
}

/// exp(t A) v for sparse A via scaled truncated Taylor series.
inline VecC expm_multiply(const OperatorMatrix &A, cplx t, const VecC &v, double tol = 1e-15) {
    if (v.size() != A.dim())
        detail::raise<DomainError>("expm_multiply", "dimension mismatch");
    // Inf-norm bound for step selection.
    double norm_inf = 0.0;
    for (Index r = 0; r < A.sparse().outerSize(); ++r) {
        double row = 0.0;
        for (SparseC::InnerIterator it(A.sparse(), r); it; ++it)
            row += std::abs(it.value());
        norm_inf = std::max(norm_inf, row);
    }
    const double scale = std::abs(t) * norm_inf;
    const int steps = std::max(1, static_cast<int>(std::ceil(scale / 0.5)));
    const cplx h = t / static_cast<double>(steps);
    VecC x = v;
    for (int s = 0; s < steps; ++s) {
        VecC term = x;
        VecC acc = x;
        for (int k = 1; k < 60; ++k) {
            term = (A.sparse() * term) * (h / static_cast<double>(k));
            acc += term;
            if (term.norm() <= tol * acc.norm())
                break;
        }
        x = std::move(acc);
    }
    return x;
}

} // namespace qlsim
