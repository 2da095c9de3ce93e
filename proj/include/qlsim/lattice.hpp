#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qlsim/algebra.hpp"

namespace qlsim {

enum class Boundary { open, periodic };

inline std::string to_string(Boundary b) { return b == Boundary::open ? "open" : "periodic"; }

/// Alternating qutrit/cavity chain q0 c1 q1 c2 q2 ...
///
/// Cavity i (1-based) sits between qutrits i-1 and i. Open chains end on a
/// qutrit at both sides (2*n_cells+1 sites); periodic chains have 2*n_cells
/// sites with qutrit n_cells identified with qutrit 0. The qutrit-only
/// variant (used by the effective model) keeps the same cell labels but
/// drops the cavity sites; cavities then survive only as bond labels.
class LatticeSpec {
public:
    LatticeSpec() = default;

    LatticeSpec(int n_cells, Boundary boundary, int n_max, bool with_cavities = true)
        : n_cells_(n_cells), boundary_(boundary), n_max_(n_max), with_cavities_(with_cavities) {
        if (n_cells < 1)
            detail::raise<DomainError>("LatticeSpec", "n_cells must be >= 1");
        if (with_cavities && n_max < 2)
            detail::raise<DomainError>("LatticeSpec", "n_max must be >= 2");
        build_sites();
    }

    /// Qutrit-only chain with n_qutrits sites.
    static LatticeSpec qutrit_chain(int n_qutrits, Boundary boundary) {
        const int cells = boundary == Boundary::open ? n_qutrits - 1 : n_qutrits;
        if (cells < 1)
            detail::raise<DomainError>("LatticeSpec::qutrit_chain", "too few qutrits");
        return {cells, boundary, 2, false};
    }

    int n_cells() const { return n_cells_; }
    Boundary boundary() const { return boundary_; }
    int n_max() const { return n_max_; }
    bool with_cavities() const { return with_cavities_; }
    bool periodic() const { return boundary_ == Boundary::periodic; }

    int n_qutrits() const { return periodic() ? n_cells_ : n_cells_ + 1; }
    int n_cavities() const { return n_cells_; }
    int n_sites() const { return static_cast<int>(sites_.size()); }

    const std::vector<LocalSite> &sites() const { return sites_; }
    const std::vector<int> &site_dims() const { return dims_; }
    const LocalSite &site(int k) const { return sites_.at(static_cast<size_t>(k)); }

    Index total_dim() const {
        Index d = 1;
        for (int x : dims_)
            d *= x;
        return d;
    }

    /// log of the Hilbert-space dimension (no overflow for large chains).
    double log_total_dim() const {
        double l = 0.0;
        for (int x : dims_)
            l += std::log(static_cast<double>(x));
        return l;
    }

    /// Site index of qutrit j (periodic chains wrap j modulo n_cells).
    int qutrit_site(int j) const {
        if (periodic())
            j = ((j % n_cells_) + n_cells_) % n_cells_;
        if (j < 0 || j >= n_qutrits())
            detail::raise<DomainError>("LatticeSpec::qutrit_site", "qutrit index out of range");
        return with_cavities_ ? 2 * j : j;
    }

    /// Site index of cavity i, 1 <= i <= n_cells.
    int cavity_site(int i) const {
        if (!with_cavities_)
            detail::raise<DomainError>("LatticeSpec::cavity_site", "lattice has no cavity sites");
        if (i < 1 || i > n_cells_)
            detail::raise<DomainError>("LatticeSpec::cavity_site", "cavity index out of range");
        return 2 * i - 1;
    }

    /// Odd cavities couple through lambda4, even ones through lambda6.
    static bool cavity_is_odd(int i) { return (i % 2) != 0; }

    /// Qutrit indices (left, right) coupled to cavity i.
    std::pair<int, int> cavity_neighbors(int i) const {
        if (i < 1 || i > n_cells_)
            detail::raise<DomainError>("LatticeSpec::cavity_neighbors", "cavity index out of range");
        const int right = periodic() ? i % n_cells_ : i;
        return {i - 1, right};
    }

    /// Qutrit index stored at a site, or -1 for a cavity site.
    int qutrit_at(int site) const {
        if (!with_cavities_)
            return site;
        return site % 2 == 0 ? site / 2 : -1;
    }

    /// Cavity index stored at a site, or 0 for a qutrit site.
    int cavity_at(int site) const {
        if (!with_cavities_)
            return 0;
        return site % 2 == 1 ? (site + 1) / 2 : 0;
    }

    std::string describe() const {
        return std::to_string(n_cells_) + " cells, " + to_string(boundary_) +
               (with_cavities_ ? ", n_max=" + std::to_string(n_max_) : ", qutrit-only");
    }

    friend bool operator==(const LatticeSpec &a, const LatticeSpec &b) {
        return a.n_cells_ == b.n_cells_ && a.boundary_ == b.boundary_ &&
               a.with_cavities_ == b.with_cavities_ && (!a.with_cavities_ || a.n_max_ == b.n_max_);
    }

private:
    void build_sites() {
        sites_.clear();
        if (with_cavities_) {
            for (int c = 0; c < n_cells_; ++c) {
                sites_.push_back(LocalSite::qutrit());
                sites_.push_back(LocalSite::cavity(n_max_));
            }
            if (!periodic())
                sites_.push_back(LocalSite::qutrit());
        } else {
            for (int j = 0; j < n_qutrits(); ++j)
                sites_.push_back(LocalSite::qutrit());
        }
        dims_.clear();
        for (const auto &s : sites_)
            dims_.push_back(s.dim);
    }

    int n_cells_ = 1;
    Boundary boundary_ = Boundary::open;
    int n_max_ = 4;
    bool with_cavities_ = true;
    std::vector<LocalSite> sites_;
    std::vector<int> dims_;
};

inline LatticeSpec lattice_layout(int n_cells, Boundary boundary, int n_max) {
    return {n_cells, boundary, n_max};
}

inline OperatorMatrix embed(std::span<const SiteOperator> ops, const LatticeSpec &lat) {
    return embed(ops, std::span<const int>(lat.site_dims()), lat.describe());
}

inline OperatorMatrix embed(std::initializer_list<SiteOperator> ops, const LatticeSpec &lat) {
    return embed(std::span<const SiteOperator>(ops.begin(), ops.size()), lat);
}

} // namespace qlsim
