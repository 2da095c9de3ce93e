#pragma once

// Order parameters, photon and entropy profiles, and correlators over either
// a state vector or an MPS.

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "qlsim/ed.hpp"
#include "qlsim/lattice.hpp"
#include "qlsim/mps.hpp"

namespace qlsim {

/// Expectation values of operator strings over a lattice.
class ExpectationProvider {
public:
    virtual ~ExpectationProvider() = default;
    virtual const LatticeSpec &lattice() const = 0;
    virtual std::string backend() const = 0;
    /// <prod_k O_k> for single-site operators on ascending lattice sites.
    virtual cplx expect(std::span<const SiteOperator> ops) const = 0;
    /// Entanglement entropy of every bond (site b | site b+1).
    virtual std::vector<double> bond_entropies() const = 0;

    /// One expectation per single-site operator.
    virtual std::vector<cplx> local_profile(const std::vector<SiteOperator> &ops) const {
        std::vector<cplx> out;
        for (const auto &o : ops)
            out.push_back(expect(std::span<const SiteOperator>(&o, 1)));
        return out;
    }

    /// <A_i B_j> for each j > i.
    virtual std::vector<cplx> correlation_row(const OperatorMatrix &a, int i, const OperatorMatrix &b,
                                              const std::vector<int> &js) const {
        std::vector<cplx> out;
        for (int j : js) {
            const std::vector<SiteOperator> ops{{i, a}, {j, b}};
            out.push_back(expect(ops));
        }
        return out;
    }
};

class StateVectorProvider final : public ExpectationProvider {
public:
    StateVectorProvider(VecC psi, LatticeSpec lat) : psi_(std::move(psi)), lat_(std::move(lat)) {
        if (psi_.size() != lat_.total_dim())
            detail::raise<DomainError>("StateVectorProvider", "state does not match lattice");
    }
    const LatticeSpec &lattice() const override { return lat_; }
    std::string backend() const override { return "ed"; }
    cplx expect(std::span<const SiteOperator> ops) const override {
        return expectation(psi_, embed(ops, lat_));
    }
    std::vector<double> bond_entropies() const override {
        std::vector<double> s;
        for (int b = 0; b + 1 < lat_.n_sites(); ++b)
            s.push_back(bipartite_entropy(psi_, lat_.site_dims(), b + 1));
        return s;
    }
    const VecC &state() const { return psi_; }

private:
    VecC psi_;
    LatticeSpec lat_;
};

template <class T>
class MpsProvider final : public ExpectationProvider {
public:
    MpsProvider(MatrixProductState<T> m, LatticeSpec lat) : m_(std::move(m)), lat_(std::move(lat)) {
        if (m_.phys_dims() != lat_.site_dims())
            detail::raise<DomainError>("MpsProvider", "state does not match lattice");
        if (!m_.canonical())
            m_.canonicalize(0);
    }
    const LatticeSpec &lattice() const override { return lat_; }
    std::string backend() const override { return "mps"; }
    cplx expect(std::span<const SiteOperator> ops) const override { return mps_expectation(m_, ops); }
    std::vector<double> bond_entropies() const override {
        std::vector<double> s;
        for (const auto &b : bond_spectra(m_))
            s.push_back(b.entropy);
        return s;
    }

    std::vector<cplx> local_profile(const std::vector<SiteOperator> &ops) const override {
        std::vector<size_t> order(ops.size());
        for (size_t i = 0; i < order.size(); ++i)
            order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return ops[a].site < ops[b].site; });
        auto work = m_;
        std::vector<cplx> out(ops.size());
        for (size_t i : order) {
            work.move_center(ops[i].site);
            out[i] = mps_expectation(work, std::span<const SiteOperator>(&ops[i], 1));
        }
        return out;
    }

    std::vector<cplx> correlation_row(const OperatorMatrix &a, int i, const OperatorMatrix &b,
                                      const std::vector<int> &js) const override {
        for (int j : js)
            if (j <= i || j >= m_.n_sites())
                detail::raise<DomainError>("correlation_row", "need i < j within the chain");
        if (js.empty())
            return {};
        auto work = m_;
        work.move_center(i);
        const Mat<T> oa = to_scalar<T>(a.dense()), ob = to_scalar<T>(b.dense());
        Mat<T> e = Mat<T>::Identity(work.left_dim(i), work.left_dim(i));
        e = detail::transfer(work, i, e, &oa);
        const int last = *std::max_element(js.begin(), js.end());
        std::vector<cplx> by_site(static_cast<size_t>(last + 1));
        for (int k = i + 1; k <= last; ++k) {
            // Close the string at k: sites > k are right-normalized.
            by_site[static_cast<size_t>(k)] = cplx(detail::transfer(work, k, e, &ob).trace());
            if (k < last)
                e = detail::transfer<T>(work, k, e, nullptr);
        }
        std::vector<cplx> out;
        for (int j : js)
            out.push_back(by_site[static_cast<size_t>(j)]);
        return out;
    }

    const MatrixProductState<T> &state() const { return m_; }

private:
    MatrixProductState<T> m_;
    LatticeSpec lat_;
};

enum class ExtractionMode { correlator, pinned };

inline std::string to_string(ExtractionMode m) { return m == ExtractionMode::correlator ? "correlator" : "pinned"; }

/// sign(s)^i with sign(0) = +1.
inline double stagger_sign(double s, int i) { return (s < 0 && (i % 2) != 0) ? -1.0 : 1.0; }

/// Number of indices dropped at each open end (10%); none on periodic chains.
inline int boundary_margin(const LatticeSpec &lat, int count) {
    return lat.periodic() ? 0 : static_cast<int>(std::floor(0.1 * count));
}

namespace detail {

struct IndexedSites {
    std::vector<int> index; // qutrit or cavity label
    std::vector<int> site;  // lattice site
};

inline IndexedSites bulk_qutrits(const LatticeSpec &lat) {
    const int n = lat.n_qutrits(), m = boundary_margin(lat, n);
    IndexedSites r;
    for (int j = m; j < n - m; ++j) {
        r.index.push_back(j);
        r.site.push_back(lat.qutrit_site(j));
    }
    return r;
}

inline IndexedSites bulk_cavities(const LatticeSpec &lat) {
    const int n = lat.n_cavities(), m = boundary_margin(lat, n);
    IndexedSites r;
    for (int i = 1 + m; i <= n - m; ++i) {
        r.index.push_back(i);
        r.site.push_back(lat.cavity_site(i));
    }
    return r;
}

/// Mean of sign_i <O_i> over the given sites.
inline double direct_average(const ExpectationProvider &p, const IndexedSites &b, const OperatorMatrix &op,
                             double s, const char *what) {
    std::vector<SiteOperator> ops;
    for (int site : b.site)
        ops.push_back({site, op});
    const auto vals = p.local_profile(ops);
    double acc = 0.0;
    for (size_t k = 0; k < vals.size(); ++k) {
        if (std::abs(vals[k].imag()) > 1e-8)
            detail::raise<NumericError>(what, "expectation has imaginary part " + std::to_string(vals[k].imag()));
        acc += stagger_sign(s, b.index[k]) * vals[k].real();
    }
    return vals.empty() ? 0.0 : acc / static_cast<double>(vals.size());
}

/// sqrt of the uniform part of sign_i sign_j <O_i O_j> at separations D and D+1, D = half the bulk.
inline double correlator_average(const ExpectationProvider &p, const IndexedSites &b, const OperatorMatrix &op,
                                 double s) {
    const int nb = static_cast<int>(b.site.size());
    if (nb < 3)
        return std::numeric_limits<double>::quiet_NaN();
    const int d = std::max(1, nb / 2);
    int starts = nb - d - 1;
    if (starts > 1 && starts % 2 != 0)
        --starts;
    double acc = 0.0;
    int count = 0;
    for (int k = 0; k < std::max(starts, 1); ++k) {
        std::vector<int> js{b.site[static_cast<size_t>(k + d)], b.site[static_cast<size_t>(k + d + 1)]};
        const auto row = p.correlation_row(op, b.site[static_cast<size_t>(k)], op, js);
        for (size_t q = 0; q < 2; ++q) {
            const int jj = k + d + static_cast<int>(q);
            acc += stagger_sign(s, b.index[static_cast<size_t>(k)]) * stagger_sign(s, b.index[static_cast<size_t>(jj)]) *
                   row[q].real();
            ++count;
        }
    }
    return std::sqrt(std::max(0.0, acc / count));
}

inline double extract(const ExpectationProvider &p, const IndexedSites &b, const OperatorMatrix &op, double s,
                      ExtractionMode mode, const char *what) {
    return mode == ExtractionMode::pinned ? direct_average(p, b, op, s, what) : correlator_average(p, b, op, s);
}

} // namespace detail

/// (1/L) sum_i sign(s)^i <a_i>; NaN on qutrit-only chains.
inline double order_phi(const ExpectationProvider &p, double s, ExtractionMode mode = ExtractionMode::pinned) {
    const auto &lat = p.lattice();
    if (!lat.with_cavities())
        return std::numeric_limits<double>::quiet_NaN();
    const auto b = detail::bulk_cavities(lat);
    if (mode == ExtractionMode::pinned)
        return detail::direct_average(p, b, boson_op(BosonOp::annihilate, lat.n_max()), s, "order_phi");
    // Re a = x/2 keeps the correlator real.
    return detail::correlator_average(p, b, 0.5 * boson_op(BosonOp::quadrature_x, lat.n_max()), s);
}

/// (1/L) sum_j <lambda4_j>. The duality flips lambda4 on every qutrit alike,
/// so the qutrit orders stay uniform for either sign of s.
inline double order_phi4(const ExpectationProvider &p, double s, ExtractionMode mode = ExtractionMode::pinned) {
    (void)s;
    return detail::extract(p, detail::bulk_qutrits(p.lattice()), gell_mann(4), 0.0, mode, "order_phi4");
}

inline double order_phi6(const ExpectationProvider &p, double s, ExtractionMode mode = ExtractionMode::pinned) {
    (void)s;
    return detail::extract(p, detail::bulk_qutrits(p.lattice()), gell_mann(6), 0.0, mode, "order_phi6");
}

/// (1/L) sum_i <lambda3_i>.
inline double order_varphi(const ExpectationProvider &p, ExtractionMode mode = ExtractionMode::pinned) {
    return detail::extract(p, detail::bulk_qutrits(p.lattice()), gell_mann(3), 0.0, mode, "order_varphi");
}

/// <n_i> for every cavity i = 1..n_cavities.
inline std::vector<double> photon_profile(const ExpectationProvider &p) {
    const auto &lat = p.lattice();
    if (!lat.with_cavities())
        return {};
    std::vector<SiteOperator> ops;
    for (int i = 1; i <= lat.n_cavities(); ++i)
        ops.push_back({lat.cavity_site(i), boson_op(BosonOp::number, lat.n_max())});
    std::vector<double> out;
    for (const auto &v : p.local_profile(ops))
        out.push_back(v.real());
    return out;
}

/// |mean <n> on even cavities - mean <n> on odd cavities| over the bulk.
inline double cdw_contrast(const LatticeSpec &lat, const std::vector<double> &photons) {
    if (photons.empty())
        return std::numeric_limits<double>::quiet_NaN();
    const int n = static_cast<int>(photons.size()), m = boundary_margin(lat, n);
    double even = 0, odd = 0;
    int ne = 0, no = 0;
    for (int i = 1 + m; i <= n - m; ++i) {
        if (i % 2 == 0) {
            even += photons[static_cast<size_t>(i - 1)];
            ++ne;
        } else {
            odd += photons[static_cast<size_t>(i - 1)];
            ++no;
        }
    }
    if (ne == 0 || no == 0)
        return std::numeric_limits<double>::quiet_NaN();
    return std::abs(even / ne - odd / no);
}

struct EntropyProfile {
    std::vector<double> bonds;
    double mean = 0.0;    // over bulk bonds
    double stagger = 0.0; // |mean S around odd cavities - mean S around even cavities|
};

inline EntropyProfile entropy_profile(const LatticeSpec &lat, std::vector<double> bonds) {
    EntropyProfile e;
    e.bonds = std::move(bonds);
    const int nc = lat.n_cavities(), m = boundary_margin(lat, nc);
    double odd = 0, even = 0, all = 0;
    int no = 0, ne = 0, na = 0;
    auto add = [&](int cavity, int bond) {
        if (bond < 0 || bond >= static_cast<int>(e.bonds.size()))
            return;
        const double v = e.bonds[static_cast<size_t>(bond)];
        all += v;
        ++na;
        if (LatticeSpec::cavity_is_odd(cavity)) {
            odd += v;
            ++no;
        } else {
            even += v;
            ++ne;
        }
    };
    for (int c = 1 + m; c <= nc - m; ++c) {
        if (lat.with_cavities()) {
            add(c, 2 * c - 2);
            add(c, 2 * c - 1);
        } else {
            add(c, c - 1);
        }
    }
    e.mean = na ? all / na : 0.0;
    e.stagger = (no && ne) ? std::abs(odd / no - even / ne) : 0.0;
    return e;
}

inline EntropyProfile entropy_profile(const ExpectationProvider &p) {
    return entropy_profile(p.lattice(), p.bond_entropies());
}

/// Raw and connected two-point functions.
struct Correlation {
    cplx raw;
    cplx connected;
};

inline Correlation correlator(const ExpectationProvider &p, const OperatorMatrix &a, int i, const OperatorMatrix &b,
                              int j) {
    if (i == j)
        detail::raise<DomainError>("correlator", "sites must differ");
    const bool swap = j < i;
    const int lo = swap ? j : i, hi = swap ? i : j;
    const auto &opl = swap ? b : a;
    const auto &oph = swap ? a : b;
    const std::vector<SiteOperator> both{{lo, opl}, {hi, oph}};
    const std::vector<SiteOperator> one{{i, a}}, two{{j, b}};
    const cplx raw = p.expect(both);
    return {raw, raw - p.expect(one) * p.expect(two)};
}

struct OrderParameters {
    double phi = 0.0;
    double phi4 = 0.0;
    double phi6 = 0.0;
    double varphi = 0.0;
    double cdw_contrast = 0.0;
    double entropy_mean = 0.0;
    double entropy_stagger = 0.0;
    ExtractionMode mode = ExtractionMode::correlator;
};

inline OrderParameters measure(const ExpectationProvider &p, double s, ExtractionMode mode) {
    OrderParameters o;
    o.mode = mode;
    o.phi = order_phi(p, s, mode);
    o.phi4 = order_phi4(p, s, mode);
    o.phi6 = order_phi6(p, s, mode);
    o.varphi = order_varphi(p, mode);
    o.cdw_contrast = cdw_contrast(p.lattice(), photon_profile(p));
    const auto e = entropy_profile(p);
    o.entropy_mean = e.mean;
    o.entropy_stagger = e.stagger;
    return o;
}

// ---------------------------------------------------------------------------
// CSV rows

struct ObservableRow {
    double s = 0, g = 0;
    int L = 0, chi = 0, n_max = 0;
    OrderParameters obs;
    double energy = 0;
    bool converged = false;
    std::string status = "ok"; // "ok" or an error message for failed points
};

inline const char *observable_csv_header() {
    return "s,g,L,chi,n_max,phi,phi4,phi6,varphi,cdw_contrast,entropy_mean,entropy_stagger,energy,converged,mode";
}

inline std::string format_real(double v) {
    if (std::isnan(v))
        return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string to_csv(const ObservableRow &r) {
    std::string out;
    for (double v : {r.s, r.g})
        out += format_real(v) + ",";
    out += std::to_string(r.L) + "," + std::to_string(r.chi) + "," + std::to_string(r.n_max) + ",";
    for (double v : {r.obs.phi, r.obs.phi4, r.obs.phi6, r.obs.varphi, r.obs.cdw_contrast, r.obs.entropy_mean,
                     r.obs.entropy_stagger, r.energy})
        out += format_real(v) + ",";
    out += std::string(r.converged ? "1" : "0") + "," + to_string(r.obs.mode);
    return out;
}

} // namespace qlsim
