#pragma once

// Matrix product states, canonical forms, expectations, bond spectra and
// binary checkpoints.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qlsim/lattice.hpp"
#include "qlsim/mpo.hpp"

namespace qlsim {

struct TruncationPolicy {
    int chi_max = 100;
    double svd_cutoff = 1e-10;         // drop normalized singular values below this
    double max_discarded_weight = 0.0; // 0 disables the weight criterion

    void validate() const {
        if (chi_max < 1)
            detail::raise<DomainError>("TruncationPolicy", "chi_max must be >= 1");
        if (svd_cutoff < 0 || max_discarded_weight < 0)
            detail::raise<DomainError>("TruncationPolicy", "cutoffs must be >= 0");
    }
};

/// Bond dimensions above this raise CapacityError.
inline constexpr int kMaxBondDim = 4096;

/// Site tensor A^s (left x right) stored as left x (d * right), block s = columns [s*right, (s+1)*right).
template <class T>
class MatrixProductState {
public:
    MatrixProductState() = default;

    MatrixProductState(std::vector<int> dims, std::vector<Mat<T>> tensors, int center = -1)
        : dims_(std::move(dims)), a_(std::move(tensors)), center_(center) {
        if (dims_.size() != a_.size() || dims_.empty())
            detail::raise<DomainError>("MatrixProductState", "tensor count mismatch");
        for (size_t k = 0; k < a_.size(); ++k) {
            if (a_[k].cols() % dims_[k] != 0)
                detail::raise<DomainError>("MatrixProductState", "tensor shape mismatch at site " + std::to_string(k));
            if (k > 0 && a_[k].rows() != right_dim(static_cast<int>(k) - 1))
                detail::raise<DomainError>("MatrixProductState", "bond mismatch at site " + std::to_string(k));
        }
        if (a_.front().rows() != 1 || right_dim(n_sites() - 1) != 1)
            detail::raise<DomainError>("MatrixProductState", "boundary bonds must be 1");
    }

    /// Product state from one local vector per site.
    static MatrixProductState product(std::span<const int> dims, const std::vector<Vec<T>> &local) {
        if (local.size() != dims.size())
            detail::raise<DomainError>("MatrixProductState::product", "one vector per site required");
        std::vector<Mat<T>> t;
        for (size_t k = 0; k < dims.size(); ++k) {
            if (local[k].size() != dims[k])
                detail::raise<DomainError>("MatrixProductState::product", "local dimension mismatch");
            t.push_back(local[k].normalized().transpose());
        }
        MatrixProductState m({dims.begin(), dims.end()}, std::move(t));
        m.canonicalize(0);
        return m;
    }

    /// Basis product state |levels[0], levels[1], ...> (0-based levels).
    static MatrixProductState basis_state(std::span<const int> dims, std::span<const int> levels) {
        std::vector<Vec<T>> local;
        for (size_t k = 0; k < dims.size(); ++k) {
            Vec<T> v = Vec<T>::Zero(dims[k]);
            v(levels[k]) = T(1);
            local.push_back(v);
        }
        return product(dims, local);
    }

    /// Gaussian random MPS with bond dimension min(chi, exact bound), right-canonical.
    static MatrixProductState random(std::span<const int> dims, int chi, std::uint64_t seed) {
        const int n = static_cast<int>(dims.size());
        std::vector<int> bond(static_cast<size_t>(n + 1), 1);
        double left = 1.0;
        for (int b = 1; b < n; ++b) {
            left *= dims[static_cast<size_t>(b - 1)];
            double right = 1.0;
            for (int k = b; k < n; ++k) {
                right *= dims[static_cast<size_t>(k)];
                if (right > chi)
                    break;
            }
            bond[static_cast<size_t>(b)] = static_cast<int>(std::min<double>({static_cast<double>(chi), left, right}));
        }
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd;
        std::vector<Mat<T>> t;
        for (int k = 0; k < n; ++k) {
            Mat<T> m(bond[static_cast<size_t>(k)], dims[static_cast<size_t>(k)] * bond[static_cast<size_t>(k + 1)]);
            for (Index j = 0; j < m.cols(); ++j)
                for (Index i = 0; i < m.rows(); ++i) {
                    if constexpr (is_complex_v<T>)
                        m(i, j) = T(nd(rng), nd(rng));
                    else
                        m(i, j) = nd(rng);
                }
            t.push_back(std::move(m));
        }
        MatrixProductState s({dims.begin(), dims.end()}, std::move(t));
        s.canonicalize(0);
        return s;
    }

    /// Exact MPS of a state vector (site 0 most significant) by successive SVDs.
    static MatrixProductState from_dense(const Vec<T> &psi, std::span<const int> dims, double cutoff = 1e-14) {
        const int n = static_cast<int>(dims.size());
        Index rest = psi.size();
        Mat<T> carry = psi.transpose(); // 1 x total
        std::vector<Mat<T>> t;
        for (int k = 0; k < n - 1; ++k) {
            const int d = dims[static_cast<size_t>(k)];
            const Index chi_l = carry.rows();
            rest /= d;
            // Stacked (d*chi_l) x rest.
            Mat<T> m(d * chi_l, rest);
            for (int s = 0; s < d; ++s)
                for (Index a = 0; a < chi_l; ++a)
                    m.row(s * chi_l + a) = carry.row(a).segment(s * rest, rest);
            Eigen::BDCSVD<Mat<T>> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
            Index keep = 0;
            while (keep < svd.singularValues().size() && svd.singularValues()(keep) > cutoff)
                ++keep;
            keep = std::max<Index>(keep, 1);
            const Mat<T> u = svd.matrixU().leftCols(keep);
            Mat<T> a(chi_l, d * keep);
            for (int s = 0; s < d; ++s)
                a.middleCols(s * keep, keep) = u.middleRows(s * chi_l, chi_l);
            t.push_back(std::move(a));
            carry = svd.singularValues().head(keep).asDiagonal() * svd.matrixV().leftCols(keep).adjoint();
        }
        t.push_back(carry);
        MatrixProductState s({dims.begin(), dims.end()}, std::move(t), n - 1);
        s.canonicalize(n - 1);
        return s;
    }

    int n_sites() const { return static_cast<int>(a_.size()); }
    int phys_dim(int k) const { return dims_[static_cast<size_t>(k)]; }
    const std::vector<int> &phys_dims() const { return dims_; }
    int left_dim(int k) const { return static_cast<int>(a_[static_cast<size_t>(k)].rows()); }
    int right_dim(int k) const {
        return static_cast<int>(a_[static_cast<size_t>(k)].cols() / dims_[static_cast<size_t>(k)]);
    }
    /// Bond b sits between sites b and b+1.
    int bond_dim(int b) const { return right_dim(b); }
    int max_bond_dim() const {
        int m = 1;
        for (int b = 0; b + 1 < n_sites(); ++b)
            m = std::max(m, bond_dim(b));
        return m;
    }
    int center() const { return center_; }
    bool canonical() const { return center_ >= 0; }

    const Mat<T> &tensor(int k) const { return a_[static_cast<size_t>(k)]; }
    Mat<T> &tensor(int k) { return a_[static_cast<size_t>(k)]; }

    /// Overrides the declared center; callers must keep the gauge conditions.
    void set_center(int c) { center_ = c; }

    auto block(int k, int s) const {
        const int r = right_dim(k);
        return a_[static_cast<size_t>(k)].middleCols(s * r, r);
    }

    /// Makes sites < k left-normalized.
    void left_normalize(int k) {
        const int d = phys_dim(k), cl = left_dim(k), cr = right_dim(k);
        Mat<T> m(d * cl, cr);
        for (int s = 0; s < d; ++s)
            m.middleRows(s * cl, cl) = block(k, s);
        Eigen::HouseholderQR<Mat<T>> qr(m);
        const Index r = std::min<Index>(d * cl, cr);
        const Mat<T> q = qr.householderQ() * Mat<T>::Identity(d * cl, r);
        const Mat<T> rr = qr.matrixQR().topRows(r).template triangularView<Eigen::Upper>();
        Mat<T> a(cl, d * r);
        for (int s = 0; s < d; ++s)
            a.middleCols(s * r, r) = q.middleRows(s * cl, cl);
        a_[static_cast<size_t>(k)] = std::move(a);
        if (k + 1 < n_sites())
            a_[static_cast<size_t>(k + 1)] = rr * a_[static_cast<size_t>(k + 1)];
        else
            a_[static_cast<size_t>(k)] *= rr(0, 0);
    }

    void right_normalize(int k) {
        const int d = phys_dim(k), cl = left_dim(k), cr = right_dim(k);
        const Mat<T> m = a_[static_cast<size_t>(k)].adjoint(); // (d*cr) x cl
        Eigen::HouseholderQR<Mat<T>> qr(m);
        const Index r = std::min<Index>(d * cr, cl);
        const Mat<T> q = qr.householderQ() * Mat<T>::Identity(d * cr, r);
        const Mat<T> rr = qr.matrixQR().topRows(r).template triangularView<Eigen::Upper>();
        a_[static_cast<size_t>(k)] = q.adjoint();
        if (k > 0) {
            const int dp = phys_dim(k - 1), cp = left_dim(k - 1);
            const Mat<T> rad = rr.adjoint(); // cl x r
            Mat<T> prev(cp, dp * r);
            for (int s = 0; s < dp; ++s)
                prev.middleCols(s * r, r) = block(k - 1, s) * rad;
            a_[static_cast<size_t>(k - 1)] = std::move(prev);
        } else {
            if constexpr (is_complex_v<T>)
                a_[static_cast<size_t>(k)] *= std::conj(rr(0, 0));
            else
                a_[static_cast<size_t>(k)] *= rr(0, 0);
        }
    }

    void canonicalize(int c) {
        for (int k = 0; k < c; ++k)
            left_normalize(k);
        for (int k = n_sites() - 1; k > c; --k)
            right_normalize(k);
        center_ = c;
        normalize();
    }

    void move_center(int to) {
        if (!canonical()) {
            canonicalize(to);
            return;
        }
        for (int k = center_; k < to; ++k)
            left_normalize(k);
        for (int k = center_; k > to; --k)
            right_normalize(k);
        center_ = to;
    }

    double norm() const {
        if (canonical())
            return a_[static_cast<size_t>(center_)].norm();
        return std::sqrt(std::abs(overlap(*this, *this)));
    }

    void normalize() {
        if (!canonical())
            canonicalize(0);
        const double nn = a_[static_cast<size_t>(center_)].norm();
        if (nn == 0.0)
            detail::raise<NumericError>("MatrixProductState::normalize", "zero state");
        a_[static_cast<size_t>(center_)] /= nn;
    }

    /// Largest deviation from the gauge conditions at the declared center.
    double canonical_error() const {
        double err = 0.0;
        for (int k = 0; k < n_sites(); ++k) {
            if (k == center_)
                continue;
            if (k < center_) {
                Mat<T> g = Mat<T>::Zero(right_dim(k), right_dim(k));
                for (int s = 0; s < phys_dim(k); ++s)
                    g += block(k, s).adjoint() * block(k, s);
                err = std::max(err, (g - Mat<T>::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff());
            } else {
                const Mat<T> g = a_[static_cast<size_t>(k)] * a_[static_cast<size_t>(k)].adjoint();
                err = std::max(err, (g - Mat<T>::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff());
            }
        }
        return err;
    }

    /// Dense state vector (site 0 most significant).
    VecC to_dense(Index max_dim = 1 << 22) const {
        Index total = 1;
        for (int d : dims_) {
            total *= d;
            if (total > max_dim)
                detail::raise<CapacityError>("MatrixProductState::to_dense", "dimension over budget");
        }
        // rows: accumulated physical index, cols: right bond.
        Mat<T> acc = Mat<T>::Ones(1, 1);
        for (int k = 0; k < n_sites(); ++k) {
            const int d = phys_dim(k), cr = right_dim(k);
            Mat<T> next(acc.rows() * d, cr);
            for (Index i = 0; i < acc.rows(); ++i)
                for (int s = 0; s < d; ++s)
                    next.row(i * d + s) = acc.row(i) * block(k, s);
            acc = std::move(next);
        }
        return to_complex<T>(acc).col(0);
    }

    friend cplx overlap(const MatrixProductState &x, const MatrixProductState &y) {
        if (x.dims_ != y.dims_)
            detail::raise<DomainError>("overlap", "physical dimensions differ");
        Mat<T> e = Mat<T>::Ones(1, 1);
        for (int k = 0; k < x.n_sites(); ++k) {
            Mat<T> next = Mat<T>::Zero(x.right_dim(k), y.right_dim(k));
            for (int s = 0; s < x.phys_dim(k); ++s)
                next += x.block(k, s).adjoint() * e * y.block(k, s);
            e = std::move(next);
        }
        return cplx(e(0, 0));
    }

private:
    std::vector<int> dims_;
    std::vector<Mat<T>> a_;
    int center_ = -1;
};

namespace detail {

/// E' = sum_{s,s'} O(s,s') A_s^dagger E A_s' (O == nullptr means identity).
template <class T>
Mat<T> transfer(const MatrixProductState<T> &m, int k, const Mat<T> &e, const Mat<T> *op) {
    const int d = m.phys_dim(k), cr = m.right_dim(k);
    const Mat<T> p = e * m.tensor(k);
    Mat<T> out = Mat<T>::Zero(cr, cr);
    for (int s = 0; s < d; ++s) {
        if (!op) {
            out.noalias() += m.block(k, s).adjoint() * p.middleCols(s * cr, cr);
            continue;
        }
        Mat<T> y = Mat<T>::Zero(e.rows(), cr);
        bool any = false;
        for (int sp = 0; sp < d; ++sp) {
            const T c = (*op)(s, sp);
            if (c != T(0)) {
                y += c * p.middleCols(sp * cr, cr);
                any = true;
            }
        }
        if (any)
            out.noalias() += m.block(k, s).adjoint() * y;
    }
    return out;
}

} // namespace detail

/// <psi| prod_k O_k |psi> for a string of single-site operators on ascending sites.
template <class T>
cplx mps_expectation(const MatrixProductState<T> &m, std::span<const SiteOperator> ops) {
    std::vector<std::pair<int, Mat<T>>> loc;
    int prev = -1;
    for (const auto &so : ops) {
        if (so.site <= prev || so.site >= m.n_sites())
            detail::raise<DomainError>("mps_expectation", "sites must be ascending and in range");
        if (so.op.dim() != m.phys_dim(so.site))
            detail::raise<DomainError>("mps_expectation", "operator dimension mismatch at site " + std::to_string(so.site));
        loc.emplace_back(so.site, to_scalar<T>(so.op.dense()));
        prev = so.site;
    }
    int lo = 0, hi = m.n_sites() - 1;
    if (m.canonical()) {
        lo = loc.empty() ? m.center() : std::min(loc.front().first, m.center());
        hi = loc.empty() ? m.center() : std::max(loc.back().first, m.center());
    }
    Mat<T> e = Mat<T>::Identity(m.left_dim(lo), m.left_dim(lo));
    size_t next = 0;
    for (int k = lo; k <= hi; ++k) {
        const Mat<T> *op = nullptr;
        if (next < loc.size() && loc[next].first == k)
            op = &loc[next++].second;
        e = detail::transfer(m, k, e, op);
    }
    return cplx(e.trace());
}

template <class T>
cplx mps_expectation(const MatrixProductState<T> &m, std::initializer_list<SiteOperator> ops) {
    return mps_expectation(m, std::span<const SiteOperator>(ops.begin(), ops.size()));
}

/// <psi|W|psi> for an MPO.
template <class T>
cplx mpo_expectation(const MatrixProductState<T> &m, const MatrixProductOperator<T> &w) {
    if (w.n_sites() != m.n_sites())
        detail::raise<DomainError>("mpo_expectation", "site count mismatch");
    std::vector<Mat<T>> env{Mat<T>::Ones(1, 1)};
    for (int k = 0; k < m.n_sites(); ++k) {
        const auto &t = w[k];
        std::vector<Mat<T>> next(static_cast<size_t>(t.right_dim), Mat<T>::Zero(m.right_dim(k), m.right_dim(k)));
        for (const auto &en : t.entries)
            next[static_cast<size_t>(en.right)] += detail::transfer(m, k, env[static_cast<size_t>(en.left)], &en.op);
        env = std::move(next);
    }
    return cplx(env[0](0, 0));
}

struct BondSpectrum {
    int bond = 0;
    std::vector<double> singular_values; // descending, sum of squares 1
    double entropy = 0.0;
};

namespace detail {

inline BondSpectrum make_spectrum(int bond, const Eigen::VectorXd &sv) {
    BondSpectrum b;
    b.bond = bond;
    const double total = sv.squaredNorm();
    for (Index i = 0; i < sv.size(); ++i) {
        const double s = sv(i) / std::sqrt(total);
        if (s <= 0.0)
            continue;
        b.singular_values.push_back(s);
        const double p = s * s;
        if (p > 1e-300)
            b.entropy -= p * std::log(p);
    }
    return b;
}

template <class T>
Eigen::VectorXd center_singular_values(const MatrixProductState<T> &m, int k) {
    const int d = m.phys_dim(k), cl = m.left_dim(k), cr = m.right_dim(k);
    Mat<T> st(d * cl, cr);
    for (int s = 0; s < d; ++s)
        st.middleRows(s * cl, cl) = m.block(k, s);
    return Eigen::BDCSVD<Mat<T>>(st).singularValues();
}

} // namespace detail

/// Schmidt spectra of every bond.
template <class T>
std::vector<BondSpectrum> bond_spectra(MatrixProductState<T> m) {
    std::vector<BondSpectrum> out;
    m.move_center(0);
    for (int b = 0; b + 1 < m.n_sites(); ++b) {
        out.push_back(detail::make_spectrum(b, detail::center_singular_values(m, b)));
        m.move_center(b + 1);
    }
    return out;
}

template <class T>
BondSpectrum bond_entropy(MatrixProductState<T> m, int bond) {
    if (bond < 0 || bond + 1 >= m.n_sites())
        detail::raise<DomainError>("bond_entropy", "bond out of range");
    m.move_center(bond);
    return detail::make_spectrum(bond, detail::center_singular_values(m, bond));
}

struct DegeneracyScore {
    int bond = 0;
    double score = 1.0; // mean relative gap within consecutive pairs
    bool trivial = false;
};

/// Pairing metric of the entanglement spectrum; values near 0 signal two-fold degeneracy.
inline DegeneracyScore pairing_score(const BondSpectrum &b, double floor = 1e-8) {
    DegeneracyScore r{b.bond, 1.0, false};
    std::vector<double> sv;
    for (double s : b.singular_values)
        if (s > floor)
            sv.push_back(s);
    if (sv.size() < 2) {
        r.trivial = true;
        return r;
    }
    double acc = 0.0;
    int pairs = 0;
    for (size_t i = 0; i + 1 < sv.size(); i += 2) {
        acc += (sv[i] - sv[i + 1]) / sv[i];
        ++pairs;
    }
    r.score = acc / pairs;
    return r;
}

template <class T>
std::vector<DegeneracyScore> spectrum_degeneracy_report(const MatrixProductState<T> &m, double floor = 1e-8) {
    std::vector<DegeneracyScore> out;
    for (const auto &b : bond_spectra(m))
        out.push_back(pairing_score(b, floor));
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (little-endian): "QLSIMMPS" | u32 version | i32 n_cells, boundary,
// n_max, with_cavities | u32 n_sites | per site: u32 d, left, right, then
// left*d*right complex<double> in row-major (left, phys, right) order |
// i32 center.

inline constexpr char kCheckpointMagic[8] = {'Q', 'L', 'S', 'I', 'M', 'M', 'P', 'S'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class V>
void put(std::ostream &os, V v) {
    os.write(reinterpret_cast<const char *>(&v), sizeof(V));
}

template <class V>
V get(std::istream &is) {
    V v{};
    is.read(reinterpret_cast<char *>(&v), sizeof(V));
    if (!is)
        detail::raise<DomainError>("load_checkpoint", "truncated file");
    return v;
}

} // namespace detail

template <class T>
void save_checkpoint(const std::filesystem::path &path, const MatrixProductState<T> &m, const LatticeSpec &lat) {
    if (lat.site_dims() != m.phys_dims())
        detail::raise<DomainError>("save_checkpoint", "lattice does not match state");
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os)
            detail::raise<DomainError>("save_checkpoint", "cannot open " + tmp.string());
        os.write(kCheckpointMagic, 8);
        detail::put<std::uint32_t>(os, kCheckpointVersion);
        detail::put<std::int32_t>(os, lat.n_cells());
        detail::put<std::int32_t>(os, lat.periodic() ? 1 : 0);
        detail::put<std::int32_t>(os, lat.n_max());
        detail::put<std::int32_t>(os, lat.with_cavities() ? 1 : 0);
        detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(m.n_sites()));
        for (int k = 0; k < m.n_sites(); ++k) {
            const int d = m.phys_dim(k), cl = m.left_dim(k), cr = m.right_dim(k);
            detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
            detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(cl));
            detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(cr));
            for (int a = 0; a < cl; ++a)
                for (int s = 0; s < d; ++s)
                    for (int b = 0; b < cr; ++b) {
                        const cplx v(m.tensor(k)(a, s * cr + b));
                        detail::put<double>(os, v.real());
                        detail::put<double>(os, v.imag());
                    }
        }
        detail::put<std::int32_t>(os, m.center());
        if (!os)
            detail::raise<DomainError>("save_checkpoint", "write failed");
    }
    std::filesystem::rename(tmp, path);
}

template <class T>
std::pair<MatrixProductState<T>, LatticeSpec> load_checkpoint(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        detail::raise<DomainError>("load_checkpoint", "cannot open " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        detail::raise<DomainError>("load_checkpoint", "bad magic");
    if (detail::get<std::uint32_t>(is) != kCheckpointVersion)
        detail::raise<DomainError>("load_checkpoint", "unsupported version");
    const int cells = detail::get<std::int32_t>(is);
    const auto boundary = detail::get<std::int32_t>(is) ? Boundary::periodic : Boundary::open;
    const int n_max = detail::get<std::int32_t>(is);
    const bool cav = detail::get<std::int32_t>(is) != 0;
    const LatticeSpec lat(cells, boundary, n_max, cav);
    const auto n = detail::get<std::uint32_t>(is);
    if (static_cast<int>(n) != lat.n_sites())
        detail::raise<DomainError>("load_checkpoint", "site count does not match lattice");
    std::vector<int> dims;
    std::vector<Mat<T>> t;
    for (std::uint32_t k = 0; k < n; ++k) {
        const int d = static_cast<int>(detail::get<std::uint32_t>(is));
        const int cl = static_cast<int>(detail::get<std::uint32_t>(is));
        const int cr = static_cast<int>(detail::get<std::uint32_t>(is));
        DenseC m(cl, d * cr);
        for (int a = 0; a < cl; ++a)
            for (int s = 0; s < d; ++s)
                for (int b = 0; b < cr; ++b) {
                    const double re = detail::get<double>(is);
                    const double im = detail::get<double>(is);
                    m(a, s * cr + b) = {re, im};
                }
        dims.push_back(d);
        t.push_back(to_scalar<T>(m));
    }
    const int center = detail::get<std::int32_t>(is);
    if (dims != lat.site_dims())
        detail::raise<DomainError>("load_checkpoint", "tensor dimensions do not match lattice");
    return {MatrixProductState<T>(std::move(dims), std::move(t), center), lat};
}

} // namespace qlsim
