#pragma once

// Two-site finite-chain DMRG.

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "qlsim/mps.hpp"

namespace qlsim {

struct DmrgOptions {
    int n_sweeps = 30;            // maximum full (left+right) sweeps
    int min_sweeps = 2;
    double energy_tol = 1e-10;    // |dE| per sweep for convergence
    int local_max_iter = 16;     // Krylov cap of the two-site eigensolver
    double local_tol = 1e-10;     // residual floor of the two-site eigensolver
    double pinning_epsilon = 0.0; // recorded only; the field lives in the MPO
    std::vector<int> chi_schedule; // optional per-sweep bond caps (last entry repeats)
    std::function<void(int sweep, double energy, int max_bond)> on_sweep;

    void validate() const {
        if (n_sweeps < 1)
            detail::raise<DomainError>("DmrgOptions", "n_sweeps must be >= 1");
        if (min_sweeps < 1 || local_max_iter < 1 || energy_tol < 0 || local_tol <= 0)
            detail::raise<DomainError>("DmrgOptions", "invalid options");
    }
};

template <class T>
struct DmrgResult {
    MatrixProductState<T> state;
    double energy = 0.0;
    std::vector<double> energy_history; // after every half-sweep
    std::vector<double> sweep_energies; // after every full sweep
    bool converged = false;
    int sweeps = 0;
    double max_truncation = 0.0; // largest discarded weight in the final sweep
    int max_bond = 1;
    double seconds = 0.0;
};

namespace detail {

template <class T>
using Env = std::vector<Mat<T>>;

/// Left environment after absorbing site k (bra index first).
template <class T>
Env<T> grow_left(const Env<T> &l, const MatrixProductState<T> &m, const MpoTensor<T> &w, int k) {
    const int cr = m.right_dim(k), d = m.phys_dim(k);
    Env<T> out(static_cast<size_t>(w.right_dim), Mat<T>::Zero(cr, cr));
    std::vector<Mat<T>> p(l.size());
    for (const auto &e : w.entries)
        if (p[static_cast<size_t>(e.left)].size() == 0)
            p[static_cast<size_t>(e.left)] = l[static_cast<size_t>(e.left)] * m.tensor(k);
    for (int r = 0; r < w.right_dim; ++r) {
        for (int s = 0; s < d; ++s) {
            Mat<T> y;
            for (const auto &e : w.entries) {
                if (e.right != r)
                    continue;
                const auto &pl = p[static_cast<size_t>(e.left)];
                for (int sp = 0; sp < d; ++sp) {
                    const T c = e.op(s, sp);
                    if (c == T(0))
                        continue;
                    if (y.size() == 0)
                        y = c * pl.middleCols(sp * cr, cr);
                    else
                        y += c * pl.middleCols(sp * cr, cr);
                }
            }
            if (y.size())
                out[static_cast<size_t>(r)].noalias() += m.block(k, s).adjoint() * y;
        }
    }
    return out;
}

/// Right environment after absorbing site k: R'[l] = sum op(s,s') conj(B_s) R[r] B_s'^T.
template <class T>
Env<T> grow_right(const Env<T> &rt, const MatrixProductState<T> &m, const MpoTensor<T> &w, int k) {
    const int cl = m.left_dim(k), cr = m.right_dim(k), d = m.phys_dim(k);
    Env<T> out(static_cast<size_t>(w.left_dim), Mat<T>::Zero(cl, cl));
    // p[r] = R[r] * B^T, cr x (cl per s'), stored as columns blocks of width cl.
    std::vector<Mat<T>> p(rt.size());
    for (const auto &e : w.entries) {
        auto &pr = p[static_cast<size_t>(e.right)];
        if (pr.size())
            continue;
        pr.resize(cr, d * cl);
        for (int sp = 0; sp < d; ++sp)
            pr.middleCols(sp * cl, cl).noalias() = rt[static_cast<size_t>(e.right)] * m.block(k, sp).transpose();
    }
    for (int l = 0; l < w.left_dim; ++l) {
        for (int s = 0; s < d; ++s) {
            Mat<T> y;
            for (const auto &e : w.entries) {
                if (e.left != l)
                    continue;
                const auto &pr = p[static_cast<size_t>(e.right)];
                for (int sp = 0; sp < d; ++sp) {
                    const T c = e.op(s, sp);
                    if (c == T(0))
                        continue;
                    if (y.size() == 0)
                        y = c * pr.middleCols(sp * cl, cl);
                    else
                        y += c * pr.middleCols(sp * cl, cl);
                }
            }
            if (y.size())
                out[static_cast<size_t>(l)].noalias() += m.block(k, s).conjugate() * y;
        }
    }
    return out;
}

/// Two-site effective Hamiltonian; theta is cl x (d1*d2*cr), block s1*d2+s2.
template <class T>
class TwoSiteOperator {
public:
    TwoSiteOperator(const Env<T> &l, const Env<T> &r, const MpoTensor<T> &w1, const MpoTensor<T> &w2, int cl, int cr)
        : l_(l), r_(r), w1_(w1), w2_(w2), cl_(cl), cr_(cr), d1_(w1.phys_dim), d2_(w2.phys_dim) {
        for (const auto &e : w1_.entries)
            used_l_.push_back(e.left);
        std::sort(used_l_.begin(), used_l_.end());
        used_l_.erase(std::unique(used_l_.begin(), used_l_.end()), used_l_.end());
        const Index cols = static_cast<Index>(d1_) * d2_ * cr_;
        p_.resize(l_.size());
        for (int l : used_l_)
            p_[static_cast<size_t>(l)].resize(cl_, cols);
        q_.resize(static_cast<size_t>(w1_.right_dim));
        for (const auto &e : w1_.entries)
            q_[static_cast<size_t>(e.right)].resize(cl_, cols);
        z_.resize(static_cast<size_t>(w2_.right_dim));
        rt_.resize(static_cast<size_t>(w2_.right_dim));
        for (const auto &e : w2_.entries) {
            if (q_[static_cast<size_t>(e.left)].size() == 0)
                continue;
            z_[static_cast<size_t>(e.right)].resize(cl_, cols);
            rt_[static_cast<size_t>(e.right)] = r_[static_cast<size_t>(e.right)].transpose();
        }
    }

    Index size() const { return static_cast<Index>(cl_) * d1_ * d2_ * cr_; }

    Vec<T> apply(const Vec<T> &x) const {
        Vec<T> out(size());
        apply(x, out);
        return out;
    }

    void apply(const Vec<T> &x, Vec<T> &out) const {
        const int nb = d1_ * d2_;
        Eigen::Map<const Mat<T>> th(x.data(), cl_, nb * cr_);
        for (int l : used_l_)
            p_[static_cast<size_t>(l)].noalias() = l_[static_cast<size_t>(l)] * th;
        // q[m] block (t1, s2)
        for (auto &qm : q_)
            if (qm.size())
                qm.setZero();
        for (const auto &e : w1_.entries) {
            auto &qm = q_[static_cast<size_t>(e.right)];
            const auto &pl = p_[static_cast<size_t>(e.left)];
            for (int t1 = 0; t1 < d1_; ++t1)
                for (int s1 = 0; s1 < d1_; ++s1) {
                    const T c = e.op(t1, s1);
                    if (c == T(0))
                        continue;
                    qm.middleCols(t1 * d2_ * cr_, d2_ * cr_) += c * pl.middleCols(s1 * d2_ * cr_, d2_ * cr_);
                }
        }
        // z[r] block (t1, t2)
        for (auto &zr : z_)
            if (zr.size())
                zr.setZero();
        for (const auto &e : w2_.entries) {
            const auto &qm = q_[static_cast<size_t>(e.left)];
            if (qm.size() == 0)
                continue;
            auto &zr = z_[static_cast<size_t>(e.right)];
            for (int t2 = 0; t2 < d2_; ++t2)
                for (int s2 = 0; s2 < d2_; ++s2) {
                    const T c = e.op(t2, s2);
                    if (c == T(0))
                        continue;
                    for (int t1 = 0; t1 < d1_; ++t1)
                        zr.middleCols((t1 * d2_ + t2) * cr_, cr_) += c * qm.middleCols((t1 * d2_ + s2) * cr_, cr_);
                }
        }
        out.resize(size());
        out.setZero();
        Eigen::Map<Mat<T>> o(out.data(), cl_, nb * cr_);
        for (size_t r = 0; r < z_.size(); ++r) {
            if (z_[r].size() == 0)
                continue;
            for (int b = 0; b < nb; ++b)
                o.middleCols(b * cr_, cr_).noalias() += z_[r].middleCols(b * cr_, cr_) * rt_[r];
        }
    }

private:
    const Env<T> &l_;
    const Env<T> &r_;
    const MpoTensor<T> &w1_;
    const MpoTensor<T> &w2_;
    int cl_, cr_, d1_, d2_;
    std::vector<int> used_l_;
    mutable std::vector<Mat<T>> p_, q_, z_;
    std::vector<Mat<T>> rt_;
};

/// Lowest eigenpair by Lanczos with full reorthogonalization, warm-started at x0.
template <class T, class Op>
std::pair<double, Vec<T>> local_lanczos(const Op &op, const Vec<T> &x0, int max_iter, double tol) {
    const Index n = x0.size();
    std::vector<Vec<T>> v{x0.normalized()};
    std::vector<double> alpha, beta;
    double theta = 0.0;
    Eigen::VectorXd y;
    const int m_max = static_cast<int>(std::min<Index>(max_iter, n));
    for (int j = 0; j < m_max; ++j) {
        Vec<T> w(n);
        op.apply(v.back(), w);
        alpha.push_back(std::real(v.back().dot(w)));
        for (int pass = 0; pass < 2; ++pass)
            for (const auto &q : v)
                w -= q * q.dot(w);
        const double b = w.norm();
        const int m = j + 1;
        Eigen::VectorXd dd = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
        Eigen::VectorXd ee = m > 1 ? Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(beta.data(), m - 1)) : Eigen::VectorXd(0);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
        tri.computeFromTridiagonal(dd, ee, Eigen::ComputeEigenvectors);
        theta = tri.eigenvalues()(0);
        y = tri.eigenvectors().col(0);
        if (b * std::abs(y(m - 1)) <= tol || b < 1e-14 || m == m_max)
            break;
        beta.push_back(b);
        v.push_back(w / b);
    }
    Vec<T> x = Vec<T>::Zero(n);
    for (Index k = 0; k < y.size(); ++k)
        x += y(k) * v[static_cast<size_t>(k)];
    x.normalize();
    return {theta, x};
}

struct SplitInfo {
    int kept = 1;
    double discarded = 0.0;
};

/// SVD split of theta into sites k, k+1; moves the center right (A = U) or left (B = V^dagger).
template <class T>
SplitInfo split_two_site(MatrixProductState<T> &m, int k, const Vec<T> &theta, int cl, int cr,
                         const TruncationPolicy &pol, int chi_cap, bool move_right) {
    const int d1 = m.phys_dim(k), d2 = m.phys_dim(k + 1);
    Eigen::Map<const Mat<T>> th(theta.data(), cl, d1 * d2 * cr);
    Mat<T> mm(d1 * cl, d2 * cr);
    for (int s1 = 0; s1 < d1; ++s1)
        for (int s2 = 0; s2 < d2; ++s2)
            mm.block(s1 * cl, s2 * cr, cl, cr) = th.middleCols((s1 * d2 + s2) * cr, cr);
    Eigen::BDCSVD<Mat<T>> svd(mm, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd sv = svd.singularValues();
    const double total = sv.squaredNorm();
    Index keep = 0;
    while (keep < sv.size() && sv(keep) / std::sqrt(total) > pol.svd_cutoff)
        ++keep;
    if (pol.max_discarded_weight > 0) {
        double tail = 0.0;
        Index k2 = sv.size();
        while (k2 > 1 && tail + sv(k2 - 1) * sv(k2 - 1) / total <= pol.max_discarded_weight) {
            tail += sv(k2 - 1) * sv(k2 - 1) / total;
            --k2;
        }
        keep = std::min(keep, k2);
    }
    keep = std::max<Index>(1, std::min<Index>(keep, chi_cap));
    if (keep > kMaxBondDim)
        detail::raise<CapacityError>("dmrg", "bond dimension " + std::to_string(keep) + " exceeds limit");
    SplitInfo info;
    info.kept = static_cast<int>(keep);
    info.discarded = sv.tail(sv.size() - keep).squaredNorm() / total;
    const double norm_kept = sv.head(keep).norm();
    Mat<T> u = svd.matrixU().leftCols(keep);
    Mat<T> vt = svd.matrixV().leftCols(keep).adjoint();
    const Eigen::VectorXd s = sv.head(keep) / norm_kept;
    if (move_right)
        vt = s.asDiagonal() * vt;
    else
        u = u * s.asDiagonal();
    Mat<T> a(cl, d1 * keep);
    for (int s1 = 0; s1 < d1; ++s1)
        a.middleCols(s1 * keep, keep) = u.middleRows(s1 * cl, cl);
    m.tensor(k) = std::move(a);
    m.tensor(k + 1) = std::move(vt);
    m.set_center(move_right ? k + 1 : k);
    return info;
}

template <class T>
Vec<T> two_site_theta(const MatrixProductState<T> &m, int k) {
    const int cl = m.left_dim(k), cr = m.right_dim(k + 1), d1 = m.phys_dim(k), d2 = m.phys_dim(k + 1);
    Mat<T> th(cl, d1 * d2 * cr);
    for (int s1 = 0; s1 < d1; ++s1)
        for (int s2 = 0; s2 < d2; ++s2)
            th.middleCols((s1 * d2 + s2) * cr, cr).noalias() = m.block(k, s1) * m.tensor(k + 1).middleCols(s2 * cr, cr);
    return Eigen::Map<Vec<T>>(th.data(), th.size());
}

} // namespace detail

/// Two-site DMRG ground-state search starting from `init`.
template <class T>
DmrgResult<T> dmrg_ground_state(const MatrixProductOperator<T> &mpo, MatrixProductState<T> init,
                                const TruncationPolicy &policy, const DmrgOptions &opt) {
    policy.validate();
    opt.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const int n = init.n_sites();
    if (mpo.n_sites() != n || mpo.phys_dims() != init.phys_dims())
        detail::raise<DomainError>("dmrg_ground_state", "MPO and state dimensions differ");
    if (n < 2)
        detail::raise<DomainError>("dmrg_ground_state", "chain needs at least two sites");
    if (policy.svd_cutoff == 0.0 && policy.chi_max > kMaxBondDim)
        detail::raise<CapacityError>("dmrg_ground_state", "unbounded bond growth: cutoff 0 and chi_max above limit");
    DmrgResult<T> res;
    auto &m = init;
    m.canonicalize(0);

    std::vector<detail::Env<T>> left(static_cast<size_t>(n)), right(static_cast<size_t>(n));
    left[0] = {Mat<T>::Ones(1, 1)};
    right[static_cast<size_t>(n - 1)] = {Mat<T>::Ones(1, 1)};
    for (int k = n - 1; k > 0; --k)
        right[static_cast<size_t>(k - 1)] = detail::grow_right(right[static_cast<size_t>(k)], m, mpo[k], k);

    double e_prev = std::numeric_limits<double>::infinity();
    double energy = 0.0;
    for (int sweep = 0; sweep < opt.n_sweeps; ++sweep) {
        int cap = policy.chi_max;
        if (!opt.chi_schedule.empty())
            cap = std::min(cap, opt.chi_schedule[std::min<size_t>(static_cast<size_t>(sweep), opt.chi_schedule.size() - 1)]);
        const double tol = std::isfinite(e_prev) ? std::clamp(0.1 * std::abs(e_prev - energy), opt.local_tol, 1e-6)
                                                 : 1e-6;
        double trunc = 0.0;
        auto optimize = [&](int k, bool move_right) {
            const int cl = m.left_dim(k), cr = m.right_dim(k + 1);
            const detail::TwoSiteOperator<T> h(left[static_cast<size_t>(k)], right[static_cast<size_t>(k + 1)], mpo[k],
                                               mpo[k + 1], cl, cr);
            auto [e, x] = detail::local_lanczos<T>(h, detail::two_site_theta(m, k), opt.local_max_iter, tol);
            energy = e;
            const auto info = detail::split_two_site(m, k, x, cl, cr, policy, cap, move_right);
            trunc = std::max(trunc, info.discarded);
            if (move_right)
                left[static_cast<size_t>(k + 1)] = detail::grow_left(left[static_cast<size_t>(k)], m, mpo[k], k);
            else
                right[static_cast<size_t>(k)] = detail::grow_right(right[static_cast<size_t>(k + 1)], m, mpo[k + 1], k + 1);
        };
        for (int k = 0; k + 1 < n; ++k)
            optimize(k, true);
        res.energy_history.push_back(energy);
        for (int k = n - 2; k >= 0; --k)
            optimize(k, false);
        res.energy_history.push_back(energy);
        res.sweep_energies.push_back(energy);
        res.sweeps = sweep + 1;
        res.max_truncation = trunc;
        if (opt.on_sweep)
            opt.on_sweep(sweep, energy, m.max_bond_dim());
        const bool schedule_done = opt.chi_schedule.empty() || sweep + 1 >= static_cast<int>(opt.chi_schedule.size());
        if (res.sweeps >= opt.min_sweeps && schedule_done && std::abs(energy - e_prev) < opt.energy_tol) {
            res.converged = true;
            break;
        }
        e_prev = energy;
    }
    res.energy = energy;
    res.max_bond = m.max_bond_dim();
    res.state = std::move(m);
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

} // namespace qlsim
