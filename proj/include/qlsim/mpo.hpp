#pragma once

// Matrix product operators built from sums of product terms.

#include <map>
#include <type_traits>
#include <vector>

#include "qlsim/algebra.hpp"

namespace qlsim {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
inline constexpr bool is_complex_v = !std::is_same_v<T, double>;

/// Converts a complex matrix to scalar type T; fails if T is real and an
/// entry carries an imaginary part.
template <class T>
Mat<T> to_scalar(const DenseC &m) {
    if constexpr (is_complex_v<T>) {
        return m;
    } else {
        if (m.imag().cwiseAbs().maxCoeff() > 0.0)
            detail::raise<DomainError>("to_scalar", "operator has imaginary entries; use a complex MPO");
        return m.real();
    }
}

template <class T>
DenseC to_complex(const Mat<T> &m) {
    if constexpr (is_complex_v<T>)
        return m;
    else
        return m.template cast<cplx>();
}

/// coeff * prod_k ops[k], sites strictly increasing.
struct ProductTerm {
    cplx coeff{1.0};
    std::vector<SiteOperator> ops;
};

template <class T>
struct MpoEntry {
    int left = 0;
    int right = 0;
    Mat<T> op;
};

template <class T>
struct MpoTensor {
    int left_dim = 1;
    int right_dim = 1;
    int phys_dim = 1;
    std::vector<MpoEntry<T>> entries;
};

template <class T>
class MatrixProductOperator {
public:
    MatrixProductOperator() = default;
    explicit MatrixProductOperator(std::vector<MpoTensor<T>> tensors) : tensors_(std::move(tensors)) {}

    int n_sites() const { return static_cast<int>(tensors_.size()); }
    const MpoTensor<T> &operator[](int k) const { return tensors_[static_cast<size_t>(k)]; }
    MpoTensor<T> &operator[](int k) { return tensors_[static_cast<size_t>(k)]; }
    const std::vector<MpoTensor<T>> &tensors() const { return tensors_; }

    std::vector<int> phys_dims() const {
        std::vector<int> d;
        for (const auto &t : tensors_)
            d.push_back(t.phys_dim);
        return d;
    }

    int max_bond_dim() const {
        int w = 1;
        for (const auto &t : tensors_)
            w = std::max({w, t.left_dim, t.right_dim});
        return w;
    }

    /// Dense contraction. Only for chains whose full dimension fits in memory.
    OperatorMatrix to_operator(Index max_dim = 1 << 16) const {
        Index total = 1;
        for (const auto &t : tensors_) {
            total *= t.phys_dim;
            if (total > max_dim)
                detail::raise<CapacityError>("MatrixProductOperator::to_operator", "dimension over budget");
        }
        std::vector<OperatorMatrix> acc(1, OperatorMatrix::identity(1));
        for (const auto &t : tensors_) {
            std::vector<OperatorMatrix> next(static_cast<size_t>(t.right_dim));
            std::vector<bool> set(next.size(), false);
            for (const auto &e : t.entries) {
                OperatorMatrix term = kron(acc[static_cast<size_t>(e.left)],
                                           OperatorMatrix::from_dense(to_complex<T>(e.op)));
                auto r = static_cast<size_t>(e.right);
                if (!set[r]) {
                    next[r] = std::move(term);
                    set[r] = true;
                } else {
                    next[r] += term;
                }
            }
            const Index d = acc.front().dim() * t.phys_dim;
            for (size_t r = 0; r < next.size(); ++r)
                if (!set[r])
                    next[r] = OperatorMatrix::zero(d);
            acc = std::move(next);
        }
        return {acc.front().sparse(), "mpo"};
    }

private:
    std::vector<MpoTensor<T>> tensors_;
};

/// Builds a lower-triangular finite-state MPO for a sum of product terms.
///
/// Channel 0 carries "nothing placed yet", channel 1 "term complete"; every
/// multi-site term owns one private channel on each bond it spans.
template <class T>
MatrixProductOperator<T> build_mpo(std::span<const int> site_dims, std::span<const ProductTerm> terms) {
    const int n = static_cast<int>(site_dims.size());
    if (n == 0)
        detail::raise<DomainError>("build_mpo", "empty chain");
    std::vector<int> bond_channels(static_cast<size_t>(std::max(n - 1, 0)), 2);

    struct Placed {
        cplx coeff;
        std::vector<SiteOperator> ops;
        std::vector<int> channel; // channel on bonds ops.front().site .. ops.back().site-1
    };
    std::vector<Placed> placed;
    std::vector<std::map<std::pair<int, int>, DenseC>> site_entries(static_cast<size_t>(n));

    auto add = [&](int site, int l, int r, const DenseC &op) {
        auto &m = site_entries[static_cast<size_t>(site)];
        auto it = m.find({l, r});
        if (it == m.end())
            m.emplace(std::make_pair(l, r), op);
        else
            it->second += op;
    };

    for (const auto &term : terms) {
        if (term.ops.empty())
            detail::raise<DomainError>("build_mpo", "constant terms are not supported");
        int prev = -1;
        for (const auto &so : term.ops) {
            if (so.site <= prev || so.site >= n)
                detail::raise<DomainError>("build_mpo", "term sites must be strictly increasing and in range");
            if (so.op.dim() != site_dims[static_cast<size_t>(so.site)])
                detail::raise<DomainError>("build_mpo", "operator dimension mismatch at site " +
                                                            std::to_string(so.site));
            prev = so.site;
        }
        if (term.ops.size() == 1) {
            add(term.ops.front().site, 0, 1, term.coeff * term.ops.front().op.dense());
            continue;
        }
        const int first = term.ops.front().site;
        const int last = term.ops.back().site;
        std::vector<int> ch;
        for (int b = first; b < last; ++b)
            ch.push_back(bond_channels[static_cast<size_t>(b)]++);
        size_t k = 0;
        for (int site = first; site <= last; ++site) {
            DenseC op;
            if (k < term.ops.size() && term.ops[k].site == site)
                op = term.ops[k++].op.dense();
            else
                op = DenseC::Identity(site_dims[static_cast<size_t>(site)], site_dims[static_cast<size_t>(site)]);
            const int l = site == first ? 0 : ch[static_cast<size_t>(site - first - 1)];
            const int r = site == last ? 1 : ch[static_cast<size_t>(site - first)];
            if (site == first)
                op *= term.coeff;
            add(site, l, r, op);
        }
    }

    std::vector<MpoTensor<T>> tensors(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
        const int d = site_dims[static_cast<size_t>(k)];
        const int ldim = k == 0 ? 2 : bond_channels[static_cast<size_t>(k - 1)];
        const int rdim = k == n - 1 ? 2 : bond_channels[static_cast<size_t>(k)];
        add(k, 0, 0, DenseC::Identity(d, d));
        add(k, 1, 1, DenseC::Identity(d, d));
        auto &t = tensors[static_cast<size_t>(k)];
        t.phys_dim = d;
        t.left_dim = k == 0 ? 1 : ldim;
        t.right_dim = k == n - 1 ? 1 : rdim;
        for (const auto &[lr, op] : site_entries[static_cast<size_t>(k)]) {
            int l = lr.first, r = lr.second;
            if (k == 0) {
                if (l != 0)
                    continue;
            }
            if (k == n - 1) {
                if (r != 1)
                    continue;
                r = 0;
            }
            if (op.cwiseAbs().maxCoeff() == 0.0)
                continue;
            t.entries.push_back({l, r, to_scalar<T>(op)});
        }
    }
    return MatrixProductOperator<T>(std::move(tensors));
}

template <class T>
MatrixProductOperator<T> build_mpo(std::span<const int> site_dims, const std::vector<ProductTerm> &terms) {
    return build_mpo<T>(site_dims, std::span<const ProductTerm>(terms));
}

/// Sum of product terms as a sparse operator (independent of the MPO path).
inline OperatorMatrix terms_to_operator(std::span<const int> site_dims, std::span<const ProductTerm> terms) {
    Index total = 1;
    for (int d : site_dims)
        total *= d;
    OperatorMatrix h = OperatorMatrix::zero(total);
    for (const auto &t : terms)
        h += t.coeff * embed(std::span<const SiteOperator>(t.ops), site_dims);
    return h;
}

} // namespace qlsim
