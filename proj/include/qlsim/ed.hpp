#pragma once

// Exact diagonalization: Lanczos with full reorthogonalization, dense
// fallback, expectations and reduced density matrices.

#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "qlsim/algebra.hpp"

namespace qlsim {

struct EdOptions {
    double tol = 1e-10;             // absolute residual ||Hv - Ev||
    int max_matvec = 20000;         // over all restarts of one eigenpair
    int krylov_max = 160;           // restart length
    std::uint64_t seed = 20240611;  // starting vector
    Index dense_below = 48;         // solve densely outright at or below this dim
    Index dense_fallback = 4096;    // dense retry after Lanczos failure at or below this dim
    bool complete_multiplet = true; // extend k to the whole multiplet
    double degeneracy_gap = 1e-8;
};

struct EigenResult {
    std::vector<double> eigenvalues;
    std::vector<VecC> eigenvectors;
    std::vector<double> residuals;
    std::string method;
    std::uint64_t seed = 0;
    int matvecs = 0;
};

namespace detail {

template <class S>
using SparseS = Eigen::SparseMatrix<S, Eigen::RowMajor>;
template <class S>
using VecS = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
VecS<S> random_start(Index dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    VecS<S> v(dim);
    for (Index i = 0; i < dim; ++i) {
        if constexpr (std::is_same_v<S, double>)
            v(i) = nd(rng);
        else
            v(i) = S(nd(rng), nd(rng));
    }
    return v.normalized();
}

template <class S>
void project_out(VecS<S> &w, const std::vector<VecS<S>> &basis) {
    for (const auto &q : basis)
        w -= q * q.dot(w);
}

/// Lowest eigenpair of H restricted to the complement of `found`.
template <class S>
std::pair<double, VecS<S>> lanczos_lowest(const SparseS<S> &h, const std::vector<VecS<S>> &found,
                                          const EdOptions &opt, std::uint64_t seed, int &matvecs,
                                          double &residual) {
    const Index dim = h.rows();
    const Index available = dim - static_cast<Index>(found.size());
    const int m_max = static_cast<int>(std::min<Index>(opt.krylov_max, available));
    VecS<S> start = random_start<S>(dim, seed);
    residual = std::numeric_limits<double>::infinity();
    int used = 0;
    while (used < opt.max_matvec) {
        project_out(start, found);
        project_out(start, found);
        start.normalize();
        std::vector<VecS<S>> v{start};
        std::vector<double> alpha, beta;
        double theta = 0.0;
        VecS<S> ritz = start;
        bool restart = false;
        for (int j = 0; j < m_max; ++j) {
            VecS<S> w = h * v[static_cast<size_t>(j)];
            ++used;
            project_out(w, found);
            alpha.push_back(std::real(v[static_cast<size_t>(j)].dot(w)));
            for (int pass = 0; pass < 2; ++pass) {
                project_out(w, found);
                for (const auto &q : v)
                    w -= q * q.dot(w);
            }
            const double b = w.norm();
            const int m = j + 1;
            Eigen::VectorXd d = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
            Eigen::VectorXd e = beta.empty() ? Eigen::VectorXd(0) : Eigen::Map<Eigen::VectorXd>(beta.data(), m - 1);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
            tri.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
            theta = tri.eigenvalues()(0);
            const Eigen::VectorXd y = tri.eigenvectors().col(0);
            const double est = b * std::abs(y(m - 1));
            const bool exhausted = b < 1e-13 * std::max(1.0, std::abs(theta)) || m == available;
            if (est <= 0.1 * opt.tol || exhausted || m == m_max || used >= opt.max_matvec) {
                ritz = VecS<S>::Zero(dim);
                for (int k = 0; k < m; ++k)
                    ritz += y(k) * v[static_cast<size_t>(k)];
                project_out(ritz, found);
                ritz.normalize();
                VecS<S> r = h * ritz;
                ++used;
                theta = std::real(ritz.dot(r));
                residual = (r - theta * ritz).norm();
                if (residual <= opt.tol) {
                    matvecs += used;
                    return {theta, ritz};
                }
                restart = true;
                break;
            }
            beta.push_back(b);
            v.push_back(w / b);
        }
        if (!restart)
            break;
        start = ritz;
    }
    matvecs += used;
    detail::raise<NumericError>("ground_state", "Lanczos did not converge; residual " + std::to_string(residual));
    return {};
}

inline EigenResult dense_solve(const OperatorMatrix &h, int k, const EdOptions &opt) {
    Eigen::SelfAdjointEigenSolver<DenseC> es(h.dense());
    EigenResult res;
    res.method = "dense";
    res.seed = opt.seed;
    const Index dim = h.dim();
    int count = std::min<int>(k, static_cast<int>(dim));
    if (opt.complete_multiplet)
        while (count < dim && es.eigenvalues()(count) - es.eigenvalues()(count - 1) < opt.degeneracy_gap)
            ++count;
    for (int i = 0; i < count; ++i) {
        res.eigenvalues.push_back(es.eigenvalues()(i));
        VecC v = es.eigenvectors().col(i);
        res.residuals.push_back((h.sparse() * v - es.eigenvalues()(i) * v).norm());
        res.eigenvectors.push_back(std::move(v));
    }
    return res;
}

template <class S>
EigenResult lanczos_solve(const SparseS<S> &h, int k, const EdOptions &opt) {
    EigenResult res;
    res.method = "lanczos";
    res.seed = opt.seed;
    std::vector<VecS<S>> found;
    std::vector<double> vals, resid;
    const Index dim = h.rows();
    for (int n = 0; static_cast<Index>(found.size()) < dim; ++n) {
        if (n >= k && !opt.complete_multiplet)
            break;
        double r = 0.0;
        auto [e, v] = lanczos_lowest<S>(h, found, opt, opt.seed + static_cast<std::uint64_t>(n), res.matvecs, r);
        if (n >= k) {
            if (e - *std::max_element(vals.begin(), vals.end()) >= opt.degeneracy_gap)
                break;
        }
        vals.push_back(e);
        resid.push_back(r);
        found.push_back(std::move(v));
    }
    // Deflated runs can return eigenvalues slightly out of order in clusters.
    std::vector<size_t> order(vals.size());
    for (size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return vals[a] < vals[b]; });
    for (size_t i : order) {
        res.eigenvalues.push_back(vals[i]);
        res.residuals.push_back(resid[i]);
        if constexpr (std::is_same_v<S, double>)
            res.eigenvectors.push_back(found[i].template cast<cplx>());
        else
            res.eigenvectors.push_back(found[i]);
    }
    return res;
}

} // namespace detail

/// k lowest eigenpairs of a hermitian operator.
inline EigenResult ground_state(const OperatorMatrix &h, int k = 1, const EdOptions &opt = {}) {
    if (k < 1)
        detail::raise<DomainError>("ground_state", "k must be >= 1");
    if (!h.is_hermitian(1e-12))
        detail::raise<DomainError>("ground_state", "operator is not hermitian");
    if (k > h.dim())
        detail::raise<DomainError>("ground_state", "k exceeds dimension");
    if (h.dim() <= opt.dense_below)
        return detail::dense_solve(h, k, opt);
    try {
        if (h.is_real()) {
            const detail::SparseS<double> hr = h.sparse().real();
            return detail::lanczos_solve<double>(hr, k, opt);
        }
        return detail::lanczos_solve<cplx>(h.sparse(), k, opt);
    } catch (const NumericError &) {
        if (h.dim() > opt.dense_fallback)
            throw;
        auto res = detail::dense_solve(h, k, opt);
        res.method = "dense-fallback";
        return res;
    }
}

inline cplx expectation(const VecC &state, const OperatorMatrix &op) {
    if (state.size() != op.dim())
        detail::raise<DomainError>("expectation", "state/operator dimension mismatch");
    return state.dot(op.apply(state));
}

/// Reduced density matrix of a contiguous prefix or suffix of sites.
inline DenseC reduced_density(const VecC &state, std::span<const int> dims, std::span<const int> sites) {
    const int n = static_cast<int>(dims.size());
    Index total = 1;
    for (int d : dims)
        total *= d;
    if (state.size() != total)
        detail::raise<DomainError>("reduced_density", "state/dimension mismatch");
    if (sites.empty() || static_cast<int>(sites.size()) > n)
        detail::raise<DomainError>("reduced_density", "invalid site set");
    for (size_t k = 1; k < sites.size(); ++k)
        if (sites[k] != sites[k - 1] + 1)
            detail::raise<DomainError>("reduced_density", "site set must be contiguous and increasing");
    const bool prefix = sites.front() == 0;
    const bool suffix = sites.back() == n - 1;
    if (!prefix && !suffix)
        detail::raise<DomainError>("reduced_density", "only prefix or suffix subsystems are supported");
    const int cut = prefix ? static_cast<int>(sites.size()) : sites.front();
    Index left = 1;
    for (int k = 0; k < cut; ++k)
        left *= dims[static_cast<size_t>(k)];
    const Index right = total / left;
    // Column-major map: X(j, i) = psi[i * right + j].
    Eigen::Map<const DenseC> x(state.data(), right, left);
    if (prefix)
        return (x.adjoint() * x).transpose();
    return x * x.adjoint();
}

inline DenseC reduced_density(const VecC &state, std::span<const int> dims, std::initializer_list<int> sites) {
    return reduced_density(state, dims, std::span<const int>(sites.begin(), sites.size()));
}

/// Von Neumann entropy -Tr rho ln rho.
inline double entropy(const DenseC &rho) {
    Eigen::SelfAdjointEigenSolver<DenseC> es(rho, Eigen::EigenvaluesOnly);
    double s = 0.0;
    for (Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double p = es.eigenvalues()(i);
        if (p > 1e-300)
            s -= p * std::log(p);
    }
    return s;
}

/// Entanglement entropy across the bond after site `cut - 1`.
inline double bipartite_entropy(const VecC &state, std::span<const int> dims, int cut) {
    const int n = static_cast<int>(dims.size());
    if (cut <= 0 || cut >= n)
        detail::raise<DomainError>("bipartite_entropy", "cut must split the chain");
    Index left = 1, total = 1;
    for (int k = 0; k < n; ++k) {
        total *= dims[static_cast<size_t>(k)];
        if (k < cut)
            left *= dims[static_cast<size_t>(k)];
    }
    if (state.size() != total)
        detail::raise<DomainError>("bipartite_entropy", "state/dimension mismatch");
    Eigen::Map<const DenseC> x(state.data(), total / left, left);
    Eigen::BDCSVD<DenseC> svd(x);
    double s = 0.0;
    for (Index i = 0; i < svd.singularValues().size(); ++i) {
        const double p = svd.singularValues()(i) * svd.singularValues()(i);
        if (p > 1e-300)
            s -= p * std::log(p);
    }
    return s;
}

} // namespace qlsim
