#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ttguide/types.hpp"

namespace ttguide {

template <typename Scalar>
struct SvdResult {
    RowMatrix<Scalar> U;     ///< m x k, orthonormal columns (zero columns for zero singular values)
    Vector<Scalar> S;        ///< k singular values, descending
    RowMatrix<Scalar> V;     ///< n x k, orthonormal columns
};

struct JacobiOptions {
    double tolerance = 1e-12;
    int max_sweeps = 60;
};

namespace detail {

// Hestenes one-sided Jacobi on a tall (m >= n) matrix.
template <typename Scalar>
SvdResult<Scalar> one_sided_jacobi_tall(RowMatrix<Scalar> work, const JacobiOptions& opt) {
    const Eigen::Index m = work.rows();
    const Eigen::Index n = work.cols();
    RowMatrix<Scalar> V = RowMatrix<Scalar>::Identity(n, n);

    for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
        bool rotated = false;
        for (Eigen::Index p = 0; p + 1 < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                Scalar alpha = 0, beta = 0, gamma = 0;
                for (Eigen::Index i = 0; i < m; ++i) {
                    alpha += work(i, p) * work(i, p);
                    beta += work(i, q) * work(i, q);
                    gamma += work(i, p) * work(i, q);
                }
                if (alpha == Scalar(0) || beta == Scalar(0)) continue;
                if (std::abs(gamma) <= Scalar(opt.tolerance) * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const Scalar zeta = (beta - alpha) / (Scalar(2) * gamma);
                const Scalar t = (zeta >= 0 ? Scalar(1) : Scalar(-1)) /
                                 (std::abs(zeta) + std::sqrt(Scalar(1) + zeta * zeta));
                const Scalar c = Scalar(1) / std::sqrt(Scalar(1) + t * t);
                const Scalar s = c * t;
                for (Eigen::Index i = 0; i < m; ++i) {
                    const Scalar up = work(i, p), uq = work(i, q);
                    work(i, p) = c * up - s * uq;
                    work(i, q) = s * up + c * uq;
                }
                for (Eigen::Index i = 0; i < n; ++i) {
                    const Scalar vp = V(i, p), vq = V(i, q);
                    V(i, p) = c * vp - s * vq;
                    V(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<Scalar> sigma(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) sigma[j] = work.col(j).norm();

    // Descending; ties keep original column order.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return sigma[a] > sigma[b]; });

    SvdResult<Scalar> out;
    out.U = RowMatrix<Scalar>::Zero(m, n);
    out.S.resize(n);
    out.V.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index j = order[k];
        out.S(k) = sigma[j];
        if (sigma[j] > Scalar(0)) out.U.col(k) = work.col(j) / sigma[j];
        out.V.col(k) = V.col(j);
    }
    return out;
}

} // namespace detail

/// Thin SVD A = U diag(S) V^T by one-sided (Hestenes) Jacobi rotations.
/// Stops when every column pair satisfies |a_p . a_q| <= tol * ||a_p|| ||a_q||,
/// or after max_sweeps sweeps.
template <typename Scalar, typename Derived>
SvdResult<Scalar> jacobi_svd(const Eigen::MatrixBase<Derived>& a, const JacobiOptions& opt = {}) {
    if (a.rows() >= a.cols()) return detail::one_sided_jacobi_tall<Scalar>(RowMatrix<Scalar>(a), opt);
    SvdResult<Scalar> t = detail::one_sided_jacobi_tall<Scalar>(RowMatrix<Scalar>(a.transpose()), opt);
    return SvdResult<Scalar>{std::move(t.V), std::move(t.S), std::move(t.U)};
}

template <typename Scalar>
struct EigResult {
    Vector<Scalar> values;         ///< ascending
    RowMatrix<Scalar> vectors;     ///< column k pairs with values(k)
    int sweeps = 0;
};

struct EigOptions {
    double relative_tolerance = 1e-12;  ///< stop when max |off-diagonal| < tol * ||A||_F
    int max_sweeps = 100;
    double symmetry_tolerance = 1e-10;  ///< absolute, scaled by max(1, max |a_ij|)
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
template <typename Scalar, typename Derived>
EigResult<Scalar> eig_sym(const Eigen::MatrixBase<Derived>& m, const EigOptions& opt = {}) {
    if (m.rows() != m.cols()) throw ShapeError("eig_sym needs a square matrix");
    const Eigen::Index n = m.rows();
    RowMatrix<Scalar> a = m;

    const Scalar scale = std::max<Scalar>(Scalar(1), a.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            if (std::abs(a(i, j) - a(j, i)) > Scalar(opt.symmetry_tolerance) * scale)
                throw NumericError("eig_sym: matrix is not symmetric within tolerance");
    a = (a + a.transpose().eval()) / Scalar(2);

    RowMatrix<Scalar> v = RowMatrix<Scalar>::Identity(n, n);
    const Scalar threshold = Scalar(opt.relative_tolerance) * a.norm();

    auto max_off = [&] {
        Scalar mx = 0;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j) mx = std::max(mx, std::abs(a(i, j)));
        return mx;
    };

    int sweeps = 0;
    while (sweeps < opt.max_sweeps && max_off() >= threshold && max_off() > Scalar(0)) {
        ++sweeps;
        for (Eigen::Index p = 0; p + 1 < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const Scalar apq = a(p, q);
                if (apq == Scalar(0)) continue;
                const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
                const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) /
                                 (std::abs(theta) + std::sqrt(theta * theta + Scalar(1)));
                const Scalar c = Scalar(1) / std::sqrt(t * t + Scalar(1));
                const Scalar s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const Scalar akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const Scalar apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const Scalar vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) < a(y, y); });

    EigResult<Scalar> out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    out.sweeps = sweeps;
    for (Eigen::Index k = 0; k < n; ++k) {
        out.values(k) = a(order[k], order[k]);
        out.vectors.col(k) = v.col(order[k]);
    }
    return out;
}

} // namespace ttguide
