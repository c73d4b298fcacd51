#ifndef LWAT_SVD_HPP
#define LWAT_SVD_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "lwat/errors.hpp"
#include "lwat/tensor.hpp"

// One-sided (Hestenes) Jacobi SVD for small dense matrices, in double.
// A = U * diag(sigma) * V^T with sigma sorted non-increasing.

namespace lwat {

struct SvdResult {
    Tensor64 u;                 // m x n (thin)
    std::vector<double> sigma;  // n, non-increasing, non-negative
    Tensor64 v;                 // n x n
};

namespace detail {

// Orthogonalizes the columns of w (m x n, m >= n) in place, accumulating
// rotations into v. Throws after maxSweeps sweeps without convergence.
inline void hestenes_sweeps(Tensor64& w, Tensor64& v, int maxSweeps, double tol) {
    const int64_t m = w.extent(0), n = w.extent(1);
    double* pw = w.data();
    double* pv = v.data();
    for (int sweep = 0; sweep < maxSweeps; ++sweep) {
        bool rotated = false;
        for (int64_t p = 0; p < n - 1; ++p) {
            for (int64_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gammaPQ = 0.0;
                for (int64_t i = 0; i < m; ++i) {
                    const double wp = pw[i * n + p], wq = pw[i * n + q];
                    alpha += wp * wp;
                    beta += wq * wq;
                    gammaPQ += wp * wq;
                }
                if (std::abs(gammaPQ) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gammaPQ);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int64_t i = 0; i < m; ++i) {
                    const double wp = pw[i * n + p], wq = pw[i * n + q];
                    pw[i * n + p] = c * wp - s * wq;
                    pw[i * n + q] = s * wp + c * wq;
                }
                for (int64_t i = 0; i < n; ++i) {
                    const double vp = pv[i * n + p], vq = pv[i * n + q];
                    pv[i * n + p] = c * vp - s * vq;
                    pv[i * n + q] = s * vp + c * vq;
                }
            }
        }
        if (!rotated) return;
    }
    throw NumericError("jacobi svd: no convergence after " + std::to_string(maxSweeps) + " sweeps");
}

} // namespace detail

inline SvdResult jacobi_svd(const Tensor64& a, int maxSweeps = 100, double tol = 1e-14) {
    if (a.rank() != 2) throw DimensionError("jacobi_svd: expects rank-2, got " + shape_str(a.shape()));
    const bool flip = a.extent(0) < a.extent(1); // work with m >= n
    Tensor64 w = flip ? transpose2d(a) : a;
    const int64_t m = w.extent(0), n = w.extent(1);
    Tensor64 v = Tensor64::identity(n);
    detail::hestenes_sweeps(w, v, maxSweeps, tol);

    std::vector<double> sigma(static_cast<size_t>(n));
    Tensor64 u({m, n});
    for (int64_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (int64_t i = 0; i < m; ++i) s += w[i * n + j] * w[i * n + j];
        sigma[static_cast<size_t>(j)] = std::sqrt(s);
    }
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int64_t x, int64_t y) { return sigma[static_cast<size_t>(x)] > sigma[static_cast<size_t>(y)]; });

    std::vector<double> sortedSigma(static_cast<size_t>(n));
    Tensor64 sortedV({n, n});
    for (int64_t j = 0; j < n; ++j) {
        const int64_t src = order[static_cast<size_t>(j)];
        const double sj = sigma[static_cast<size_t>(src)];
        sortedSigma[static_cast<size_t>(j)] = sj;
        const double inv = sj > 0.0 ? 1.0 / sj : 0.0;
        for (int64_t i = 0; i < m; ++i) u[i * n + j] = w[i * n + src] * inv;
        for (int64_t i = 0; i < n; ++i) sortedV[i * n + j] = v[i * n + src];
    }
    if (flip) return SvdResult{std::move(sortedV), std::move(sortedSigma), std::move(u)};
    return SvdResult{std::move(u), std::move(sortedSigma), std::move(sortedV)};
}

// Singular values only, for callers holding single-precision data.
inline std::vector<double> singular_values(const Tensor& a, int maxSweeps = 100) {
    Tensor64 a64(a.shape());
    for (int64_t i = 0; i < a.size(); ++i) a64[i] = static_cast<double>(a[i]);
    return jacobi_svd(a64, maxSweeps).sigma;
}

} // namespace lwat

#endif // LWAT_SVD_HPP
