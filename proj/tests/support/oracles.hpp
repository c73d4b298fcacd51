#ifndef LWAT_TESTS_ORACLES_HPP
#define LWAT_TESTS_ORACLES_HPP

// Independent reference implementations for the test suite. These stay
// deliberately naive and must not share code with the library paths they
// check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "lwat/rng.hpp"
#include "lwat/tensor.hpp"

namespace lwat::testing {

// Six-nested-loop cross-correlation reference.
template <typename T>
TensorT<T> conv2d_naive(const TensorT<T>& in, const TensorT<T>& kr, int64_t stride, int64_t pad) {
    const int64_t N = in.extent(0), C = in.extent(1), H = in.extent(2), W = in.extent(3);
    const int64_t F = kr.extent(0), kh = kr.extent(2), kw = kr.extent(3);
    const int64_t ho = (H + 2 * pad - kh) / stride + 1;
    const int64_t wo = (W + 2 * pad - kw) / stride + 1;
    TensorT<T> out({N, F, ho, wo});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t f = 0; f < F; ++f)
            for (int64_t oy = 0; oy < ho; ++oy)
                for (int64_t ox = 0; ox < wo; ++ox) {
                    double acc = 0.0;
                    for (int64_t c = 0; c < C; ++c)
                        for (int64_t ky = 0; ky < kh; ++ky)
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                const int64_t iy = oy * stride + ky - pad;
                                const int64_t ix = ox * stride + kx - pad;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += static_cast<double>(in.at({n, c, iy, ix})) *
                                       static_cast<double>(kr.at({f, c, ky, kx}));
                            }
                    out.at({n, f, oy, ox}) = static_cast<T>(acc);
                }
    return out;
}

// Central finite differences of a scalar function w.r.t. every entry of t.
inline Tensor64 fd_gradient(const std::function<double(const Tensor64&)>& f, const Tensor64& t,
                            double h = 1e-5) {
    Tensor64 g(t.shape());
    Tensor64 probe = t;
    for (int64_t i = 0; i < t.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double fp = f(probe);
        probe[i] = orig - h;
        const double fm = f(probe);
        probe[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
    return std::abs(a - b) / denom;
}

inline double max_rel_err(const Tensor64& a, const Tensor64& b) {
    double m = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, rel_err(a[i], b[i]));
    return m;
}

// Classical two-sided Jacobi eigensolver for symmetric matrices, used as the
// Gram-matrix oracle against the library's one-sided SVD.
inline std::vector<double> sym_eigenvalues(Tensor64 a, int sweeps = 60) {
    const int64_t n = a.extent(0);
    for (int s = 0; s < sweeps; ++s) {
        double off = 0.0;
        for (int64_t p = 0; p < n; ++p)
            for (int64_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        if (off < 1e-26) break;
        for (int64_t p = 0; p < n - 1; ++p)
            for (int64_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = c * t;
                for (int64_t i = 0; i < n; ++i) {
                    const double aip = a[i * n + p], aiq = a[i * n + q];
                    a[i * n + p] = c * aip - sn * aiq;
                    a[i * n + q] = sn * aip + c * aiq;
                }
                for (int64_t i = 0; i < n; ++i) {
                    const double api = a[p * n + i], aqi = a[q * n + i];
                    a[p * n + i] = c * api - sn * aqi;
                    a[q * n + i] = sn * api + c * aqi;
                }
            }
    }
    std::vector<double> ev(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) ev[static_cast<size_t>(i)] = a[i * n + i];
    return ev;
}

template <typename T>
TensorT<T> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    TensorT<T> t(std::move(s));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

} // namespace lwat::testing

#endif // LWAT_TESTS_ORACLES_HPP
