#ifndef LWAT_KERNELS_HPP
#define LWAT_KERNELS_HPP

#include <cstdint>
#include <vector>

#include "lwat/errors.hpp"
#include "lwat/tensor.hpp"

// Layer math shared by the autodiff primitives and the public nn surface.

namespace lwat {

// x[m x n] + b[n], broadcast over rows.
template <typename T>
TensorT<T> add_rowvec(const TensorT<T>& x, const TensorT<T>& b) {
    if (x.rank() != 2 || b.rank() != 1 || x.extent(1) != b.extent(0))
        throw DimensionError("add_rowvec: " + shape_str(x.shape()) + " vs " + shape_str(b.shape()));
    TensorT<T> out(x.shape());
    const int64_t m = x.extent(0), n = x.extent(1);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + b[j];
    return out;
}

template <typename T>
TensorT<T> rowvec_sum(const TensorT<T>& g) {
    const int64_t m = g.extent(0), n = g.extent(1);
    TensorT<T> out({n});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[j] += g[i * n + j];
    return out;
}

// x[N x C x H x W] + b[C], broadcast per channel.
template <typename T>
TensorT<T> add_chanvec(const TensorT<T>& x, const TensorT<T>& b) {
    if (x.rank() != 4 || b.rank() != 1 || x.extent(1) != b.extent(0))
        throw DimensionError("add_chanvec: " + shape_str(x.shape()) + " vs " + shape_str(b.shape()));
    TensorT<T> out(x.shape());
    const int64_t n = x.extent(0), c = x.extent(1), sp = x.extent(2) * x.extent(3);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const int64_t base = (i * c + ch) * sp;
            for (int64_t s = 0; s < sp; ++s) out[base + s] = x[base + s] + b[ch];
        }
    return out;
}

template <typename T>
TensorT<T> chan_sum(const TensorT<T>& g) {
    const int64_t n = g.extent(0), c = g.extent(1), sp = g.extent(2) * g.extent(3);
    TensorT<T> out({c});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const int64_t base = (i * c + ch) * sp;
            for (int64_t s = 0; s < sp; ++s) out[ch] += g[base + s];
        }
    return out;
}

// ---------------------------------------------------------------------------
// batch normalization: channels at axis 1 ([N,C,H,W] or [N,D]), statistics
// over all remaining axes. Population variance.
// ---------------------------------------------------------------------------

template <typename T>
struct BnForward {
    TensorT<T> y;
    TensorT<T> xhat;   // normalized pre-affine input, kept for the backward
    TensorT<T> mean;   // [C]
    TensorT<T> var;    // [C]
    TensorT<T> rstd;   // [C]
};

namespace detail {
template <typename T>
void bn_dims(const TensorT<T>& x, int64_t& n, int64_t& c, int64_t& sp) {
    if (x.rank() < 2) throw DimensionError("batchnorm: input must be at least rank-2");
    n = x.extent(0);
    c = x.extent(1);
    sp = x.size() / (n * c);
}
} // namespace detail

template <typename T>
BnForward<T> batchnorm_train(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                             T eps) {
    int64_t n, c, sp;
    detail::bn_dims(x, n, c, sp);
    if (n < 2) throw DimensionError("batchnorm: train mode needs batch >= 2, got " + std::to_string(n));
    if (gamma.size() != c || beta.size() != c)
        throw DimensionError("batchnorm: gamma/beta must have extent " + std::to_string(c));
    BnForward<T> r{TensorT<T>(x.shape()), TensorT<T>(x.shape()), TensorT<T>({c}), TensorT<T>({c}),
                   TensorT<T>({c})};
    const double denom = static_cast<double>(n * sp);
    for (int64_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const int64_t base = (i * c + ch) * sp;
            for (int64_t k = 0; k < sp; ++k) s += static_cast<double>(x[base + k]);
        }
        const double m = s / denom;
        double v = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const int64_t base = (i * c + ch) * sp;
            for (int64_t k = 0; k < sp; ++k) {
                const double d = static_cast<double>(x[base + k]) - m;
                v += d * d;
            }
        }
        v /= denom;
        r.mean[ch] = static_cast<T>(m);
        r.var[ch] = static_cast<T>(v);
        r.rstd[ch] = T{1} / std::sqrt(static_cast<T>(v) + eps);
    }
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const int64_t base = (i * c + ch) * sp;
            for (int64_t k = 0; k < sp; ++k) {
                const T xh = (x[base + k] - r.mean[ch]) * r.rstd[ch];
                r.xhat[base + k] = xh;
                r.y[base + k] = gamma[ch] * xh + beta[ch];
            }
        }
    return r;
}

// Eval mode: normalize with the provided running statistics.
template <typename T>
BnForward<T> batchnorm_eval(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                            const TensorT<T>& runMean, const TensorT<T>& runVar, T eps) {
    int64_t n, c, sp;
    detail::bn_dims(x, n, c, sp);
    BnForward<T> r{TensorT<T>(x.shape()), TensorT<T>(x.shape()), runMean, runVar, TensorT<T>({c})};
    for (int64_t ch = 0; ch < c; ++ch) r.rstd[ch] = T{1} / std::sqrt(runVar[ch] + eps);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const int64_t base = (i * c + ch) * sp;
            for (int64_t k = 0; k < sp; ++k) {
                const T xh = (x[base + k] - runMean[ch]) * r.rstd[ch];
                r.xhat[base + k] = xh;
                r.y[base + k] = gamma[ch] * xh + beta[ch];
            }
        }
    return r;
}

template <typename T>
struct BnBackward {
    TensorT<T> gx;
    TensorT<T> ggamma;
    TensorT<T> gbeta;
};

// Train-mode gradient; gradients flow through the batch statistics:
//   dx = gamma*rstd*(dy - mean(dy) - xhat*mean(dy*xhat))
template <typename T>
BnBackward<T> batchnorm_backward_train(const TensorT<T>& gy, const TensorT<T>& gamma,
                                       const TensorT<T>& xhat, const TensorT<T>& rstd) {
    int64_t n, c, sp;
    detail::bn_dims(gy, n, c, sp);
    BnBackward<T> r{TensorT<T>(gy.shape()), TensorT<T>({c}), TensorT<T>({c})};
    const double denom = static_cast<double>(n * sp);
    for (int64_t ch = 0; ch < c; ++ch) {
        double sg = 0.0, sgx = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const int64_t base = (i * c + ch) * sp;
            for (int64_t k = 0; k < sp; ++k) {
                sg += static_cast<double>(gy[base + k]);
                sgx += static_cast<double>(gy[base + k]) * static_cast<double>(xhat[base + k]);
            }
        }
        r.gbeta[ch] = static_cast<T>(sg);
        r.ggamma[ch] = static_cast<T>(sgx);
        const T mg = static_cast<T>(sg / denom);
        const T mgx = static_cast<T>(sgx / denom);
        const T a = gamma[ch] * rstd[ch];
        for (int64_t i = 0; i < n; ++i) {
            const int64_t base = (i * c + ch) * sp;
            for (int64_t k = 0; k < sp; ++k)
                r.gx[base + k] = a * (gy[base + k] - mg - xhat[base + k] * mgx);
        }
    }
    return r;
}

// Eval-mode gradient; running stats are constants.
template <typename T>
BnBackward<T> batchnorm_backward_eval(const TensorT<T>& gy, const TensorT<T>& gamma,
                                      const TensorT<T>& xhat, const TensorT<T>& rstd) {
    int64_t n, c, sp;
    detail::bn_dims(gy, n, c, sp);
    BnBackward<T> r{TensorT<T>(gy.shape()), TensorT<T>({c}), TensorT<T>({c})};
    for (int64_t ch = 0; ch < c; ++ch) {
        double sg = 0.0, sgx = 0.0;
        const T a = gamma[ch] * rstd[ch];
        for (int64_t i = 0; i < n; ++i) {
            const int64_t base = (i * c + ch) * sp;
            for (int64_t k = 0; k < sp; ++k) {
                sg += static_cast<double>(gy[base + k]);
                sgx += static_cast<double>(gy[base + k]) * static_cast<double>(xhat[base + k]);
                r.gx[base + k] = a * gy[base + k];
            }
        }
        r.gbeta[ch] = static_cast<T>(sg);
        r.ggamma[ch] = static_cast<T>(sgx);
    }
    return r;
}

// ---------------------------------------------------------------------------
// max pooling (no padding); ties keep the first (lowest) source index
// ---------------------------------------------------------------------------

template <typename T>
struct PoolForward {
    TensorT<T> y;
    std::vector<int64_t> argmax; // flat source index per output element
};

template <typename T>
PoolForward<T> maxpool2d(const TensorT<T>& x, int64_t kh, int64_t kw, int64_t stride) {
    if (x.rank() != 4) throw DimensionError("maxpool2d: expects rank-4, got " + shape_str(x.shape()));
    const int64_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    if (kh > h || kw > w) throw DimensionError("maxpool2d: window larger than input");
    const int64_t ho = (h - kh) / stride + 1, wo = (w - kw) / stride + 1;
    PoolForward<T> r{TensorT<T>({n, c, ho, wo}), {}};
    r.argmax.resize(static_cast<size_t>(n * c * ho * wo));
    int64_t o = 0;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const T* plane = x.data() + (i * c + ch) * h * w;
            for (int64_t oy = 0; oy < ho; ++oy)
                for (int64_t ox = 0; ox < wo; ++ox, ++o) {
                    const int64_t y0 = oy * stride, x0 = ox * stride;
                    T best = plane[y0 * w + x0];
                    int64_t bestIdx = y0 * w + x0;
                    for (int64_t dy = 0; dy < kh; ++dy)
                        for (int64_t dx = 0; dx < kw; ++dx) {
                            const int64_t idx = (y0 + dy) * w + (x0 + dx);
                            if (plane[idx] > best) {
                                best = plane[idx];
                                bestIdx = idx;
                            }
                        }
                    r.y[o] = best;
                    r.argmax[static_cast<size_t>(o)] = (i * c + ch) * h * w + bestIdx;
                }
        }
    return r;
}

template <typename T>
TensorT<T> maxpool2d_backward(const TensorT<T>& gy, const Shape& inShape,
                              const std::vector<int64_t>& argmax) {
    TensorT<T> gx(inShape);
    for (int64_t i = 0; i < gy.size(); ++i) gx[argmax[static_cast<size_t>(i)]] += gy[i];
    return gx;
}

// ---------------------------------------------------------------------------
// softmax cross-entropy, mean over the batch, max-subtraction stabilized
// ---------------------------------------------------------------------------

template <typename T>
struct XentForward {
    T loss;
    TensorT<T> probs; // [k x C], kept for the backward
};

template <typename T>
XentForward<T> softmax_xent(const TensorT<T>& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2)
        throw DimensionError("softmax_xent: logits must be [k x C], got " + shape_str(logits.shape()));
    const int64_t k = logits.extent(0), c = logits.extent(1);
    if (static_cast<int64_t>(labels.size()) != k)
        throw DimensionError("softmax_xent: " + std::to_string(labels.size()) + " labels for batch " +
                             std::to_string(k));
    for (int64_t i = 0; i < k; ++i)
        if (labels[i] < 0 || labels[i] >= c)
            throw InputError("softmax_xent: label " + std::to_string(labels[i]) +
                             " out of range [0," + std::to_string(c) + ")");
    XentForward<T> r{T{0}, TensorT<T>(logits.shape())};
    double total = 0.0;
    for (int64_t i = 0; i < k; ++i) {
        const T* row = logits.data() + i * c;
        T mx = row[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int64_t j = 0; j < c; ++j) z += std::exp(static_cast<double>(row[j] - mx));
        const double logz = std::log(z);
        for (int64_t j = 0; j < c; ++j)
            r.probs[i * c + j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx) - logz));
        total += logz - static_cast<double>(row[labels[i]] - mx);
    }
    r.loss = static_cast<T>(total / static_cast<double>(k));
    return r;
}

// d(loss)/d(logits) = (softmax - onehot)/k, scaled by the upstream seed.
template <typename T>
TensorT<T> softmax_xent_backward(T seed, const TensorT<T>& probs, const std::vector<int>& labels) {
    const int64_t k = probs.extent(0), c = probs.extent(1);
    TensorT<T> g(probs.shape());
    const T invk = seed / static_cast<T>(k);
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < c; ++j)
            g[i * c + j] = invk * (probs[i * c + j] - (labels[i] == j ? T{1} : T{0}));
    return g;
}

} // namespace lwat

#endif // LWAT_KERNELS_HPP
