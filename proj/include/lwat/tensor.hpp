#ifndef LWAT_TENSOR_HPP
#define LWAT_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "lwat/errors.hpp"
#include "lwat/threading.hpp"

namespace lwat {

using Shape = std::vector<int64_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

// Dense row-major n-d array. Treated as immutable once a kernel has
// produced it; copies are deep.
template <typename T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(Shape shape) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(shape_numel(shape_), T{0});
    }

    TensorT(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
            throw DimensionError("tensor: data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_str(shape_));
    }

    static TensorT zeros(Shape s) { return TensorT(std::move(s)); }

    static TensorT full(Shape s, T v) {
        TensorT t(std::move(s));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static TensorT ones(Shape s) { return full(std::move(s), T{1}); }

    static TensorT identity(int64_t n) {
        TensorT t({n, n});
        for (int64_t i = 0; i < n; ++i) t.data_[i * n + i] = T{1};
        return t;
    }

    bool defined() const { return !shape_.empty(); }
    const Shape& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t extent(int64_t axis) const { return shape_.at(axis); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T operator[](int64_t i) const { return data_[i]; }
    T& operator[](int64_t i) { return data_[i]; }

    T at(std::initializer_list<int64_t> idx) const { return data_[offset(idx)]; }
    T& at(std::initializer_list<int64_t> idx) { return data_[offset(idx)]; }

    int64_t offset(std::initializer_list<int64_t> idx) const {
        int64_t off = 0, axis = 0;
        for (int64_t i : idx) {
            off = off * shape_[axis] + i;
            ++axis;
        }
        return off;
    }

    // Same buffer under a new shape; numel must be preserved.
    TensorT reshaped(Shape s) const& {
        if (shape_numel(s) != size())
            throw DimensionError("reshape: " + shape_str(shape_) + " -> " + shape_str(s) +
                                 " changes element count");
        return TensorT(std::move(s), data_);
    }

    TensorT reshaped(Shape s) && {
        if (shape_numel(s) != size())
            throw DimensionError("reshape: " + shape_str(shape_) + " -> " + shape_str(s) +
                                 " changes element count");
        return TensorT(std::move(s), std::move(data_));
    }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

private:
    void validate_shape() const {
        if (shape_.empty()) throw DimensionError("tensor: rank must be >= 1");
        for (int64_t e : shape_)
            if (e < 1) throw DimensionError("tensor: extent < 1 in " + shape_str(shape_));
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

namespace detail {
template <typename T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}
} // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T, typename F>
TensorT<T> map(const TensorT<T>& a, F f) {
    TensorT<T> out(a.shape());
    const T* pa = a.data();
    T* po = out.data();
    for (int64_t i = 0, n = a.size(); i < n; ++i) po[i] = f(pa[i]);
    return out;
}

template <typename T, typename F>
TensorT<T> zip(const TensorT<T>& a, const TensorT<T>& b, F f, const char* op = "zip") {
    detail::require_same_shape(a, b, op);
    TensorT<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (int64_t i = 0, n = a.size(); i < n; ++i) po[i] = f(pa[i], pb[i]);
    return out;
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    return zip(a, b, [](T x, T y) { return x + y; }, "add");
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    return zip(a, b, [](T x, T y) { return x - y; }, "sub");
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    return zip(a, b, [](T x, T y) { return x * y; }, "mul");
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T s) {
    return map(a, [s](T x) { return s * x; });
}

template <typename T>
TensorT<T> tanh_t(const TensorT<T>& a) {
    return map(a, [](T x) { return std::tanh(x); });
}

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
    return map(a, [](T x) { return x > T{0} ? x : T{0}; });
}

template <typename T>
TensorT<T> exp_t(const TensorT<T>& a) {
    return map(a, [](T x) { return std::exp(x); });
}

template <typename T>
TensorT<T> log_t(const TensorT<T>& a) {
    return map(a, [](T x) { return std::log(x); });
}

// Signum: -1 / 0 / +1 exactly.
template <typename T>
TensorT<T> sign(const TensorT<T>& a) {
    return map(a, [](T x) { return x > T{0} ? T{1} : (x < T{0} ? T{-1} : T{0}); });
}

template <typename T>
TensorT<T> clamp(const TensorT<T>& a, T lo, T hi) {
    return map(a, [lo, hi](T x) { return x < lo ? lo : (x > hi ? hi : x); });
}

// ---------------------------------------------------------------------------
// reductions (accumulate in double for stability)
// ---------------------------------------------------------------------------

template <typename T>
double sum(const TensorT<T>& a) {
    double s = 0.0;
    for (int64_t i = 0, n = a.size(); i < n; ++i) s += static_cast<double>(a[i]);
    return s;
}

template <typename T>
double mean(const TensorT<T>& a) {
    return sum(a) / static_cast<double>(a.size());
}

// Population variance.
template <typename T>
double var(const TensorT<T>& a) {
    const double m = mean(a);
    double s = 0.0;
    for (int64_t i = 0, n = a.size(); i < n; ++i) {
        const double d = static_cast<double>(a[i]) - m;
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

template <typename T>
T max(const TensorT<T>& a) {
    T m = a[0];
    for (int64_t i = 1, n = a.size(); i < n; ++i) m = std::max(m, a[i]);
    return m;
}

template <typename T>
T min(const TensorT<T>& a) {
    T m = a[0];
    for (int64_t i = 1, n = a.size(); i < n; ++i) m = std::min(m, a[i]);
    return m;
}

template <typename T>
double l2_norm(const TensorT<T>& a) {
    double s = 0.0;
    for (int64_t i = 0, n = a.size(); i < n; ++i) {
        const double v = static_cast<double>(a[i]);
        s += v * v;
    }
    return std::sqrt(s);
}

template <typename T>
double linf_norm(const TensorT<T>& a) {
    double m = 0.0;
    for (int64_t i = 0, n = a.size(); i < n; ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i])));
    return m;
}

// Index of the maximum along `axis`; ties break to the lowest index.
// Result is laid out in row-major order of the remaining axes.
template <typename T>
std::vector<int64_t> argmax(const TensorT<T>& a, int64_t axis) {
    if (axis < 0 || axis >= a.rank())
        throw DimensionError("argmax: axis " + std::to_string(axis) + " out of range for " +
                             shape_str(a.shape()));
    int64_t outer = 1, inner = 1;
    for (int64_t i = 0; i < axis; ++i) outer *= a.extent(i);
    for (int64_t i = axis + 1; i < a.rank(); ++i) inner *= a.extent(i);
    const int64_t ax = a.extent(axis);
    std::vector<int64_t> out(static_cast<size_t>(outer * inner));
    const T* p = a.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            T best = p[o * ax * inner + in];
            int64_t bestIdx = 0;
            for (int64_t k = 1; k < ax; ++k) {
                const T v = p[(o * ax + k) * inner + in];
                if (v > best) {
                    best = v;
                    bestIdx = k;
                }
            }
            out[static_cast<size_t>(o * inner + in)] = bestIdx;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// matmul family
// ---------------------------------------------------------------------------

// C[m x n] = A[m x k] * B[k x n]
template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw DimensionError("matmul: expects rank-2 operands, got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    if (a.extent(1) != b.extent(0))
        throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    TensorT<T> c({m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    parallel_for(m, [=](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            T* ci = pc + i * n;
            const T* ai = pa + i * k;
            for (int64_t l = 0; l < k; ++l) {
                const T av = ai[l];
                const T* bl = pb + l * n;
                for (int64_t j = 0; j < n; ++j) ci[j] += av * bl[j];
            }
        }
    });
    return c;
}

// C[m x n] = A[m x k] * B^T where B is [n x k]
template <typename T>
TensorT<T> matmul_nt(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(1))
        throw DimensionError("matmul_nt: incompatible " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(0);
    TensorT<T> c({m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    parallel_for(m, [=](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            const T* ai = pa + i * k;
            T* ci = pc + i * n;
            for (int64_t j = 0; j < n; ++j) {
                const T* bj = pb + j * k;
                T acc{0};
                for (int64_t l = 0; l < k; ++l) acc += ai[l] * bj[l];
                ci[j] = acc;
            }
        }
    });
    return c;
}

// C[k x n] = A^T * B where A is [m x k], B is [m x n]
template <typename T>
TensorT<T> matmul_tn(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(0) != b.extent(0))
        throw DimensionError("matmul_tn: incompatible " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    TensorT<T> c({k, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    for (int64_t i = 0; i < m; ++i) {
        const T* ai = pa + i * k;
        const T* bi = pb + i * n;
        for (int64_t l = 0; l < k; ++l) {
            const T av = ai[l];
            T* cl = pc + l * n;
            for (int64_t j = 0; j < n; ++j) cl[j] += av * bi[j];
        }
    }
    return c;
}

template <typename T>
TensorT<T> transpose2d(const TensorT<T>& a) {
    if (a.rank() != 2) throw DimensionError("transpose2d: expects rank-2, got " + shape_str(a.shape()));
    const int64_t m = a.extent(0), n = a.extent(1);
    TensorT<T> out({n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    return out;
}

// ---------------------------------------------------------------------------
// convolution (cross-correlation, no kernel flip) via im2col + matmul
// ---------------------------------------------------------------------------

struct ConvDims {
    int64_t n, c, h, w;        // input
    int64_t f, kh, kw;         // kernel
    int64_t stride, pad;
    int64_t ho, wo;            // output spatial
};

inline ConvDims conv_dims(const Shape& in, const Shape& kr, int64_t stride, int64_t pad) {
    if (in.size() != 4 || kr.size() != 4)
        throw DimensionError("conv2d: input and kernel must be rank-4, got " + shape_str(in) +
                             " and " + shape_str(kr));
    if (in[1] != kr[1])
        throw DimensionError("conv2d: channel mismatch " + shape_str(in) + " vs " + shape_str(kr));
    if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
    if (pad < 0) throw DimensionError("conv2d: pad must be >= 0");
    ConvDims d{in[0], in[1], in[2], in[3], kr[0], kr[2], kr[3], stride, pad, 0, 0};
    if (d.kh > d.h + 2 * pad || d.kw > d.w + 2 * pad)
        throw DimensionError("conv2d: kernel " + shape_str(kr) + " larger than padded input " +
                             shape_str(in) + " (pad " + std::to_string(pad) + ")");
    d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
    d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
    return d;
}

// One image: [C x H x W] -> [C*kh*kw x ho*wo]
template <typename T>
void im2col(const T* img, const ConvDims& d, T* col) {
    const int64_t cols = d.ho * d.wo;
    int64_t row = 0;
    for (int64_t c = 0; c < d.c; ++c) {
        for (int64_t ki = 0; ki < d.kh; ++ki) {
            for (int64_t kj = 0; kj < d.kw; ++kj, ++row) {
                T* dst = col + row * cols;
                for (int64_t oy = 0; oy < d.ho; ++oy) {
                    const int64_t iy = oy * d.stride + ki - d.pad;
                    if (iy < 0 || iy >= d.h) {
                        for (int64_t ox = 0; ox < d.wo; ++ox) dst[oy * d.wo + ox] = T{0};
                        continue;
                    }
                    const T* src = img + (c * d.h + iy) * d.w;
                    for (int64_t ox = 0; ox < d.wo; ++ox) {
                        const int64_t ix = ox * d.stride + kj - d.pad;
                        dst[oy * d.wo + ox] = (ix < 0 || ix >= d.w) ? T{0} : src[ix];
                    }
                }
            }
        }
    }
}

// Scatter-add of a column matrix back to image layout (for conv backward).
template <typename T>
void col2im_add(const T* col, const ConvDims& d, T* img) {
    const int64_t cols = d.ho * d.wo;
    int64_t row = 0;
    for (int64_t c = 0; c < d.c; ++c) {
        for (int64_t ki = 0; ki < d.kh; ++ki) {
            for (int64_t kj = 0; kj < d.kw; ++kj, ++row) {
                const T* src = col + row * cols;
                for (int64_t oy = 0; oy < d.ho; ++oy) {
                    const int64_t iy = oy * d.stride + ki - d.pad;
                    if (iy < 0 || iy >= d.h) continue;
                    T* dst = img + (c * d.h + iy) * d.w;
                    for (int64_t ox = 0; ox < d.wo; ++ox) {
                        const int64_t ix = ox * d.stride + kj - d.pad;
                        if (ix >= 0 && ix < d.w) dst[ix] += src[oy * d.wo + ox];
                    }
                }
            }
        }
    }
}

// input [N x C x H x W], kernel [F x C x kh x kw] -> [N x F x ho x wo].
// Optionally keeps the per-image column matrices for the backward pass.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& kernel, int64_t stride, int64_t pad,
                  std::vector<TensorT<T>>* colsOut = nullptr) {
    const ConvDims d = conv_dims(input.shape(), kernel.shape(), stride, pad);
    const int64_t kdim = d.c * d.kh * d.kw;
    const int64_t cols = d.ho * d.wo;
    TensorT<T> out({d.n, d.f, d.ho, d.wo});
    const TensorT<T> kmat = kernel.reshaped({d.f, kdim});
    if (colsOut) colsOut->assign(d.n, TensorT<T>());
    for (int64_t i = 0; i < d.n; ++i) {
        TensorT<T> col({kdim, cols});
        im2col(input.data() + i * d.c * d.h * d.w, d, col.data());
        TensorT<T> o = matmul(kmat, col);
        std::copy(o.data(), o.data() + d.f * cols, out.data() + i * d.f * cols);
        if (colsOut) (*colsOut)[i] = std::move(col);
    }
    return out;
}

// Gradients w.r.t. input and kernel. `cols` are the forward column matrices.
template <typename T>
void conv2d_backward(const TensorT<T>& gradOut, const TensorT<T>& kernel, const Shape& inShape,
                     const std::vector<TensorT<T>>& cols, int64_t stride, int64_t pad,
                     TensorT<T>& gradIn, TensorT<T>& gradKernel) {
    const ConvDims d = conv_dims(inShape, kernel.shape(), stride, pad);
    const int64_t kdim = d.c * d.kh * d.kw;
    const int64_t colsN = d.ho * d.wo;
    const TensorT<T> kmat = kernel.reshaped({d.f, kdim});
    gradIn = TensorT<T>(inShape);
    TensorT<T> gk({d.f, kdim});
    for (int64_t i = 0; i < d.n; ++i) {
        TensorT<T> g({d.f, colsN},
                     std::vector<T>(gradOut.data() + i * d.f * colsN,
                                    gradOut.data() + (i + 1) * d.f * colsN));
        // dK += g * col^T
        TensorT<T> gki = matmul_nt(g, cols[i]);
        for (int64_t j = 0; j < gk.size(); ++j) gk[j] += gki[j];
        // dcol = K^T * g, then scatter back
        TensorT<T> gcol = matmul_tn(kmat, g);
        col2im_add(gcol.data(), d, gradIn.data() + i * d.c * d.h * d.w);
    }
    gradKernel = std::move(gk).reshaped(kernel.shape());
}

template <typename T>
bool all_finite(const TensorT<T>& a) {
    for (int64_t i = 0, n = a.size(); i < n; ++i)
        if (!std::isfinite(a[i])) return false;
    return true;
}

} // namespace lwat

#endif // LWAT_TENSOR_HPP
