#pragma once

// Data-parallel compute kernels for the 2D segmentation networks.
//
// Two implementations of every kernel:
//   kern::serial — straight-line reference loops, kept for testing
//   kern::par    — OpenMP versions, parallel over disjoint output elements
//
// The par kernels assign every output element to exactly one thread and
// accumulate contributions in a fixed order, so their results do not
// depend on the thread count. The pipeline always calls the par variants
// (through the dispatch functions at the bottom); the serial variants are
// the oracle the test suite and the benchmark compare against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "segda/tensor.hpp"

namespace segda::kern {

struct ConvShape {
    std::int64_t n;        // batch
    std::int64_t ci;       // input channels
    std::int64_t h, w;     // input spatial
    std::int64_t co;       // output channels
    std::int64_t kh, kw;   // kernel
    std::int64_t stride;
    std::int64_t pad;

    std::int64_t ho() const { return (h + 2 * pad - kh) / stride + 1; }
    std::int64_t wo() const { return (w + 2 * pad - kw) / stride + 1; }
};

// ---------------------------------------------------------------------------
// serial reference kernels
// ---------------------------------------------------------------------------

namespace serial {

template <typename T>
void conv2d_forward(const T* x, const T* wt, const T* bias, T* y, const ConvShape& s) {
    const std::int64_t ho = s.ho(), wo = s.wo();
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t co = 0; co < s.co; ++co)
            for (std::int64_t oy = 0; oy < ho; ++oy)
                for (std::int64_t ox = 0; ox < wo; ++ox) {
                    T acc = bias ? bias[co] : T(0);
                    for (std::int64_t ci = 0; ci < s.ci; ++ci)
                        for (std::int64_t ky = 0; ky < s.kh; ++ky)
                            for (std::int64_t kx = 0; kx < s.kw; ++kx) {
                                std::int64_t iy = oy * s.stride - s.pad + ky;
                                std::int64_t ix = ox * s.stride - s.pad + kx;
                                if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
                                acc += wt[((co * s.ci + ci) * s.kh + ky) * s.kw + kx] *
                                       x[((n * s.ci + ci) * s.h + iy) * s.w + ix];
                            }
                    y[((n * s.co + co) * ho + oy) * wo + ox] = acc;
                }
}

template <typename T>
void conv2d_backward_input(const T* dy, const T* wt, T* dx, const ConvShape& s) {
    const std::int64_t ho = s.ho(), wo = s.wo();
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t ci = 0; ci < s.ci; ++ci)
            for (std::int64_t iy = 0; iy < s.h; ++iy)
                for (std::int64_t ix = 0; ix < s.w; ++ix) {
                    T acc = T(0);
                    for (std::int64_t co = 0; co < s.co; ++co)
                        for (std::int64_t ky = 0; ky < s.kh; ++ky)
                            for (std::int64_t kx = 0; kx < s.kw; ++kx) {
                                std::int64_t ty = iy + s.pad - ky;
                                std::int64_t tx = ix + s.pad - kx;
                                if (ty % s.stride != 0 || tx % s.stride != 0) continue;
                                std::int64_t oy = ty / s.stride, ox = tx / s.stride;
                                if (oy < 0 || oy >= ho || ox < 0 || ox >= wo) continue;
                                acc += wt[((co * s.ci + ci) * s.kh + ky) * s.kw + kx] *
                                       dy[((n * s.co + co) * ho + oy) * wo + ox];
                            }
                    dx[((n * s.ci + ci) * s.h + iy) * s.w + ix] = acc;
                }
}

template <typename T>
void conv2d_backward_params(const T* x, const T* dy, T* dw, T* db, const ConvShape& s) {
    const std::int64_t ho = s.ho(), wo = s.wo();
    for (std::int64_t co = 0; co < s.co; ++co)
        for (std::int64_t ci = 0; ci < s.ci; ++ci)
            for (std::int64_t ky = 0; ky < s.kh; ++ky)
                for (std::int64_t kx = 0; kx < s.kw; ++kx) {
                    T acc = T(0);
                    for (std::int64_t n = 0; n < s.n; ++n)
                        for (std::int64_t oy = 0; oy < ho; ++oy)
                            for (std::int64_t ox = 0; ox < wo; ++ox) {
                                std::int64_t iy = oy * s.stride - s.pad + ky;
                                std::int64_t ix = ox * s.stride - s.pad + kx;
                                if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
                                acc += x[((n * s.ci + ci) * s.h + iy) * s.w + ix] *
                                       dy[((n * s.co + co) * ho + oy) * wo + ox];
                            }
                    dw[((co * s.ci + ci) * s.kh + ky) * s.kw + kx] = acc;
                }
    if (db) {
        for (std::int64_t co = 0; co < s.co; ++co) {
            T acc = T(0);
            for (std::int64_t n = 0; n < s.n; ++n)
                for (std::int64_t oy = 0; oy < ho; ++oy)
                    for (std::int64_t ox = 0; ox < wo; ++ox)
                        acc += dy[((n * s.co + co) * ho + oy) * wo + ox];
            db[co] = acc;
        }
    }
}

} // namespace serial

// ---------------------------------------------------------------------------
// OpenMP kernels
// ---------------------------------------------------------------------------

namespace par {

// Forward: restructured so the innermost loop runs contiguously over output
// x and accumulates into independent output elements (vectorizable without
// reassociation). Per-output accumulation order matches the serial kernel:
// (ci, ky, kx).
template <typename T>
void conv2d_forward(const T* x, const T* wt, const T* bias, T* y, const ConvShape& s) {
    const std::int64_t ho = s.ho(), wo = s.wo();
#pragma omp parallel for schedule(static) collapse(2)
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t co = 0; co < s.co; ++co) {
            T* yp = y + (n * s.co + co) * ho * wo;
            if (bias) {
                const T b = bias[co];
                for (std::int64_t i = 0; i < ho * wo; ++i) yp[i] = b;
            } else {
                for (std::int64_t i = 0; i < ho * wo; ++i) yp[i] = T(0);
            }
            for (std::int64_t ci = 0; ci < s.ci; ++ci) {
                const T* xp = x + (n * s.ci + ci) * s.h * s.w;
                for (std::int64_t ky = 0; ky < s.kh; ++ky)
                    for (std::int64_t kx = 0; kx < s.kw; ++kx) {
                        const T wv = wt[((co * s.ci + ci) * s.kh + ky) * s.kw + kx];
                        for (std::int64_t oy = 0; oy < ho; ++oy) {
                            const std::int64_t iy = oy * s.stride - s.pad + ky;
                            if (iy < 0 || iy >= s.h) continue;
                            const T* xrow = xp + iy * s.w;
                            T* yrow = yp + oy * wo;
                            // valid ox range so that 0 <= ix < w
                            std::int64_t ox0 = 0;
                            while (ox0 < wo && ox0 * s.stride - s.pad + kx < 0) ++ox0;
                            std::int64_t ox1 = wo;
                            while (ox1 > ox0 && (ox1 - 1) * s.stride - s.pad + kx >= s.w) --ox1;
                            const std::int64_t base = -s.pad + kx;
                            if (s.stride == 1) {
                                const T* xr = xrow + base;
                                for (std::int64_t ox = ox0; ox < ox1; ++ox)
                                    yrow[ox] += wv * xr[ox];
                            } else {
                                for (std::int64_t ox = ox0; ox < ox1; ++ox)
                                    yrow[ox] += wv * xrow[ox * s.stride + base];
                            }
                        }
                    }
            }
        }
}

template <typename T>
void conv2d_backward_input(const T* dy, const T* wt, T* dx, const ConvShape& s) {
    const std::int64_t ho = s.ho(), wo = s.wo();
#pragma omp parallel for schedule(static) collapse(2)
    for (std::int64_t n = 0; n < s.n; ++n)
        for (std::int64_t ci = 0; ci < s.ci; ++ci) {
            T* dxp = dx + (n * s.ci + ci) * s.h * s.w;
            for (std::int64_t i = 0; i < s.h * s.w; ++i) dxp[i] = T(0);
            // scatter dy through the kernel; each (n, ci) plane is owned by
            // one thread so += is race free, order matches serial (co, ky, kx)
            for (std::int64_t co = 0; co < s.co; ++co) {
                const T* dyp = dy + (n * s.co + co) * ho * wo;
                for (std::int64_t ky = 0; ky < s.kh; ++ky)
                    for (std::int64_t kx = 0; kx < s.kw; ++kx) {
                        const T wv = wt[((co * s.ci + ci) * s.kh + ky) * s.kw + kx];
                        for (std::int64_t oy = 0; oy < ho; ++oy) {
                            const std::int64_t iy = oy * s.stride - s.pad + ky;
                            if (iy < 0 || iy >= s.h) continue;
                            T* dxrow = dxp + iy * s.w;
                            const T* dyrow = dyp + oy * wo;
                            std::int64_t ox0 = 0;
                            while (ox0 < wo && ox0 * s.stride - s.pad + kx < 0) ++ox0;
                            std::int64_t ox1 = wo;
                            while (ox1 > ox0 && (ox1 - 1) * s.stride - s.pad + kx >= s.w) --ox1;
                            const std::int64_t base = -s.pad + kx;
                            if (s.stride == 1) {
                                T* dxr = dxrow + base;
                                for (std::int64_t ox = ox0; ox < ox1; ++ox)
                                    dxr[ox] += wv * dyrow[ox];
                            } else {
                                for (std::int64_t ox = ox0; ox < ox1; ++ox)
                                    dxrow[ox * s.stride + base] += wv * dyrow[ox];
                            }
                        }
                    }
            }
        }
}

// dW uses fixed 8-lane partial sums over output x so the reduction
// vectorizes; the lane assignment depends only on the data layout, never
// on the thread count, so results are reproducible. Rounding differs from
// the serial kernel's left-to-right sum; tests compare with a tolerance.
template <typename T>
void conv2d_backward_params(const T* x, const T* dy, T* dw, T* db, const ConvShape& s) {
    const std::int64_t ho = s.ho(), wo = s.wo();
#pragma omp parallel for schedule(static) collapse(2)
    for (std::int64_t co = 0; co < s.co; ++co)
        for (std::int64_t ci = 0; ci < s.ci; ++ci)
            for (std::int64_t ky = 0; ky < s.kh; ++ky)
                for (std::int64_t kx = 0; kx < s.kw; ++kx) {
                    T lane[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
                    for (std::int64_t n = 0; n < s.n; ++n) {
                        const T* xp = x + (n * s.ci + ci) * s.h * s.w;
                        const T* dyp = dy + (n * s.co + co) * ho * wo;
                        for (std::int64_t oy = 0; oy < ho; ++oy) {
                            const std::int64_t iy = oy * s.stride - s.pad + ky;
                            if (iy < 0 || iy >= s.h) continue;
                            const T* xrow = xp + iy * s.w;
                            const T* dyrow = dyp + oy * wo;
                            std::int64_t ox0 = 0;
                            while (ox0 < wo && ox0 * s.stride - s.pad + kx < 0) ++ox0;
                            std::int64_t ox1 = wo;
                            while (ox1 > ox0 && (ox1 - 1) * s.stride - s.pad + kx >= s.w) --ox1;
                            const std::int64_t base = -s.pad + kx;
                            if (s.stride == 1) {
                                const T* xr = xrow + base + ox0;
                                const T* dr = dyrow + ox0;
                                const std::int64_t len = ox1 - ox0;
                                std::int64_t k = 0;
                                for (; k + 8 <= len; k += 8)
                                    for (int j = 0; j < 8; ++j) lane[j] += xr[k + j] * dr[k + j];
                                for (int j = 0; k < len; ++k, ++j) lane[j] += xr[k] * dr[k];
                            } else {
                                std::int64_t k = 0;
                                for (std::int64_t ox = ox0; ox < ox1; ++ox, ++k)
                                    lane[k & 7] += xrow[ox * s.stride + base] * dyrow[ox];
                            }
                        }
                    }
                    const T acc = ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
                                  ((lane[4] + lane[5]) + (lane[6] + lane[7]));
                    dw[((co * s.ci + ci) * s.kh + ky) * s.kw + kx] = acc;
                }
    if (db) {
#pragma omp parallel for schedule(static)
        for (std::int64_t co = 0; co < s.co; ++co) {
            T acc = T(0);
            for (std::int64_t n = 0; n < s.n; ++n) {
                const T* dyp = dy + (n * s.co + co) * ho * wo;
                for (std::int64_t i = 0; i < ho * wo; ++i) acc += dyp[i];
            }
            db[co] = acc;
        }
    }
}

} // namespace par

// ---------------------------------------------------------------------------
// dispatch — the pipeline entry points
// ---------------------------------------------------------------------------

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& wt, const Tensor<T>* bias,
                    Tensor<T>& y, const ConvShape& s) {
    par::conv2d_forward(x.data(), wt.data(), bias ? bias->data() : nullptr, y.data(), s);
}

template <typename T>
void conv2d_backward_input(const Tensor<T>& dy, const Tensor<T>& wt, Tensor<T>& dx,
                           const ConvShape& s) {
    par::conv2d_backward_input(dy.data(), wt.data(), dx.data(), s);
}

template <typename T>
void conv2d_backward_params(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>& dw,
                            Tensor<T>* db, const ConvShape& s) {
    par::conv2d_backward_params(x.data(), dy.data(), dw.data(), db ? db->data() : nullptr, s);
}

// ---------------------------------------------------------------------------
// pointwise / pooling / resize kernels
// ---------------------------------------------------------------------------

template <typename T>
void relu_forward(const T* x, T* y, std::int64_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const T* x, const T* dy, T* dx, std::int64_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
}

template <typename T>
void add_inplace(T* y, const T* x, std::int64_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) y[i] += x[i];
}

// 2x2 max pooling, stride 2; argmax recorded for the backward pass
template <typename T>
void maxpool2_forward(const T* x, T* y, std::int32_t* argmax,
                      std::int64_t planes, std::int64_t h, std::int64_t w) {
    const std::int64_t ho = h / 2, wo = w / 2;
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const T* xp = x + p * h * w;
        T* yp = y + p * ho * wo;
        std::int32_t* ap = argmax + p * ho * wo;
        for (std::int64_t oy = 0; oy < ho; ++oy)
            for (std::int64_t ox = 0; ox < wo; ++ox) {
                std::int64_t best = (2 * oy) * w + 2 * ox;
                T bv = xp[best];
                const std::int64_t cand[3] = {(2 * oy) * w + 2 * ox + 1,
                                              (2 * oy + 1) * w + 2 * ox,
                                              (2 * oy + 1) * w + 2 * ox + 1};
                for (std::int64_t c : cand)
                    if (xp[c] > bv) { bv = xp[c]; best = c; }
                yp[oy * wo + ox] = bv;
                ap[oy * wo + ox] = static_cast<std::int32_t>(best);
            }
    }
}

template <typename T>
void maxpool2_backward(const T* dy, const std::int32_t* argmax, T* dx,
                       std::int64_t planes, std::int64_t h, std::int64_t w) {
    const std::int64_t ho = h / 2, wo = w / 2;
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        T* dxp = dx + p * h * w;
        for (std::int64_t i = 0; i < h * w; ++i) dxp[i] = T(0);
        const T* dyp = dy + p * ho * wo;
        const std::int32_t* ap = argmax + p * ho * wo;
        for (std::int64_t i = 0; i < ho * wo; ++i) dxp[ap[i]] += dyp[i];
    }
}

// nearest-neighbor 2x upsampling
template <typename T>
void upsample2_forward(const T* x, T* y, std::int64_t planes, std::int64_t h, std::int64_t w) {
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const T* xp = x + p * h * w;
        T* yp = y + p * 4 * h * w;
        for (std::int64_t iy = 0; iy < h; ++iy)
            for (std::int64_t ix = 0; ix < w; ++ix) {
                const T v = xp[iy * w + ix];
                T* r0 = yp + (2 * iy) * 2 * w + 2 * ix;
                T* r1 = r0 + 2 * w;
                r0[0] = v; r0[1] = v; r1[0] = v; r1[1] = v;
            }
    }
}

template <typename T>
void upsample2_backward(const T* dy, T* dx, std::int64_t planes, std::int64_t h, std::int64_t w) {
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < planes; ++p) {
        const T* dyp = dy + p * 4 * h * w;
        T* dxp = dx + p * h * w;
        for (std::int64_t iy = 0; iy < h; ++iy)
            for (std::int64_t ix = 0; ix < w; ++ix) {
                const T* r0 = dyp + (2 * iy) * 2 * w + 2 * ix;
                const T* r1 = r0 + 2 * w;
                dxp[iy * w + ix] = (r0[0] + r0[1]) + (r1[0] + r1[1]);
            }
    }
}

// ---------------------------------------------------------------------------
// batch normalization over (N, H, W) per channel
// ---------------------------------------------------------------------------

template <typename T>
void bn_forward_train(const T* x, T* y, const T* gamma, const T* beta,
                      T* running_mean, T* running_var, T* save_mean, T* save_invstd,
                      std::int64_t n, std::int64_t c, std::int64_t hw,
                      T eps, T momentum) {
#pragma omp parallel for schedule(static)
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const std::int64_t cnt = n * hw;
        T mean = T(0);
        for (std::int64_t b = 0; b < n; ++b) {
            const T* xp = x + (b * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i) mean += xp[i];
        }
        mean /= static_cast<T>(cnt);
        T var = T(0);
        for (std::int64_t b = 0; b < n; ++b) {
            const T* xp = x + (b * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
                const T d = xp[i] - mean;
                var += d * d;
            }
        }
        var /= static_cast<T>(cnt);  // biased variance, matches the backward pass
        const T invstd = T(1) / std::sqrt(var + eps);
        save_mean[ch] = mean;
        save_invstd[ch] = invstd;
        running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mean;
        running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * var;
        const T g = gamma[ch], bta = beta[ch];
        for (std::int64_t b = 0; b < n; ++b) {
            const T* xp = x + (b * c + ch) * hw;
            T* yp = y + (b * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i)
                yp[i] = (xp[i] - mean) * invstd * g + bta;
        }
    }
}

template <typename T>
void bn_forward_eval(const T* x, T* y, const T* gamma, const T* beta,
                     const T* running_mean, const T* running_var,
                     std::int64_t n, std::int64_t c, std::int64_t hw, T eps) {
#pragma omp parallel for schedule(static)
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const T invstd = T(1) / std::sqrt(running_var[ch] + eps);
        const T g = gamma[ch], bta = beta[ch], mean = running_mean[ch];
        for (std::int64_t b = 0; b < n; ++b) {
            const T* xp = x + (b * c + ch) * hw;
            T* yp = y + (b * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i)
                yp[i] = (xp[i] - mean) * invstd * g + bta;
        }
    }
}

// standard batchnorm backward using the saved batch statistics
template <typename T>
void bn_backward(const T* x, const T* dy, T* dx, const T* gamma,
                 const T* save_mean, const T* save_invstd,
                 T* dgamma, T* dbeta,
                 std::int64_t n, std::int64_t c, std::int64_t hw, bool train_stats) {
#pragma omp parallel for schedule(static)
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const std::int64_t cnt = n * hw;
        const T mean = save_mean[ch], invstd = save_invstd[ch], g = gamma[ch];
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (std::int64_t b = 0; b < n; ++b) {
            const T* xp = x + (b * c + ch) * hw;
            const T* dyp = dy + (b * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
                const T xhat = (xp[i] - mean) * invstd;
                sum_dy += dyp[i];
                sum_dy_xhat += dyp[i] * xhat;
            }
        }
        dgamma[ch] = sum_dy_xhat;
        dbeta[ch] = sum_dy;
        const T inv_cnt = T(1) / static_cast<T>(cnt);
        for (std::int64_t b = 0; b < n; ++b) {
            const T* xp = x + (b * c + ch) * hw;
            const T* dyp = dy + (b * c + ch) * hw;
            T* dxp = dx + (b * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
                const T xhat = (xp[i] - mean) * invstd;
                if (train_stats) {
                    dxp[i] = g * invstd *
                             (dyp[i] - inv_cnt * sum_dy - xhat * inv_cnt * sum_dy_xhat);
                } else {
                    // stats were treated as constants (frozen layer in eval mode)
                    dxp[i] = g * invstd * dyp[i];
                }
            }
        }
    }
}

} // namespace segda::kern
