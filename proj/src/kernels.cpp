#include "glim/kernels.hpp"

#include <cstring>

namespace glim::kernels {

namespace {

// Minimum MAC count before an op is worth a parallel region.
constexpr long long kOmpWork = 1 << 18;

// out[y,x] += a * in[y+dy, x+dx] over the valid intersection.
inline void axpy_shift(const Real* __restrict in, int ih, int iw, Real a, int dy, int dx,
                       Real* __restrict out, int oh, int ow) {
    if (a == Real(0)) return;  // exact zero taps contribute nothing
    const int y0 = dy < 0 ? -dy : 0;
    const int y1 = ih - dy < oh ? ih - dy : oh;
    const int x0 = dx < 0 ? -dx : 0;
    const int x1 = iw - dx < ow ? iw - dx : ow;
    const int n = x1 - x0;
    if (n <= 0) return;
    for (int y = y0; y < y1; ++y) {
        const Real* __restrict src = in + static_cast<size_t>(y + dy) * iw + (x0 + dx);
        Real* __restrict dst = out + static_cast<size_t>(y) * ow + x0;
        for (int i = 0; i < n; ++i) dst[i] += a * src[i];
    }
}

// sum over p[y,x] * q[y+dy, x+dx] on the valid intersection. Four
// independent partial sums keep the reduction pipelined; their combination
// order is fixed, so results stay bit-deterministic.
inline Real dot_shift(const Real* __restrict p, int ph, int pw, const Real* __restrict q,
                      int qh, int qw, int dy, int dx) {
    const int y0 = dy < 0 ? -dy : 0;
    const int y1 = qh - dy < ph ? qh - dy : ph;
    const int x0 = dx < 0 ? -dx : 0;
    const int x1 = qw - dx < pw ? qw - dx : pw;
    const int n = x1 - x0;
    Real a0 = 0, a1 = 0, a2 = 0, a3 = 0;
    for (int y = y0; y < y1; ++y) {
        const Real* __restrict pr = p + static_cast<size_t>(y) * pw + x0;
        const Real* __restrict qr = q + static_cast<size_t>(y + dy) * qw + (x0 + dx);
        int i = 0;
        for (; i + 4 <= n; i += 4) {
            a0 += pr[i] * qr[i];
            a1 += pr[i + 1] * qr[i + 1];
            a2 += pr[i + 2] * qr[i + 2];
            a3 += pr[i + 3] * qr[i + 3];
        }
        for (; i < n; ++i) a0 += pr[i] * qr[i];
    }
    return (a0 + a1) + (a2 + a3);
}

inline long long macs(const ConvDims& d) {
    return 1ll * d.co * d.ci * d.k * d.k * d.ho * d.wo;
}

}  // namespace

ConvDims ConvDims::conv(int ci, int h, int w, int co, int k, int stride, int pad) {
    if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
    if (h + 2 * pad < k || w + 2 * pad < k)
        throw DimensionError("conv2d: kernel larger than padded input");
    ConvDims d{ci, h, w, co, k, stride, pad, 0, 0};
    d.ho = (h + 2 * pad - k) / stride + 1;
    d.wo = (w + 2 * pad - k) / stride + 1;
    return d;
}

ConvDims ConvDims::deconv(int ci, int h, int w, int co, int k, int stride, int pad) {
    if (stride < 1) throw DimensionError("deconv2d: stride must be >= 1");
    ConvDims d{ci, h, w, co, k, stride, pad, 0, 0};
    d.ho = (h - 1) * stride - 2 * pad + k;
    d.wo = (w - 1) * stride - 2 * pad + k;
    if (d.ho < 1 || d.wo < 1) throw DimensionError("deconv2d: empty output");
    return d;
}

void conv2d_forward(const Real* x, const Real* w, const Real* bias, Real* y,
                    const ConvDims& d) {
    const size_t plane = static_cast<size_t>(d.ho) * d.wo;
    if (d.stride == 1) {
#pragma omp parallel for schedule(static) if (macs(d) >= kOmpWork)
        for (int oc = 0; oc < d.co; ++oc) {
            Real* yp = y + oc * plane;
            const Real b = bias ? bias[oc] : Real(0);
            for (size_t i = 0; i < plane; ++i) yp[i] = b;
            for (int ic = 0; ic < d.ci; ++ic) {
                const Real* xp = x + static_cast<size_t>(ic) * d.h * d.w;
                const Real* wp = w + (static_cast<size_t>(oc) * d.ci + ic) * d.k * d.k;
                for (int ky = 0; ky < d.k; ++ky)
                    for (int kx = 0; kx < d.k; ++kx)
                        axpy_shift(xp, d.h, d.w, wp[ky * d.k + kx], ky - d.pad,
                                   kx - d.pad, yp, d.ho, d.wo);
            }
        }
        return;
    }
#pragma omp parallel for schedule(static) if (macs(d) >= kOmpWork)
    for (int oc = 0; oc < d.co; ++oc) {
        Real* yp = y + oc * plane;
        for (int oy = 0; oy < d.ho; ++oy)
            for (int ox = 0; ox < d.wo; ++ox) {
                Real acc = bias ? bias[oc] : Real(0);
                for (int ic = 0; ic < d.ci; ++ic) {
                    const Real* xp = x + static_cast<size_t>(ic) * d.h * d.w;
                    const Real* wp = w + (static_cast<size_t>(oc) * d.ci + ic) * d.k * d.k;
                    for (int ky = 0; ky < d.k; ++ky) {
                        const int iy = oy * d.stride + ky - d.pad;
                        if (iy < 0 || iy >= d.h) continue;
                        for (int kx = 0; kx < d.k; ++kx) {
                            const int ix = ox * d.stride + kx - d.pad;
                            if (ix < 0 || ix >= d.w) continue;
                            acc += xp[iy * d.w + ix] * wp[ky * d.k + kx];
                        }
                    }
                }
                yp[oy * d.wo + ox] = acc;
            }
    }
}

void conv2d_backward_input(const Real* gy, const Real* w, Real* gx, const ConvDims& d) {
    if (d.stride == 1) {
#pragma omp parallel for schedule(static) if (macs(d) >= kOmpWork)
        for (int ic = 0; ic < d.ci; ++ic) {
            Real* gp = gx + static_cast<size_t>(ic) * d.h * d.w;
            for (int oc = 0; oc < d.co; ++oc) {
                const Real* gyp = gy + static_cast<size_t>(oc) * d.ho * d.wo;
                const Real* wp = w + (static_cast<size_t>(oc) * d.ci + ic) * d.k * d.k;
                for (int ky = 0; ky < d.k; ++ky)
                    for (int kx = 0; kx < d.k; ++kx)
                        axpy_shift(gyp, d.ho, d.wo, wp[ky * d.k + kx], d.pad - ky,
                                   d.pad - kx, gp, d.h, d.w);
            }
        }
        return;
    }
#pragma omp parallel for schedule(static) if (macs(d) >= kOmpWork)
    for (int ic = 0; ic < d.ci; ++ic) {
        Real* gp = gx + static_cast<size_t>(ic) * d.h * d.w;
        for (int iy = 0; iy < d.h; ++iy)
            for (int ix = 0; ix < d.w; ++ix) {
                Real acc = 0;
                for (int oc = 0; oc < d.co; ++oc) {
                    const Real* gyp = gy + static_cast<size_t>(oc) * d.ho * d.wo;
                    const Real* wp = w + (static_cast<size_t>(oc) * d.ci + ic) * d.k * d.k;
                    for (int ky = 0; ky < d.k; ++ky) {
                        const int t = iy + d.pad - ky;
                        if (t < 0 || t % d.stride) continue;
                        const int oy = t / d.stride;
                        if (oy >= d.ho) continue;
                        for (int kx = 0; kx < d.k; ++kx) {
                            const int u = ix + d.pad - kx;
                            if (u < 0 || u % d.stride) continue;
                            const int ox = u / d.stride;
                            if (ox >= d.wo) continue;
                            acc += gyp[oy * d.wo + ox] * wp[ky * d.k + kx];
                        }
                    }
                }
                gp[iy * d.w + ix] += acc;
            }
    }
}

void conv2d_backward_kernel(const Real* gy, const Real* x, Real* gw, const ConvDims& d) {
    // 3x3 stride-1 fast path: per output channel, rank-1 updates of the
    // whole [Ci,3,3] gradient slice, split into an unconditional interior
    // sweep and a bounds-checked border sweep.
    if (d.stride == 1 && d.k == 3 && d.pad == 1 && d.ci <= 32) {
#pragma omp parallel for schedule(static) if (macs(d) >= kOmpWork)
        for (int oc = 0; oc < d.co; ++oc) {
            Real acc[32 * 9];
            const int n = d.ci * 9;
            for (int i = 0; i < n; ++i) acc[i] = 0;
            const Real* gyp = gy + static_cast<size_t>(oc) * d.ho * d.wo;
            for (int oy = 0; oy < d.ho; ++oy) {
                const bool yin = oy > 0 && oy < d.h - 1;
                for (int ox = 0; ox < d.wo; ++ox) {
                    const Real g = gyp[oy * d.wo + ox];
                    if (g == Real(0)) continue;
                    if (yin && ox > 0 && ox < d.w - 1) {
                        for (int ic = 0; ic < d.ci; ++ic) {
                            const Real* __restrict xb =
                                x + (static_cast<size_t>(ic) * d.h + oy - 1) * d.w + ox - 1;
                            Real* __restrict a = acc + ic * 9;
                            a[0] += g * xb[0];
                            a[1] += g * xb[1];
                            a[2] += g * xb[2];
                            xb += d.w;
                            a[3] += g * xb[0];
                            a[4] += g * xb[1];
                            a[5] += g * xb[2];
                            xb += d.w;
                            a[6] += g * xb[0];
                            a[7] += g * xb[1];
                            a[8] += g * xb[2];
                        }
                    } else {
                        for (int ic = 0; ic < d.ci; ++ic) {
                            const Real* xp = x + static_cast<size_t>(ic) * d.h * d.w;
                            Real* a = acc + ic * 9;
                            for (int ky = 0; ky < 3; ++ky) {
                                const int iy = oy + ky - 1;
                                if (iy < 0 || iy >= d.h) continue;
                                for (int kx = 0; kx < 3; ++kx) {
                                    const int ix = ox + kx - 1;
                                    if (ix < 0 || ix >= d.w) continue;
                                    a[ky * 3 + kx] += g * xp[iy * d.w + ix];
                                }
                            }
                        }
                    }
                }
            }
            Real* wp = gw + static_cast<size_t>(oc) * d.ci * 9;
            for (int i = 0; i < n; ++i) wp[i] += acc[i];
        }
        return;
    }
    if (d.stride == 1) {
#pragma omp parallel for collapse(2) schedule(static) if (macs(d) >= kOmpWork)
        for (int oc = 0; oc < d.co; ++oc)
            for (int ic = 0; ic < d.ci; ++ic) {
                const Real* gyp = gy + static_cast<size_t>(oc) * d.ho * d.wo;
                const Real* xp = x + static_cast<size_t>(ic) * d.h * d.w;
                Real* wp = gw + (static_cast<size_t>(oc) * d.ci + ic) * d.k * d.k;
                for (int ky = 0; ky < d.k; ++ky)
                    for (int kx = 0; kx < d.k; ++kx)
                        wp[ky * d.k + kx] += dot_shift(gyp, d.ho, d.wo, xp, d.h, d.w,
                                                       ky - d.pad, kx - d.pad);
            }
        return;
    }
#pragma omp parallel for collapse(2) schedule(static) if (macs(d) >= kOmpWork)
    for (int oc = 0; oc < d.co; ++oc)
        for (int ic = 0; ic < d.ci; ++ic) {
            const Real* gyp = gy + static_cast<size_t>(oc) * d.ho * d.wo;
            const Real* xp = x + static_cast<size_t>(ic) * d.h * d.w;
            Real* wp = gw + (static_cast<size_t>(oc) * d.ci + ic) * d.k * d.k;
            for (int ky = 0; ky < d.k; ++ky)
                for (int kx = 0; kx < d.k; ++kx) {
                    Real acc = 0;
                    for (int oy = 0; oy < d.ho; ++oy) {
                        const int iy = oy * d.stride + ky - d.pad;
                        if (iy < 0 || iy >= d.h) continue;
                        for (int ox = 0; ox < d.wo; ++ox) {
                            const int ix = ox * d.stride + kx - d.pad;
                            if (ix < 0 || ix >= d.w) continue;
                            acc += gyp[oy * d.wo + ox] * xp[iy * d.w + ix];
                        }
                    }
                    wp[ky * d.k + kx] += acc;
                }
        }
}

void conv2d_backward_bias(const Real* gy, Real* gb, const ConvDims& d) {
    const size_t plane = static_cast<size_t>(d.ho) * d.wo;
    for (int oc = 0; oc < d.co; ++oc) {
        Real acc = 0;
        const Real* gyp = gy + oc * plane;
        for (size_t i = 0; i < plane; ++i) acc += gyp[i];
        gb[oc] += acc;
    }
}

// y[b, oy*s-p+ky, ox*s-p+kx] += x[a, oy, ox] * w[a, b, ky, kx], written as a
// gather over output pixels.
void deconv2d_forward(const Real* x, const Real* w, const Real* bias, Real* y,
                      const ConvDims& d) {
    const size_t plane = static_cast<size_t>(d.ho) * d.wo;
    if (d.stride == 1) {
#pragma omp parallel for schedule(static) if (macs(d) >= kOmpWork)
        for (int b = 0; b < d.co; ++b) {
            Real* yp = y + b * plane;
            const Real bv = bias ? bias[b] : Real(0);
            for (size_t i = 0; i < plane; ++i) yp[i] = bv;
            for (int a = 0; a < d.ci; ++a) {
                const Real* xp = x + static_cast<size_t>(a) * d.h * d.w;
                const Real* wp = w + (static_cast<size_t>(a) * d.co + b) * d.k * d.k;
                for (int ky = 0; ky < d.k; ++ky)
                    for (int kx = 0; kx < d.k; ++kx)
                        axpy_shift(xp, d.h, d.w, wp[ky * d.k + kx], d.pad - ky,
                                   d.pad - kx, yp, d.ho, d.wo);
            }
        }
        return;
    }
#pragma omp parallel for schedule(static) if (macs(d) >= kOmpWork)
    for (int b = 0; b < d.co; ++b) {
        Real* yp = y + b * plane;
        for (int iy = 0; iy < d.ho; ++iy)
            for (int ix = 0; ix < d.wo; ++ix) {
                Real acc = bias ? bias[b] : Real(0);
                for (int ky = 0; ky < d.k; ++ky) {
                    const int t = iy + d.pad - ky;
                    if (t < 0 || t % d.stride) continue;
                    const int oy = t / d.stride;
                    if (oy >= d.h) continue;
                    for (int kx = 0; kx < d.k; ++kx) {
                        const int u = ix + d.pad - kx;
                        if (u < 0 || u % d.stride) continue;
                        const int ox = u / d.stride;
                        if (ox >= d.w) continue;
                        for (int a = 0; a < d.ci; ++a)
                            acc += x[(static_cast<size_t>(a) * d.h + oy) * d.w + ox] *
                                   w[((static_cast<size_t>(a) * d.co + b) * d.k + ky) * d.k + kx];
                    }
                }
                yp[iy * d.wo + ix] = acc;
            }
    }
}

void deconv2d_backward_input(const Real* gy, const Real* w, Real* gx, const ConvDims& d) {
#pragma omp parallel for schedule(static) if (macs(d) >= kOmpWork)
    for (int a = 0; a < d.ci; ++a) {
        Real* gp = gx + static_cast<size_t>(a) * d.h * d.w;
        for (int oy = 0; oy < d.h; ++oy)
            for (int ox = 0; ox < d.w; ++ox) {
                Real acc = 0;
                for (int b = 0; b < d.co; ++b) {
                    const Real* gyp = gy + static_cast<size_t>(b) * d.ho * d.wo;
                    const Real* wp = w + (static_cast<size_t>(a) * d.co + b) * d.k * d.k;
                    for (int ky = 0; ky < d.k; ++ky) {
                        const int iy = oy * d.stride + ky - d.pad;
                        if (iy < 0 || iy >= d.ho) continue;
                        for (int kx = 0; kx < d.k; ++kx) {
                            const int ix = ox * d.stride + kx - d.pad;
                            if (ix < 0 || ix >= d.wo) continue;
                            acc += gyp[iy * d.wo + ix] * wp[ky * d.k + kx];
                        }
                    }
                }
                gp[oy * d.w + ox] += acc;
            }
    }
}

void deconv2d_backward_kernel(const Real* gy, const Real* x, Real* gw, const ConvDims& d) {
#pragma omp parallel for collapse(2) schedule(static) if (macs(d) >= kOmpWork)
    for (int a = 0; a < d.ci; ++a)
        for (int b = 0; b < d.co; ++b) {
            const Real* xp = x + static_cast<size_t>(a) * d.h * d.w;
            const Real* gyp = gy + static_cast<size_t>(b) * d.ho * d.wo;
            Real* wp = gw + (static_cast<size_t>(a) * d.co + b) * d.k * d.k;
            for (int ky = 0; ky < d.k; ++ky)
                for (int kx = 0; kx < d.k; ++kx) {
                    Real acc = 0;
                    for (int oy = 0; oy < d.h; ++oy) {
                        const int iy = oy * d.stride + ky - d.pad;
                        if (iy < 0 || iy >= d.ho) continue;
                        for (int ox = 0; ox < d.w; ++ox) {
                            const int ix = ox * d.stride + kx - d.pad;
                            if (ix < 0 || ix >= d.wo) continue;
                            acc += xp[oy * d.w + ox] * gyp[iy * d.wo + ix];
                        }
                    }
                    wp[ky * d.k + kx] += acc;
                }
        }
}

void deconv2d_backward_bias(const Real* gy, Real* gb, const ConvDims& d) {
    const size_t plane = static_cast<size_t>(d.ho) * d.wo;
    for (int b = 0; b < d.co; ++b) {
        Real acc = 0;
        const Real* gyp = gy + b * plane;
        for (size_t i = 0; i < plane; ++i) acc += gyp[i];
        gb[b] += acc;
    }
}

namespace reference {

void conv2d_forward(const Real* x, const Real* w, const Real* bias, Real* y,
                    const ConvDims& d) {
    for (int oc = 0; oc < d.co; ++oc)
        for (int oy = 0; oy < d.ho; ++oy)
            for (int ox = 0; ox < d.wo; ++ox) {
                Real acc = bias ? bias[oc] : Real(0);
                for (int ic = 0; ic < d.ci; ++ic)
                    for (int ky = 0; ky < d.k; ++ky)
                        for (int kx = 0; kx < d.k; ++kx) {
                            const int iy = oy * d.stride + ky - d.pad;
                            const int ix = ox * d.stride + kx - d.pad;
                            if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                            acc += x[(static_cast<size_t>(ic) * d.h + iy) * d.w + ix] *
                                   w[((static_cast<size_t>(oc) * d.ci + ic) * d.k + ky) * d.k + kx];
                        }
                y[(static_cast<size_t>(oc) * d.ho + oy) * d.wo + ox] = acc;
            }
}

void deconv2d_forward(const Real* x, const Real* w, const Real* bias, Real* y,
                      const ConvDims& d) {
    const size_t total = static_cast<size_t>(d.co) * d.ho * d.wo;
    for (size_t i = 0; i < total; ++i) y[i] = 0;
    for (int a = 0; a < d.ci; ++a)
        for (int oy = 0; oy < d.h; ++oy)
            for (int ox = 0; ox < d.w; ++ox)
                for (int b = 0; b < d.co; ++b)
                    for (int ky = 0; ky < d.k; ++ky)
                        for (int kx = 0; kx < d.k; ++kx) {
                            const int iy = oy * d.stride + ky - d.pad;
                            const int ix = ox * d.stride + kx - d.pad;
                            if (iy < 0 || iy >= d.ho || ix < 0 || ix >= d.wo) continue;
                            y[(static_cast<size_t>(b) * d.ho + iy) * d.wo + ix] +=
                                x[(static_cast<size_t>(a) * d.h + oy) * d.w + ox] *
                                w[((static_cast<size_t>(a) * d.co + b) * d.k + ky) * d.k + kx];
                        }
    if (bias)
        for (int b = 0; b < d.co; ++b)
            for (size_t i = 0; i < static_cast<size_t>(d.ho) * d.wo; ++i)
                y[b * static_cast<size_t>(d.ho) * d.wo + i] += bias[b];
}

}  // namespace reference

}  // namespace glim::kernels
