#include "umc/kernels.hpp"

// AVX2 kernel variants. Compiled with -mavx2 (and only this file), selected at
// runtime by dispatch.cpp. Vectorization is always across independent output
// elements; each element sees the same operation sequence as the scalar
// reference and multiplies and adds stay separate instructions, so results are
// bit-identical to scalar.cpp. Boundary elements and non-unit strides fall
// back to the reference loops.

#ifdef UMC_WITH_AVX2

#include <immintrin.h>

#include <algorithm>
#include <cmath>

namespace umc::kernels {
namespace {

// Scalar accumulation for one conv output element, shared by the edge cases.
inline double conv_cell(const double* in, int c, int h, int w,
                        const double* weight, int oc_ic_stride, int o,
                        const double* bias, int kh, int kw,
                        int stride, int pad, int oy, int ox) {
    double acc = bias ? bias[o] : 0.0;
    for (int ic = 0; ic < c; ++ic) {
        const double* wrow = weight + (static_cast<std::size_t>(o) * oc_ic_stride + ic) * kh * kw;
        const double* irow = in + static_cast<std::size_t>(ic) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= w) continue;
                acc += wrow[ky * kw + kx] * irow[iy * w + ix];
            }
        }
    }
    return acc;
}

void conv2d_avx2(const double* in, int c, int h, int w,
                 const double* weight, int oc, int kh, int kw,
                 const double* bias, int stride, int pad,
                 double* out, int oh, int ow) {
    // Interior columns have the whole kernel footprint in-bounds, which makes
    // the x loads contiguous. Only stride 1 is vectorized; the stride-2 convs
    // in the encoder are a small share of the work.
    const int lo = (stride == 1) ? pad : ow;
    const int hi = (stride == 1) ? std::min(ow - 1, w - kw + pad) : -1;
    for (int o = 0; o < oc; ++o) {
        const double b = bias ? bias[o] : 0.0;
        for (int oy = 0; oy < oh; ++oy) {
            double* orow = out + (static_cast<std::size_t>(o) * oh + oy) * ow;
            int ox = 0;
            for (; ox < std::min(lo, ow); ++ox) {
                orow[ox] = conv_cell(in, c, h, w, weight, c, o, bias, kh, kw, stride, pad, oy, ox);
            }
            for (; ox + 3 <= hi; ox += 4) {
                __m256d acc = _mm256_set1_pd(b);
                for (int ic = 0; ic < c; ++ic) {
                    const double* wrow = weight + (static_cast<std::size_t>(o) * c + ic) * kh * kw;
                    const double* irow = in + static_cast<std::size_t>(ic) * h * w;
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const __m256d wv = _mm256_set1_pd(wrow[ky * kw + kx]);
                            const __m256d iv = _mm256_loadu_pd(irow + iy * w + ox + kx - pad);
                            acc = _mm256_add_pd(acc, _mm256_mul_pd(wv, iv));
                        }
                    }
                }
                _mm256_storeu_pd(orow + ox, acc);
            }
            for (; ox < ow; ++ox) {
                orow[ox] = conv_cell(in, c, h, w, weight, c, o, bias, kh, kw, stride, pad, oy, ox);
            }
        }
    }
}

void blend_avx2(const double* g, const double* a, const double* b,
                double* out, std::size_t n) {
    const __m256d one = _mm256_set1_pd(1.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d gv = _mm256_loadu_pd(g + i);
        const __m256d av = _mm256_loadu_pd(a + i);
        const __m256d bv = _mm256_loadu_pd(b + i);
        const __m256d lhs = _mm256_mul_pd(gv, av);
        const __m256d rhs = _mm256_mul_pd(_mm256_sub_pd(one, gv), bv);
        _mm256_storeu_pd(out + i, _mm256_add_pd(lhs, rhs));
    }
    for (; i < n; ++i) {
        out[i] = g[i] * a[i] + (1.0 - g[i]) * b[i];
    }
}

void weighted_add_avx2(double* acc, const double* w, const double* f,
                       int c, std::size_t hw) {
    for (int ch = 0; ch < c; ++ch) {
        double* arow = acc + static_cast<std::size_t>(ch) * hw;
        const double* frow = f + static_cast<std::size_t>(ch) * hw;
        std::size_t p = 0;
        for (; p + 4 <= hw; p += 4) {
            const __m256d av = _mm256_loadu_pd(arow + p);
            const __m256d wv = _mm256_loadu_pd(w + p);
            const __m256d fv = _mm256_loadu_pd(frow + p);
            _mm256_storeu_pd(arow + p, _mm256_add_pd(av, _mm256_mul_pd(wv, fv)));
        }
        for (; p < hw; ++p) {
            arow[p] += w[p] * frow[p];
        }
    }
}

void l2norm_avx2(const double* in, int c, std::size_t hw,
                 const double* scale, double eps, double* out) {
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d epsv = _mm256_set1_pd(eps);
    std::size_t p = 0;
    for (; p + 4 <= hw; p += 4) {
        __m256d ss = _mm256_setzero_pd();
        for (int ch = 0; ch < c; ++ch) {
            const __m256d v = _mm256_loadu_pd(in + static_cast<std::size_t>(ch) * hw + p);
            ss = _mm256_add_pd(ss, _mm256_mul_pd(v, v));
        }
        const __m256d inv = _mm256_div_pd(one, _mm256_add_pd(_mm256_sqrt_pd(ss), epsv));
        for (int ch = 0; ch < c; ++ch) {
            const __m256d v = _mm256_loadu_pd(in + static_cast<std::size_t>(ch) * hw + p);
            const __m256d sv = _mm256_set1_pd(scale[ch]);
            _mm256_storeu_pd(out + static_cast<std::size_t>(ch) * hw + p,
                             _mm256_mul_pd(_mm256_mul_pd(v, inv), sv));
        }
    }
    for (; p < hw; ++p) {
        double ss = 0.0;
        for (int ch = 0; ch < c; ++ch) {
            const double v = in[static_cast<std::size_t>(ch) * hw + p];
            ss += v * v;
        }
        const double inv = 1.0 / (std::sqrt(ss) + eps);
        for (int ch = 0; ch < c; ++ch) {
            out[static_cast<std::size_t>(ch) * hw + p] =
                in[static_cast<std::size_t>(ch) * hw + p] * inv * scale[ch];
        }
    }
}

void channel_max_avx2(const double* in, int c, std::size_t hw, double* out) {
    std::size_t p = 0;
    for (; p + 4 <= hw; p += 4) {
        __m256d m = _mm256_loadu_pd(in + p);
        for (int ch = 1; ch < c; ++ch) {
            m = _mm256_max_pd(m, _mm256_loadu_pd(in + static_cast<std::size_t>(ch) * hw + p));
        }
        _mm256_storeu_pd(out + p, m);
    }
    for (; p < hw; ++p) {
        double m = in[p];
        for (int ch = 1; ch < c; ++ch) {
            m = std::max(m, in[static_cast<std::size_t>(ch) * hw + p]);
        }
        out[p] = m;
    }
}

void rbf_accumulate_avx2(const double* grid, int c, std::size_t hw,
                         const std::size_t* src, const double* wgt,
                         std::size_t n, double* num, double* den) {
    // The weight sum keeps the scalar accumulation order; the channel sums are
    // vectorized four channels at a time, each channel still adding neighbors
    // in index order.
    double d = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        d += wgt[k];
    }
    *den = d;
    int ch = 0;
    for (; ch + 4 <= c; ch += 4) {
        const double* g0 = grid + static_cast<std::size_t>(ch) * hw;
        const double* g1 = g0 + hw;
        const double* g2 = g1 + hw;
        const double* g3 = g2 + hw;
        __m256d acc = _mm256_setzero_pd();
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t s = src[k];
            const __m256d wv = _mm256_set1_pd(wgt[k]);
            const __m256d gv = _mm256_set_pd(g3[s], g2[s], g1[s], g0[s]);
            acc = _mm256_add_pd(acc, _mm256_mul_pd(wv, gv));
        }
        _mm256_storeu_pd(num + ch, acc);
    }
    for (; ch < c; ++ch) {
        const double* grow = grid + static_cast<std::size_t>(ch) * hw;
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            acc += wgt[k] * grow[src[k]];
        }
        num[ch] = acc;
    }
}

}  // namespace

const KernelTable* avx2_table() {
    static const KernelTable t{
        conv2d_avx2, blend_avx2, weighted_add_avx2,
        l2norm_avx2, channel_max_avx2, rbf_accumulate_avx2,
        "avx2",
    };
    return &t;
}

}  // namespace umc::kernels

#else

namespace umc::kernels {

const KernelTable* avx2_table() { return nullptr; }

}  // namespace umc::kernels

#endif
