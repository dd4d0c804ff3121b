#include "umc/kernels.hpp"

#include <algorithm>
#include <cmath>

// Reference kernels. Plain loops, one output element at a time. The SIMD
// variants mirror the exact per-element operation order used here.

namespace umc::kernels {
namespace {

void conv2d_scalar(const double* in, int c, int h, int w,
                   const double* weight, int oc, int kh, int kw,
                   const double* bias, int stride, int pad,
                   double* out, int oh, int ow) {
    for (int o = 0; o < oc; ++o) {
        const double b = bias ? bias[o] : 0.0;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = b;
                for (int ic = 0; ic < c; ++ic) {
                    const double* wrow = weight + ((static_cast<std::size_t>(o) * c + ic) * kh) * kw;
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
                out[(static_cast<std::size_t>(o) * oh + oy) * ow + ox] = acc;
            }
        }
    }
}

void blend_scalar(const double* g, const double* a, const double* b,
                  double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = g[i] * a[i] + (1.0 - g[i]) * b[i];
    }
}

void weighted_add_scalar(double* acc, const double* w, const double* f,
                         int c, std::size_t hw) {
    for (int ch = 0; ch < c; ++ch) {
        double* arow = acc + static_cast<std::size_t>(ch) * hw;
        const double* frow = f + static_cast<std::size_t>(ch) * hw;
        for (std::size_t p = 0; p < hw; ++p) {
            arow[p] += w[p] * frow[p];
        }
    }
}

void l2norm_scalar(const double* in, int c, std::size_t hw,
                   const double* scale, double eps, double* out) {
    for (std::size_t p = 0; p < hw; ++p) {
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

void channel_max_scalar(const double* in, int c, std::size_t hw, double* out) {
    for (std::size_t p = 0; p < hw; ++p) {
        double m = in[p];
        for (int ch = 1; ch < c; ++ch) {
            m = std::max(m, in[static_cast<std::size_t>(ch) * hw + p]);
        }
        out[p] = m;
    }
}

void rbf_accumulate_scalar(const double* grid, int c, std::size_t hw,
                           const std::size_t* src, const double* wgt,
                           std::size_t n, double* num, double* den) {
    double d = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        d += wgt[k];
    }
    *den = d;
    for (int ch = 0; ch < c; ++ch) {
        const double* grow = grid + static_cast<std::size_t>(ch) * hw;
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            acc += wgt[k] * grow[src[k]];
        }
        num[ch] = acc;
    }
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable t{
        conv2d_scalar, blend_scalar, weighted_add_scalar,
        l2norm_scalar, channel_max_scalar, rbf_accumulate_scalar,
        "scalar",
    };
    return t;
}

}  // namespace umc::kernels
