#pragma once

#include <cstddef>
#include <string>

// Low-level array kernels behind the tensor and interpolation ops.
//
// Every kernel has a scalar reference implementation and, on x86-64, an AVX2
// variant. The active variant is chosen once at runtime (CPU probe, overridable
// with UMC_KERNEL=scalar|avx2|auto). The AVX2 code vectorizes across
// independent output elements and keeps the per-element operation order of the
// scalar reference, with no fused multiply-add, so the two backends produce
// bit-identical results; tests/test_kernels.cpp asserts exact equality.
// Kernels built around std::exp (sigmoid, entropy, softmax) are scalar only:
// a polynomial vector exp would not be bit-equal to libm.

namespace umc::kernels {

struct KernelTable {
    // out[oc,oy,ox] = bias[oc] + sum_{ic,ky,kx} w[oc,ic,ky,kx] * in[ic, oy*stride+ky-pad, ox*stride+kx-pad]
    // Zero padding; bias may be null.
    void (*conv2d)(const double* in, int c, int h, int w,
                   const double* weight, int oc, int kh, int kw,
                   const double* bias, int stride, int pad,
                   double* out, int oh, int ow);
    // out[i] = g[i]*a[i] + (1-g[i])*b[i]
    void (*blend)(const double* g, const double* a, const double* b,
                  double* out, std::size_t n);
    // acc[c*hw + p] += w[p] * f[c*hw + p] for all c, p (single-channel weight
    // map broadcast over channels).
    void (*weighted_add)(double* acc, const double* w, const double* f,
                         int c, std::size_t hw);
    // out[c*hw + p] = in[c*hw + p] * scale[c] / (sqrt(sum_c in[c*hw+p]^2) + eps)
    void (*l2norm)(const double* in, int c, std::size_t hw,
                   const double* scale, double eps, double* out);
    // out[p] = max_c in[c*hw + p]
    void (*channel_max)(const double* in, int c, std::size_t hw, double* out);
    // Weighted neighborhood fill used by the sparse-grid interpolation.
    // For one target cell: num[ch] += wgt[k] * grid[ch*hw + src[k]] over the
    // k = 0..n-1 participating neighbors, den += wgt[k].
    void (*rbf_accumulate)(const double* grid, int c, std::size_t hw,
                           const std::size_t* src, const double* wgt,
                           std::size_t n, double* num, double* den);
    const char* name;
};

// Scalar reference backend (always available).
const KernelTable& scalar_table();

// AVX2 backend; null on builds/hosts without AVX2.
const KernelTable* avx2_table();

// Backend picked by probe + UMC_KERNEL override. Stable for process lifetime.
const KernelTable& active_table();

}  // namespace umc::kernels
