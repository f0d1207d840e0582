#pragma once

#include <cstddef>
#include <vector>

#include <cblas.h>

#include "delight/tensor.hpp"

namespace delight::nn {

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
                 int lda, const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
                 int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

// 3x3, pad-1 convolution lowering. col has (Cin*9) rows and (OH*OW) columns.
template <typename T>
void im2col_3x3(const T* x, int cin, int h, int w, int stride, T* col) {
    const int oh = (h - 1) / stride + 1;
    const int ow = (w - 1) / stride + 1;
    const std::size_t ocols = static_cast<std::size_t>(oh) * ow;
    for (int c = 0; c < cin; ++c) {
        const T* plane = x + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                T* dst = col + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * ocols;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - 1;
                    if (iy < 0 || iy >= h) {
                        for (int ox = 0; ox < ow; ++ox) dst[static_cast<std::size_t>(oy) * ow + ox] = T(0);
                        continue;
                    }
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - 1;
                        dst[static_cast<std::size_t>(oy) * ow + ox] =
                            (ix >= 0 && ix < w) ? plane[static_cast<std::size_t>(iy) * w + ix] : T(0);
                    }
                }
            }
    }
}

// Scatter-add transpose of im2col_3x3.
template <typename T>
void col2im_3x3(const T* col, int cin, int h, int w, int stride, T* x) {
    const int oh = (h - 1) / stride + 1;
    const int ow = (w - 1) / stride + 1;
    const std::size_t ocols = static_cast<std::size_t>(oh) * ow;
    for (int c = 0; c < cin; ++c) {
        T* plane = x + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                const T* src = col + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * ocols;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - 1;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - 1;
                        if (ix >= 0 && ix < w)
                            plane[static_cast<std::size_t>(iy) * w + ix] += src[static_cast<std::size_t>(oy) * ow + ox];
                    }
                }
            }
    }
}

template <typename T>
std::vector<T>& conv_scratch() {
    thread_local std::vector<T> buf;
    return buf;
}

}  // namespace delight::nn
