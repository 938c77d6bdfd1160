#pragma once
// Serial reference implementations of the kernels in kernels.hpp, written as
// the plain textbook loops. Kept for testing and benchmarking: the parallel
// kernels must produce bitwise-identical output (same per-element
// accumulation order), which the kernel test suite asserts on random inputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include "actigen/kernels.hpp"

namespace actigen::refk {

template <class T>
void matmul(const T* a, const T* b, T* c, int m, int k_dim, int n, bool accumulate = false) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            T acc = accumulate ? c[static_cast<size_t>(i) * n + j] : T(0);
            for (int k = 0; k < k_dim; ++k)
                acc += a[static_cast<size_t>(i) * k_dim + k] * b[static_cast<size_t>(k) * n + j];
            c[static_cast<size_t>(i) * n + j] = acc;
        }
    }
}

template <class T>
void matmul_at_b(const T* a, const T* b, T* c, int m, int k_dim, int n, bool accumulate = false) {
    for (int k = 0; k < k_dim; ++k) {
        for (int j = 0; j < n; ++j) {
            T acc = accumulate ? c[static_cast<size_t>(k) * n + j] : T(0);
            for (int i = 0; i < m; ++i)
                acc += a[static_cast<size_t>(i) * k_dim + k] * b[static_cast<size_t>(i) * n + j];
            c[static_cast<size_t>(k) * n + j] = acc;
        }
    }
}

template <class T>
void matmul_a_bt(const T* a, const T* b, T* c, int m, int k_dim, int n, bool accumulate = false) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            T acc = accumulate ? c[static_cast<size_t>(i) * n + j] : T(0);
            for (int k = 0; k < k_dim; ++k)
                acc += a[static_cast<size_t>(i) * k_dim + k] * b[static_cast<size_t>(j) * k_dim + k];
            c[static_cast<size_t>(i) * n + j] = acc;
        }
    }
}

template <class T>
void layer_norm_forward(const T* x, const T* gain, const T* bias, T* y, T* xhat, T* inv_std,
                        int rows, int d, T eps) {
    for (int i = 0; i < rows; ++i) {
        const T* xr = x + static_cast<size_t>(i) * d;
        T* yr = y + static_cast<size_t>(i) * d;
        T* xh = xhat + static_cast<size_t>(i) * d;
        T mean = 0;
        for (int j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<T>(d);
        T var = 0;
        for (int j = 0; j < d; ++j) {
            const T dj = xr[j] - mean;
            var += dj * dj;
        }
        var /= static_cast<T>(d);
        const T istd = T(1) / std::sqrt(var + eps);
        inv_std[i] = istd;
        for (int j = 0; j < d; ++j) {
            xh[j] = (xr[j] - mean) * istd;
            yr[j] = gain[j] * xh[j] + bias[j];
        }
    }
}

template <class T>
void softmax_rows(const T* x, T* y, int rows, int n) {
    for (int i = 0; i < rows; ++i) {
        const T* xr = x + static_cast<size_t>(i) * n;
        T* yr = y + static_cast<size_t>(i) * n;
        T m = xr[0];
        for (int j = 1; j < n; ++j) m = std::max(m, xr[j]);
        T z = 0;
        for (int j = 0; j < n; ++j) {
            yr[j] = std::exp(xr[j] - m);
            z += yr[j];
        }
        const T inv_z = T(1) / z;
        for (int j = 0; j < n; ++j) yr[j] *= inv_z;
    }
}

// Contiguous causal attention over a whole batch of heads, one head after
// another; the parallel path fans the same per-head routine out over
// (batch, head) pairs.
template <class T>
void attention_batch(const T* q, const T* k, const T* v, T* out, T* probs, int num_heads,
                     int seq, int dk, T scale) {
    for (int h = 0; h < num_heads; ++h) {
        const size_t off = static_cast<size_t>(h) * seq * dk;
        kernels::attention_head_forward(q + off, k + off, v + off, out + off,
                                        probs + static_cast<size_t>(h) * seq * seq, seq, dk, dk,
                                        scale);
    }
}

}  // namespace actigen::refk
