#pragma once
// Dense kernels behind the model. Each parallel loop writes disjoint output
// elements and accumulates in a fixed inner order, so results are bitwise
// identical to the serial references in reference_kernels.hpp for any thread
// count. Tests assert exact equality between the two.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace actigen::kernels {

// C[m,n] = sum_k A[m,k] * B[k,n]   (+= when accumulate)
template <class T>
void matmul(const T* a, const T* b, T* c, int m, int k_dim, int n, bool accumulate = false) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<size_t>(i) * n;
        if (!accumulate) std::fill(crow, crow + n, T(0));
        const T* arow = a + static_cast<size_t>(i) * k_dim;
        for (int k = 0; k < k_dim; ++k) {
            const T aik = arow[k];
            const T* brow = b + static_cast<size_t>(k) * n;
            for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

// C[k,n] = sum_m A[m,k] * B[m,n]   (A^T B; the weight-gradient shape).
// Threads own disjoint row ranges of C and stream A and B once each, with
// the per-element accumulation still in ascending-m order (bitwise identical
// to the serial reference).
template <class T>
void matmul_at_b(const T* a, const T* b, T* c, int m, int k_dim, int n, bool accumulate = false) {
#pragma omp parallel
    {
#ifdef _OPENMP
        const int threads = omp_get_num_threads();
        const int tid = omp_get_thread_num();
#else
        const int threads = 1;
        const int tid = 0;
#endif
        const int chunk = (k_dim + threads - 1) / threads;
        const int k0 = std::min(k_dim, tid * chunk);
        const int k1 = std::min(k_dim, k0 + chunk);
        if (!accumulate) {
            for (int k = k0; k < k1; ++k)
                std::fill(c + static_cast<size_t>(k) * n, c + static_cast<size_t>(k + 1) * n,
                          T(0));
        }
        for (int i = 0; i < m; ++i) {
            const T* arow = a + static_cast<size_t>(i) * k_dim;
            const T* brow = b + static_cast<size_t>(i) * n;
            for (int k = k0; k < k1; ++k) {
                const T aik = arow[k];
                T* crow = c + static_cast<size_t>(k) * n;
                for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
            }
        }
    }
}

// C[i,j] = sum_k A[i,k] * B[j,k]   (A B^T; used to push gradients back
// through a weight). B is transposed into scratch first so the inner loop
// accumulates whole C rows, which vectorizes; each element still sums its
// products in ascending-k order, bitwise identical to the serial reference.
template <class T>
void matmul_a_bt(const T* a, const T* b, T* c, int m, int k_dim, int n, bool accumulate = false) {
    static thread_local std::vector<T> transposed;
    transposed.resize(static_cast<size_t>(k_dim) * n);
    T* const bt = transposed.data();
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < k_dim; ++k)
            bt[static_cast<size_t>(k) * n + j] = b[static_cast<size_t>(j) * k_dim + k];
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<size_t>(i) * k_dim;
        T* crow = c + static_cast<size_t>(i) * n;
        if (!accumulate) std::fill(crow, crow + n, T(0));
        for (int k = 0; k < k_dim; ++k) {
            const T aik = arow[k];
            const T* btrow = bt + static_cast<size_t>(k) * n;
            for (int j = 0; j < n; ++j) crow[j] += aik * btrow[j];
        }
    }
}

template <class T>
void add_bias(T* x, const T* bias, int rows, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) {
        T* row = x + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) row[j] += bias[j];
    }
}

// column sums: out[j] = sum_i x[i,j]
template <class T>
void column_sums(const T* x, T* out, int rows, int n) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < n; ++j) {
        T acc = 0;
        for (int i = 0; i < rows; ++i) acc += x[static_cast<size_t>(i) * n + j];
        out[j] = acc;
    }
}

template <class T>
void add_inplace(T* x, const T* y, size_t n) {
    const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < nn; ++i) x[i] += y[i];
}

// y = gain * (x - mean) / sqrt(var + eps) + bias, per row of d elements.
// xhat and inv_std are cached for the backward pass.
template <class T>
void layer_norm_forward(const T* x, const T* gain, const T* bias, T* y, T* xhat, T* inv_std,
                        int rows, int d, T eps) {
#pragma omp parallel for schedule(static)
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

// dx is accumulated (+=); dgain/dbias are overwritten with the full sums.
template <class T>
void layer_norm_backward(const T* dy, const T* gain, const T* xhat, const T* inv_std, T* dx,
                         T* dgain, T* dbias, int rows, int d) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < rows; ++i) {
        const T* dyr = dy + static_cast<size_t>(i) * d;
        const T* xh = xhat + static_cast<size_t>(i) * d;
        T* dxr = dx + static_cast<size_t>(i) * d;
        T sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (int j = 0; j < d; ++j) {
            const T dxh = dyr[j] * gain[j];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xh[j];
        }
        const T inv_d = T(1) / static_cast<T>(d);
        const T istd = inv_std[i];
        for (int j = 0; j < d; ++j) {
            const T dxh = dyr[j] * gain[j];
            dxr[j] += istd * (dxh - inv_d * sum_dxhat - xh[j] * inv_d * sum_dxhat_xhat);
        }
    }
#pragma omp parallel for schedule(static)
    for (int j = 0; j < d; ++j) {
        T dg = 0, db = 0;
        for (int i = 0; i < rows; ++i) {
            const size_t idx = static_cast<size_t>(i) * d + j;
            dg += dy[idx] * xhat[idx];
            db += dy[idx];
        }
        dgain[j] += dg;
        dbias[j] += db;
    }
}

// gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
template <class T>
inline T gelu(T x) {
    const T c = T(0.7978845608028653558798921198687637);  // sqrt(2/pi)
    const T a = T(0.044715);
    return T(0.5) * x * (T(1) + std::tanh(c * (x + a * x * x * x)));
}

template <class T>
inline T gelu_grad(T x) {
    const T c = T(0.7978845608028653558798921198687637);
    const T a = T(0.044715);
    const T u = c * (x + a * x * x * x);
    const T th = std::tanh(u);
    const T du = c * (T(1) + T(3) * a * x * x);
    return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * du;
}

template <class T>
void gelu_forward(const T* x, T* y, size_t n) {
    const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < nn; ++i) y[i] = gelu(x[i]);
}

// dx[i] = dy[i] * gelu'(x[i])
template <class T>
void gelu_backward(const T* x, const T* dy, T* dx, size_t n) {
    const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < nn; ++i) dx[i] = dy[i] * gelu_grad(x[i]);
}

// Causal single-head attention on strided matrices: row t of q/k/v/out lives at
// ptr + t*stride, dk contiguous columns. probs is a dense [seq,seq] row-softmax
// matrix with zeros above the diagonal. Serial on purpose: callers parallelize
// over (batch, head) pairs.
template <class T>
void attention_head_forward(const T* q, const T* k, const T* v, T* out, T* probs, int seq,
                            int dk, int stride, T scale) {
    for (int i = 0; i < seq; ++i) {
        const T* qi = q + static_cast<size_t>(i) * stride;
        T* prow = probs + static_cast<size_t>(i) * seq;
        T row_max = -std::numeric_limits<T>::infinity();
        for (int j = 0; j <= i; ++j) {
            const T* kj = k + static_cast<size_t>(j) * stride;
            T s = 0;
            for (int c = 0; c < dk; ++c) s += qi[c] * kj[c];
            s *= scale;
            prow[j] = s;
            row_max = std::max(row_max, s);
        }
        T z = 0;
        for (int j = 0; j <= i; ++j) {
            prow[j] = std::exp(prow[j] - row_max);
            z += prow[j];
        }
        const T inv_z = T(1) / z;
        for (int j = 0; j <= i; ++j) prow[j] *= inv_z;
        for (int j = i + 1; j < seq; ++j) prow[j] = 0;
        T* oi = out + static_cast<size_t>(i) * stride;
        std::fill(oi, oi + dk, T(0));
        for (int j = 0; j <= i; ++j) {
            const T p = prow[j];
            const T* vj = v + static_cast<size_t>(j) * stride;
            for (int c = 0; c < dk; ++c) oi[c] += p * vj[c];
        }
    }
}

// Backward of attention_head_forward. dq/dk/dv are accumulated (+=) on the
// same strided layout; dout is the gradient of `out`.
template <class T>
void attention_head_backward(const T* q, const T* k, const T* v, const T* probs, const T* dout,
                             T* dq, T* dk_out, T* dv, int seq, int dk, int stride, T scale,
                             T* dprobs_row /* scratch of size seq */) {
    for (int i = 0; i < seq; ++i) {
        const T* prow = probs + static_cast<size_t>(i) * seq;
        const T* doi = dout + static_cast<size_t>(i) * stride;
        // dA[i,j] = dout_i . v_j ; dv_j += A[i,j] * dout_i
        T dot_pa = 0;
        for (int j = 0; j <= i; ++j) {
            const T* vj = v + static_cast<size_t>(j) * stride;
            T da = 0;
            for (int c = 0; c < dk; ++c) da += doi[c] * vj[c];
            dprobs_row[j] = da;
            dot_pa += prow[j] * da;
            T* dvj = dv + static_cast<size_t>(j) * stride;
            const T p = prow[j];
            for (int c = 0; c < dk; ++c) dvj[c] += p * doi[c];
        }
        // softmax backward, then scores -> q and k
        const T* qi = q + static_cast<size_t>(i) * stride;
        T* dqi = dq + static_cast<size_t>(i) * stride;
        for (int j = 0; j <= i; ++j) {
            const T ds = prow[j] * (dprobs_row[j] - dot_pa) * scale;
            const T* kj = k + static_cast<size_t>(j) * stride;
            T* dkj = dk_out + static_cast<size_t>(j) * stride;
            for (int c = 0; c < dk; ++c) {
                dqi[c] += ds * kj[c];
                dkj[c] += ds * qi[c];
            }
        }
    }
}

// Row-wise softmax, numerically stable.
template <class T>
void softmax_rows(const T* x, T* y, int rows, int n) {
#pragma omp parallel for schedule(static)
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

}  // namespace actigen::kernels
