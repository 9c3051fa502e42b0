#pragma once

// Dense linear-algebra kernels behind the actor-critic network.
//
// Every kernel exists twice: a serial reference and an OpenMP version that
// splits the outermost independent loop across threads. Each output element
// is produced by exactly one thread with the same summation order as the
// reference, so both paths agree bit for bit.

#include <cstddef>
#include <span>

namespace pdda::kernels {

enum class Exec { Serial, Parallel };

// Work below this many multiply-adds stays on the calling thread.
inline constexpr std::size_t kParallelThreshold = 1 << 15;

// Denormal floats slow training several times over once small gradients
// accumulate. Sets flush-to-zero and denormals-are-zero on the calling thread
// and its OpenMP team, once per thread. No-op off x86.
void flush_denormals();

struct ConvGeometry {
    int in_c = 1;
    int in_h = 0;
    int in_w = 0;
    int out_c = 0;
    int kernel = 0;
    int stride = 1;

    int out_h() const { return (in_h - kernel) / stride + 1; }
    int out_w() const { return (in_w - kernel) / stride + 1; }
    int positions() const { return out_h() * out_w(); }
    int patch() const { return in_c * kernel * kernel; }
    bool valid() const { return in_c > 0 && out_c > 0 && kernel > 0 && stride > 0 && in_h >= kernel && in_w >= kernel; }
};

// Eight fixed lanes combined pairwise: the summation order is part of the
// source, so every call site rounds identically however it is vectorized.
template <class T>
inline T dot(const T* a, const T* b, int n) {
    T lane[8] = {};
    int i = 0;
    for (; i + 8 <= n; i += 8)
        for (int l = 0; l < 8; ++l) lane[l] += a[i + l] * b[i + l];
    T tail = 0;
    for (; i < n; ++i) tail += a[i] * b[i];
    return ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7])) + tail;
}

template <class T>
inline void axpy(T alpha, const T* x, T* y, int n) {
#pragma omp simd
    for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// cols[pos][c][ky][kx] = in[c][pos_y*stride + ky][pos_x*stride + kx]
template <class T>
void im2col(const ConvGeometry& g, const T* in, T* cols) {
    const int ow = g.out_w(), oh = g.out_h(), k = g.kernel;
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            T* dst = cols + static_cast<std::size_t>(oy * ow + ox) * g.patch();
            for (int c = 0; c < g.in_c; ++c)
                for (int ky = 0; ky < k; ++ky) {
                    const T* src = in + (static_cast<std::size_t>(c) * g.in_h + oy * g.stride + ky) * g.in_w + ox * g.stride;
                    for (int kx = 0; kx < k; ++kx) *dst++ = src[kx];
                }
        }
}

// Scatter-adds column gradients back onto the input gradient.
template <class T>
void col2im_add(const ConvGeometry& g, const T* cols, T* in_grad) {
    const int ow = g.out_w(), oh = g.out_h(), k = g.kernel;
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            const T* src = cols + static_cast<std::size_t>(oy * ow + ox) * g.patch();
            for (int c = 0; c < g.in_c; ++c)
                for (int ky = 0; ky < k; ++ky) {
                    T* dst = in_grad + (static_cast<std::size_t>(c) * g.in_h + oy * g.stride + ky) * g.in_w + ox * g.stride;
                    for (int kx = 0; kx < k; ++kx) dst[kx] += *src++;
                }
        }
}

namespace serial {

// c[i][j] = bias[i] + sum_k a[i][k] * b[j][k]
template <class T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, const T* bias, T* c) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            c[static_cast<std::size_t>(i) * n + j] = (bias ? bias[i] : T(0)) + dot(a + static_cast<std::size_t>(i) * k, b + static_cast<std::size_t>(j) * k, k);
}

// acc[i][k] += sum_j g[i][j] * b[j][k]; bias_acc[i] += sum_j g[i][j]
template <class T>
void gemm_nn_acc(int m, int n, int k, const T* g, const T* b, T* acc, T* bias_acc) {
    for (int i = 0; i < m; ++i) {
        const T* gi = g + static_cast<std::size_t>(i) * n;
        T* row = acc + static_cast<std::size_t>(i) * k;
        T bsum = 0;
        for (int j = 0; j < n; ++j) {
            if (gi[j] != T(0)) axpy(gi[j], b + static_cast<std::size_t>(j) * k, row, k);
            bsum += gi[j];
        }
        if (bias_acc) bias_acc[i] += bsum;
    }
}

// out[j][k] = sum_i g[i][j] * w[i][k]
template <class T>
void gemm_tn(int m, int n, int k, const T* g, const T* w, T* out) {
    for (int j = 0; j < n; ++j) {
        T* row = out + static_cast<std::size_t>(j) * k;
        for (int x = 0; x < k; ++x) row[x] = 0;
        for (int i = 0; i < m; ++i) {
            const T gij = g[static_cast<std::size_t>(i) * n + j];
            if (gij != T(0)) axpy(gij, w + static_cast<std::size_t>(i) * k, row, k);
        }
    }
}

}  // namespace serial

namespace parallel {

template <class T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, const T* bias, T* c) {
    const bool big = static_cast<std::size_t>(m) * n * k >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            c[static_cast<std::size_t>(i) * n + j] = (bias ? bias[i] : T(0)) + dot(a + static_cast<std::size_t>(i) * k, b + static_cast<std::size_t>(j) * k, k);
}

template <class T>
void gemm_nn_acc(int m, int n, int k, const T* g, const T* b, T* acc, T* bias_acc) {
    const bool big = static_cast<std::size_t>(m) * n * k >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
    for (int i = 0; i < m; ++i) {
        const T* gi = g + static_cast<std::size_t>(i) * n;
        T* row = acc + static_cast<std::size_t>(i) * k;
        T bsum = 0;
        for (int j = 0; j < n; ++j) {
            if (gi[j] != T(0)) axpy(gi[j], b + static_cast<std::size_t>(j) * k, row, k);
            bsum += gi[j];
        }
        if (bias_acc) bias_acc[i] += bsum;
    }
}

template <class T>
void gemm_tn(int m, int n, int k, const T* g, const T* w, T* out) {
    const bool big = static_cast<std::size_t>(m) * n * k >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
    for (int j = 0; j < n; ++j) {
        T* row = out + static_cast<std::size_t>(j) * k;
        for (int x = 0; x < k; ++x) row[x] = 0;
        for (int i = 0; i < m; ++i) {
            const T gij = g[static_cast<std::size_t>(i) * n + j];
            if (gij != T(0)) axpy(gij, w + static_cast<std::size_t>(i) * k, row, k);
        }
    }
}

}  // namespace parallel

template <class T>
void gemm_nt(Exec e, int m, int n, int k, const T* a, const T* b, const T* bias, T* c) {
    e == Exec::Serial ? serial::gemm_nt(m, n, k, a, b, bias, c) : parallel::gemm_nt(m, n, k, a, b, bias, c);
}

template <class T>
void gemm_nn_acc(Exec e, int m, int n, int k, const T* g, const T* b, T* acc, T* bias_acc) {
    e == Exec::Serial ? serial::gemm_nn_acc(m, n, k, g, b, acc, bias_acc)
                      : parallel::gemm_nn_acc(m, n, k, g, b, acc, bias_acc);
}

template <class T>
void gemm_tn(Exec e, int m, int n, int k, const T* g, const T* w, T* out) {
    e == Exec::Serial ? serial::gemm_tn(m, n, k, g, w, out) : parallel::gemm_tn(m, n, k, g, w, out);
}

}  // namespace pdda::kernels
