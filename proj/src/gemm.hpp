#pragma once

#include <algorithm>
#include <cstring>

// Small blocked float32 matrix kernels backing conv2d and linear. All three
// variants accumulate into C (callers zero-fill first when needed) with a
// fixed summation order, so results are independent of threading decisions
// made above them.
namespace ssldetect::detail {

// C[M,N] += A[M,K] * B[K,N]
inline void gemm_nn(int M, int N, int K, const float* A, const float* B, float* C) {
    constexpr int MR = 4;
    constexpr int NR = 16;
    int n0 = 0;
    for (; n0 + NR <= N; n0 += NR) {
        int m0 = 0;
        for (; m0 + MR <= M; m0 += MR) {
            float acc[MR][NR] = {};
            const float* a0 = A + (m0 + 0) * K;
            const float* a1 = A + (m0 + 1) * K;
            const float* a2 = A + (m0 + 2) * K;
            const float* a3 = A + (m0 + 3) * K;
            for (int k = 0; k < K; ++k) {
                const float* b = B + static_cast<long>(k) * N + n0;
                float v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
                for (int j = 0; j < NR; ++j) {
                    float bj = b[j];
                    acc[0][j] += v0 * bj;
                    acc[1][j] += v1 * bj;
                    acc[2][j] += v2 * bj;
                    acc[3][j] += v3 * bj;
                }
            }
            for (int r = 0; r < MR; ++r) {
                float* c = C + static_cast<long>(m0 + r) * N + n0;
                for (int j = 0; j < NR; ++j) c[j] += acc[r][j];
            }
        }
        for (; m0 < M; ++m0) {
            float acc[NR] = {};
            const float* a = A + static_cast<long>(m0) * K;
            for (int k = 0; k < K; ++k) {
                const float* b = B + static_cast<long>(k) * N + n0;
                float v = a[k];
                for (int j = 0; j < NR; ++j) acc[j] += v * b[j];
            }
            float* c = C + static_cast<long>(m0) * N + n0;
            for (int j = 0; j < NR; ++j) c[j] += acc[j];
        }
    }
    if (n0 < N) {
        int nb = N - n0;
        for (int m = 0; m < M; ++m) {
            const float* a = A + static_cast<long>(m) * K;
            float* c = C + static_cast<long>(m) * N + n0;
            for (int k = 0; k < K; ++k) {
                float v = a[k];
                const float* b = B + static_cast<long>(k) * N + n0;
                for (int j = 0; j < nb; ++j) c[j] += v * b[j];
            }
        }
    }
}

// C[M,N] += A[M,K] * B[N,K]^T  (rows of A dotted with rows of B).
// Dot products run in 16 independent lanes folded at the end; the lane split
// depends only on K, so results stay deterministic.
inline void gemm_nt(int M, int N, int K, const float* A, const float* B, float* C) {
    constexpr int L = 16;
    int k_main = K - K % L;
    for (int m = 0; m < M; ++m) {
        const float* a = A + static_cast<long>(m) * K;
        float* c = C + static_cast<long>(m) * N;
        int n = 0;
        for (; n + 4 <= N; n += 4) {
            const float* b0 = B + static_cast<long>(n + 0) * K;
            const float* b1 = B + static_cast<long>(n + 1) * K;
            const float* b2 = B + static_cast<long>(n + 2) * K;
            const float* b3 = B + static_cast<long>(n + 3) * K;
            float s0[L] = {}, s1[L] = {}, s2[L] = {}, s3[L] = {};
            for (int k = 0; k < k_main; k += L) {
                for (int j = 0; j < L; ++j) {
                    float av = a[k + j];
                    s0[j] += av * b0[k + j];
                    s1[j] += av * b1[k + j];
                    s2[j] += av * b2[k + j];
                    s3[j] += av * b3[k + j];
                }
            }
            float t0 = 0, t1 = 0, t2 = 0, t3 = 0;
            for (int j = 0; j < L; ++j) {
                t0 += s0[j];
                t1 += s1[j];
                t2 += s2[j];
                t3 += s3[j];
            }
            for (int k = k_main; k < K; ++k) {
                float av = a[k];
                t0 += av * b0[k];
                t1 += av * b1[k];
                t2 += av * b2[k];
                t3 += av * b3[k];
            }
            c[n + 0] += t0;
            c[n + 1] += t1;
            c[n + 2] += t2;
            c[n + 3] += t3;
        }
        for (; n < N; ++n) {
            const float* b = B + static_cast<long>(n) * K;
            float s[L] = {};
            for (int k = 0; k < k_main; k += L) {
                for (int j = 0; j < L; ++j) s[j] += a[k + j] * b[k + j];
            }
            float t = 0;
            for (int j = 0; j < L; ++j) t += s[j];
            for (int k = k_main; k < K; ++k) t += a[k] * b[k];
            c[n] += t;
        }
    }
}

// C[M,N] += A[K,M]^T * B[K,N]
inline void gemm_tn(int M, int N, int K, const float* A, const float* B, float* C) {
    for (int k = 0; k < K; ++k) {
        const float* a = A + static_cast<long>(k) * M;
        const float* b = B + static_cast<long>(k) * N;
        for (int m = 0; m < M; ++m) {
            float v = a[m];
            float* c = C + static_cast<long>(m) * N;
            for (int j = 0; j < N; ++j) c[j] += v * b[j];
        }
    }
}

} // namespace ssldetect::detail
