#pragma once

#include <atomic>
#include <cstdint>

#include "vmonarch/mat.hpp"

namespace vmonarch {

// Global multiply-accumulate counter. Every matmul kernel below adds its MAC
// count once per call, so instrumented runs report exact counts at negligible
// cost. Elementwise work (softmax, exp, scaling) is not counted, matching the
// FLOPs convention used by the cost estimators.
namespace macs {

inline std::atomic<std::uint64_t> g_count{0};

inline void reset() { g_count.store(0, std::memory_order_relaxed); }
inline std::uint64_t total() { return g_count.load(std::memory_order_relaxed); }
inline void add(std::uint64_t n) { g_count.fetch_add(n, std::memory_order_relaxed); }

}  // namespace macs

// C (M x N) = A (M x K) * B (N x K)^T, optionally accumulating into C.
// The shared inner dimension is contiguous in both operands.
template <class T>
void gemm_nt(idx M, idx N, idx K, const T* A, idx lda, const T* B, idx ldb,
             T* C, idx ldc, bool accumulate = false) {
    macs::add(static_cast<std::uint64_t>(M) * N * K);
    for (idx i = 0; i < M; ++i) {
        const T* a = A + i * lda;
        T* c = C + i * ldc;
        for (idx j = 0; j < N; ++j) {
            const T* b = B + j * ldb;
            T acc = T(0);
            for (idx k = 0; k < K; ++k) acc += a[k] * b[k];
            c[j] = accumulate ? c[j] + acc : acc;
        }
    }
}

// C (M x N) = A (M x K) * B (K x N), optionally accumulating into C.
template <class T>
void gemm_nn(idx M, idx N, idx K, const T* A, idx lda, const T* B, idx ldb,
             T* C, idx ldc, bool accumulate = false) {
    macs::add(static_cast<std::uint64_t>(M) * N * K);
    for (idx i = 0; i < M; ++i) {
        T* c = C + i * ldc;
        if (!accumulate)
            for (idx j = 0; j < N; ++j) c[j] = T(0);
        const T* a = A + i * lda;
        for (idx k = 0; k < K; ++k) {
            const T aik = a[k];
            const T* b = B + k * ldb;
            for (idx j = 0; j < N; ++j) c[j] += aik * b[j];
        }
    }
}

// C (M x N) = A (K x M)^T * B (K x N), optionally accumulating into C.
template <class T>
void gemm_tn(idx M, idx N, idx K, const T* A, idx lda, const T* B, idx ldb,
             T* C, idx ldc, bool accumulate = false) {
    macs::add(static_cast<std::uint64_t>(M) * N * K);
    if (!accumulate)
        for (idx i = 0; i < M; ++i) {
            T* c = C + i * ldc;
            for (idx j = 0; j < N; ++j) c[j] = T(0);
        }
    for (idx k = 0; k < K; ++k) {
        const T* a = A + k * lda;
        const T* b = B + k * ldb;
        for (idx i = 0; i < M; ++i) {
            const T aki = a[i];
            T* c = C + i * ldc;
            for (idx j = 0; j < N; ++j) c[j] += aki * b[j];
        }
    }
}

}  // namespace vmonarch
