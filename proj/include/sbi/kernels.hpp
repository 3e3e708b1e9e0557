#pragma once

// Dense row-major GEMM kernels.
//
// Every kernel has a serial reference in `serial::` and an OpenMP version in
// `omp::`. Both call the same per-row routines, and the OpenMP versions only
// partition output rows across threads, so results are bit-identical to the
// serial path regardless of thread count.

#include <cstddef>

namespace sbi::kernels {

// C[m,n] += A[m,k] * B[k,n]
template <class T>
inline void gemm_nn_rows(std::size_t row_begin, std::size_t row_end, std::size_t n, std::size_t k,
                         const T* a, const T* b, T* c) {
  for (std::size_t i = row_begin; i < row_end; ++i) {
    T* ci = c + i * n;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = ai[p];
      if (aip == T(0)) continue;
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <class T>
inline void gemm_nt_rows(std::size_t row_begin, std::size_t row_end, std::size_t n, std::size_t k,
                         const T* a, const T* b, T* c) {
  for (std::size_t i = row_begin; i < row_end; ++i) {
    const T* ai = a + i * k;
    T* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T* bj = b + j * k;
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]; rows of C are indexed by p in [row_begin, row_end).
template <class T>
inline void gemm_tn_rows(std::size_t row_begin, std::size_t row_end, std::size_t m, std::size_t n,
                         std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t p = row_begin; p < row_end; ++p) {
    T* cp = c + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T aip = a[i * k + p];
      if (aip == T(0)) continue;
      const T* bi = b + i * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

namespace serial {

template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  gemm_nn_rows(0, m, n, k, a, b, c);
}

template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  gemm_nt_rows(0, m, n, k, a, b, c);
}

template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  gemm_tn_rows(0, k, m, n, k, a, b, c);
}

}  // namespace serial

namespace omp {

// Below this many multiply-adds the OpenMP kernels fall through to the serial path.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

}  // namespace omp

/// Number of threads the OpenMP kernels will use (1 when built without OpenMP).
int max_threads();

}  // namespace sbi::kernels
