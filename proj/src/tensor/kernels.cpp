#include "sbi/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sbi::kernels {

namespace omp {

template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  if (m * n * k < kParallelThreshold || m < 2) {
    serial::gemm_nn(m, n, k, a, b, c);
    return;
  }
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    gemm_nn_rows(r, r + 1, n, k, a, b, c);
  }
}

template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  if (m * n * k < kParallelThreshold || m < 2) {
    serial::gemm_nt(m, n, k, a, b, c);
    return;
  }
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    gemm_nt_rows(r, r + 1, n, k, a, b, c);
  }
}

template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  if (m * n * k < kParallelThreshold || k < 2) {
    serial::gemm_tn(m, n, k, a, b, c);
    return;
  }
  const auto rows = static_cast<long long>(k);
#pragma omp parallel for schedule(static)
  for (long long p = 0; p < rows; ++p) {
    const auto r = static_cast<std::size_t>(p);
    gemm_tn_rows(r, r + 1, m, n, k, a, b, c);
  }
}

template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void gemm_nt<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_nt<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void gemm_tn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_tn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);

}  // namespace omp

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace sbi::kernels
