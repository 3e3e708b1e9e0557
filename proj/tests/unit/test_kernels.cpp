#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "sbi/kernels.hpp"

namespace {

std::vector<double> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> m(rows * cols);
  for (auto& x : m) x = dist(rng);
  return m;
}

// Plain triple loop, independent of the kernel row routines.
std::vector<double> oracle(std::size_t m, std::size_t n, std::size_t k, const std::vector<double>& a, bool ta,
                           const std::vector<double>& b, bool tb) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta ? a[p * m + i] : a[i * k + p];
        const double bv = tb ? b[j * k + p] : b[p * n + j];
        c[i * n + j] += av * bv;
      }
  return c;
}

struct Dims {
  std::size_t m, n, k;
};

class GemmTest : public ::testing::TestWithParam<Dims> {};

TEST_P(GemmTest, SerialMatchesTripleLoop) {
  const auto [m, n, k] = GetParam();
  std::mt19937_64 rng(m * 131 + n * 7 + k);
  const auto a = random_matrix(m, k, rng);
  const auto b = random_matrix(k, n, rng);
  const auto bt = random_matrix(n, k, rng);
  const auto at = random_matrix(k, m, rng);

  std::vector<double> c(m * n, 0.0);
  sbi::kernels::serial::gemm_nn(m, n, k, a.data(), b.data(), c.data());
  auto want = oracle(m, n, k, a, false, b, false);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], want[i], 1e-9);

  std::fill(c.begin(), c.end(), 0.0);
  sbi::kernels::serial::gemm_nt(m, n, k, a.data(), bt.data(), c.data());
  want = oracle(m, n, k, a, false, bt, true);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], want[i], 1e-9);

  // gemm_tn computes C[k', n] += A[m', k']^T B[m', n]; reuse with m'=k, k'=m.
  std::vector<double> b2 = random_matrix(k, n, rng);
  std::fill(c.begin(), c.end(), 0.0);
  sbi::kernels::serial::gemm_tn(k, n, m, at.data(), b2.data(), c.data());
  want = oracle(m, n, k, at, true, b2, false);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], want[i], 1e-9);
}

TEST_P(GemmTest, ParallelIsBitIdenticalToSerial) {
  const auto [m, n, k] = GetParam();
  std::mt19937_64 rng(99 + m + n + k);
  const auto a = random_matrix(m, k, rng);
  const auto b = random_matrix(k, n, rng);
  const auto bt = random_matrix(n, k, rng);

  std::vector<double> s(m * n, 0.0), p(m * n, 0.0);
  sbi::kernels::serial::gemm_nn(m, n, k, a.data(), b.data(), s.data());
  sbi::kernels::omp::gemm_nn(m, n, k, a.data(), b.data(), p.data());
  EXPECT_EQ(s, p);

  std::fill(s.begin(), s.end(), 0.0);
  std::fill(p.begin(), p.end(), 0.0);
  sbi::kernels::serial::gemm_nt(m, n, k, a.data(), bt.data(), s.data());
  sbi::kernels::omp::gemm_nt(m, n, k, a.data(), bt.data(), p.data());
  EXPECT_EQ(s, p);

  std::vector<double> st(k * n, 0.0), pt(k * n, 0.0);
  const auto b2 = random_matrix(m, n, rng);
  sbi::kernels::serial::gemm_tn(m, n, k, a.data(), b2.data(), st.data());
  sbi::kernels::omp::gemm_tn(m, n, k, a.data(), b2.data(), pt.data());
  EXPECT_EQ(st, pt);
}

INSTANTIATE_TEST_SUITE_P(Shapes, GemmTest,
                         ::testing::Values(Dims{1, 1, 1}, Dims{3, 2, 4}, Dims{7, 5, 3}, Dims{64, 48, 80},
                                           Dims{130, 70, 33}));

}  // namespace
