#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qfield/linalg.hpp"

using namespace qfield;

namespace {

Matrix random_symmetric(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) m(i, j) = m(j, i) = g(rng);
  return m;
}

}  // namespace

TEST(Jacobi, ReconstructsRandomSymmetricMatrices) {
  std::mt19937_64 rng(7);
  for (std::size_t n : {1u, 2u, 5u, 12u}) {
    const Matrix a = random_symmetric(n, rng);
    const auto ed = jacobi_eigen(a);
    for (std::size_t k = 0; k + 1 < n; ++k) EXPECT_LE(ed.values[k], ed.values[k + 1]);
    const Matrix vtv = ed.vectors.transposed() * ed.vectors;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(vtv(i, j), i == j ? 1.0 : 0.0, 1e-13);
    const Matrix av = a * ed.vectors;
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t r = 0; r < n; ++r) EXPECT_NEAR(av(r, k), ed.values[k] * ed.vectors(r, k), 1e-12);
  }
}

TEST(Jacobi, TwoByTwoClosedForm) {
  Matrix a(2, 2);
  a(0, 0) = 3, a(1, 1) = -1, a(0, 1) = a(1, 0) = 2;
  const auto ed = jacobi_eigen(a);
  EXPECT_NEAR(ed.values[0], 1.0 - std::sqrt(8.0), 1e-14);
  EXPECT_NEAR(ed.values[1], 1.0 + std::sqrt(8.0), 1e-14);
}

TEST(SpdInverse, InvertsAndRejectsIndefinite) {
  std::mt19937_64 rng(3);
  const Matrix b = random_symmetric(6, rng);
  Matrix spd = b * b.transposed();
  for (std::size_t i = 0; i < 6; ++i) spd(i, i) += 1.0;
  const auto inv = spd_inverse(spd);
  ASSERT_TRUE(inv);
  const Matrix id = spd * *inv;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(id(i, j), i == j ? 1.0 : 0.0, 1e-11);
  Matrix bad = Matrix::identity(2);
  bad(1, 1) = -1.0;
  EXPECT_FALSE(spd_inverse(bad));
}

TEST(GaussLegendre, ExactForPolynomialsUpToDegree2nMinus1) {
  for (int n : {1, 2, 5, 12, 24}) {
    const auto q = gauss_legendre(n);
    double wsum = 0.0;
    for (double w : q.weights) wsum += w;
    EXPECT_NEAR(wsum, 2.0, 1e-14);
    for (int deg = 0; deg <= 2 * n - 1; ++deg) {
      double s = 0.0;
      for (std::size_t k = 0; k < q.nodes.size(); ++k) s += q.weights[k] * std::pow(q.nodes[k], deg);
      const double exact = deg % 2 ? 0.0 : 2.0 / (deg + 1);
      EXPECT_NEAR(s, exact, 1e-13) << "n=" << n << " deg=" << deg;
    }
  }
}
