#include <gtest/gtest.h>

#include <random>

#include "eigenprecode/linalg.hpp"
#include "helpers.hpp"

using namespace eigenprecode;
using namespace eigenprecode::linalg;
using namespace testing_support;

namespace {

CMatrix diag(std::initializer_list<double> d) {
  CMatrix m = CMatrix::Zero(static_cast<Eigen::Index>(d.size()), static_cast<Eigen::Index>(d.size()));
  Eigen::Index i = 0;
  for (double v : d) {
    m(i, i) = v;
    ++i;
  }
  return m;
}

LinearOperator dense_op(const CMatrix& a) {
  return [a](const CVector& x) { return CVector(a * x); };
}

}  // namespace

TEST(HermitianSolve, IdentityReturnsRhs) {
  CVector b(3);
  b << cdouble(1, 0), cdouble(0, 2), cdouble(-1, 0);
  const CVector x = hermitian_solve(CMatrix::Identity(3, 3), b);
  EXPECT_LT((x - b).norm(), 1e-15);
}

TEST(HermitianSolve, Diagonal) {
  CVector b(2);
  b << 2.0, 4.0;
  const CVector x = hermitian_solve(diag({2, 4}), b);
  EXPECT_NEAR(std::abs(x[0] - 1.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(x[1] - 1.0), 0.0, 1e-15);
}

TEST(HermitianSolve, MatchesGaussianEliminationOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const CMatrix a = random_hpd(8, rng);
    const CVector b = random_vector(8, rng);
    const CVector x = hermitian_solve(a, b);
    const CVector ref = naive_solve(a, b);
    EXPECT_LT((x - ref).norm() / ref.norm(), 1e-10);
    EXPECT_LT((a * x - b).norm() / b.norm(), 1e-10);
  }
}

TEST(HermitianSolve, ResidualUpToDimension128) {
  std::mt19937_64 rng(12);
  for (Eigen::Index n : {1, 2, 5, 16, 33, 64, 128}) {
    const CMatrix a = random_hpd(n, rng, 0.1);
    const CVector b = random_vector(n, rng);
    const CVector x = hermitian_solve(a, b);
    EXPECT_LE((a * x - b).norm() / b.norm(), 1e-10) << "n = " << n;
  }
}

TEST(HermitianSolve, Errors) {
  CMatrix nh = diag({1, 1});
  nh(0, 1) = 0.5;
  try {
    hermitian_solve(nh, CVector::Ones(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotHermitian);
  }
  try {
    hermitian_solve(diag({1, -1}), CVector::Ones(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotPositiveDefinite);
  }
  try {
    hermitian_solve(diag({1, 1}), CVector::Ones(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(ConjugateGradient, IdentityConvergesInOneIteration) {
  std::mt19937_64 rng(1);
  const CVector b = random_vector(6, rng);
  const CgResult r = conjugate_gradient(dense_op(CMatrix::Identity(6, 6)), b, 1e-12, 10);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_LT((r.x - b).norm(), 1e-14);
}

TEST(ConjugateGradient, DiagonalInverse) {
  CVector b(2);
  b << 1.0, 1.0;
  const CgResult r = conjugate_gradient(dense_op(diag({1, 10})), b, 1e-12, 10);
  EXPECT_NEAR(r.x[0].real(), 1.0, 1e-12);
  EXPECT_NEAR(r.x[1].real(), 0.1, 1e-12);
}

TEST(ConjugateGradient, MatchesDirectSolve) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const CMatrix a = random_hpd(16, rng);
    const CVector b = random_vector(16, rng);
    const CgResult r = conjugate_gradient(dense_op(a), b, 1e-12, 48);
    const CVector direct = hermitian_solve(a, b);
    EXPECT_LE((r.x - direct).norm() / direct.norm(), 1e-8);
  }
}

TEST(ConjugateGradient, ConvergesWithinThreeN) {
  std::mt19937_64 rng(3);
  for (Eigen::Index n : {4, 16, 40}) {
    const CMatrix a = random_hpd(n, rng, 0.05);
    const CVector b = random_vector(n, rng);
    const CgResult r = conjugate_gradient(dense_op(a), b, 1e-10, static_cast<int>(3 * n));
    EXPECT_LE(r.residual, 1e-10 * b.norm());
    EXPECT_LE(r.iterations, 3 * n);
  }
}

TEST(ConjugateGradient, NonConvergenceCarriesBestIterate) {
  std::mt19937_64 rng(4);
  const CMatrix a = random_hpd(30, rng, 0.01);
  const CVector b = random_vector(30, rng);
  try {
    conjugate_gradient(dense_op(a), b, 1e-14, 2);
    FAIL() << "expected MaxIterExceeded";
  } catch (const CgNotConverged& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MaxIterExceeded);
    EXPECT_EQ(e.best().size(), 30);
    EXPECT_NEAR(e.residual(), (a * e.best() - b).norm(), 1e-8 * b.norm());
    EXPECT_LE(e.residual(), b.norm());
  }
}

TEST(GeneralizedEigen, DiagonalPair) {
  for (auto strategy : {EigenStrategy::Dense, EigenStrategy::MatrixFree}) {
    const EigenPair p = max_generalized_eigenpair(diag({4, 1}), diag({2, 1}), kEigenTol, strategy);
    EXPECT_NEAR(p.value, 2.0, 1e-8);
    EXPECT_NEAR(std::abs(p.vector[0]), 1.0, 1e-8);
    EXPECT_NEAR(p.vector[0].imag(), 0.0, 1e-12);
    EXPECT_GT(p.vector[0].real(), 0.0);
  }
}

TEST(GeneralizedEigen, IdentityPairAcceptedByResidual) {
  const CMatrix i3 = CMatrix::Identity(3, 3);
  const EigenPair p = max_generalized_eigenpair(i3, i3);
  EXPECT_NEAR(p.value, 1.0, 1e-10);
  EXPECT_NEAR(p.vector.norm(), 1.0, 1e-12);
  EXPECT_LE((i3 * p.vector - p.value * i3 * p.vector).norm(), 1e-8);
}

TEST(GeneralizedEigen, MatchesDenseOracleAndDominatesEveryEigenvalue) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const CMatrix s = random_psd(12, 1 + trial % 12, rng);
    const CMatrix n = random_hpd(12, rng);
    const auto oracle = oracle_generalized_eigs(s, n);
    for (auto strategy : {EigenStrategy::Dense, EigenStrategy::MatrixFree}) {
      const EigenPair p = max_generalized_eigenpair(s, n, kEigenTol, strategy);
      EXPECT_NEAR(p.value, oracle.front().value, 1e-8 * std::max(1.0, oracle.front().value));
      for (const auto& o : oracle) EXPECT_GE(p.value, o.value - kEigenTol * std::max(1.0, o.value));
      EXPECT_NEAR(p.vector.norm(), 1.0, 1e-12);
      EXPECT_LE((s * p.vector - p.value * n * p.vector).norm(), kEigenTol * (s * p.vector).norm() * 10);
    }
  }
}

TEST(GeneralizedEigen, StrategiesAgreeOnDirection) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const CMatrix s = random_psd(16, 3, rng);
    const CMatrix n = random_hpd(16, rng);
    const EigenPair d = max_generalized_eigenpair(s, n, kEigenTol, EigenStrategy::Dense);
    const EigenPair m = max_generalized_eigenpair(s, n, kEigenTol, EigenStrategy::MatrixFree);
    EXPECT_GE(cosine_similarity(d.vector, m.vector), 1.0 - 1e-8);
  }
}

TEST(GeneralizedEigen, MatrixFreeRestartsBeyondTheBasisLimit) {
  std::mt19937_64 rng(9);
  for (Eigen::Index dim : {48, 80}) {
    const CMatrix s = random_psd(dim, dim, rng);
    const CMatrix n = random_hpd(dim, rng);
    const auto oracle = oracle_generalized_eigs(s, n);
    const EigenPair m = max_generalized_eigenpair(s, n, kEigenTol, EigenStrategy::MatrixFree);
    EXPECT_NEAR(m.value, oracle.front().value, 1e-8 * oracle.front().value) << "dim " << dim;
    EXPECT_GE(cosine_similarity(m.vector, oracle.front().vector), 1.0 - 1e-8) << "dim " << dim;
  }
}

TEST(GeneralizedEigen, PhaseConventionIsDeterministic) {
  std::mt19937_64 rng(7);
  const CMatrix s = random_psd(10, 4, rng);
  const CMatrix n = random_hpd(10, rng);
  for (auto strategy : {EigenStrategy::Dense, EigenStrategy::MatrixFree}) {
    const EigenPair a = max_generalized_eigenpair(s, n, kEigenTol, strategy);
    const EigenPair b = max_generalized_eigenpair(s, n, kEigenTol, strategy);
    EXPECT_EQ(a.value, b.value);
    for (Eigen::Index i = 0; i < a.vector.size(); ++i) EXPECT_EQ(a.vector[i], b.vector[i]);
    Eigen::Index first = 0;
    while (std::abs(a.vector[first]) <= 1e-8 * a.vector.cwiseAbs().maxCoeff()) ++first;
    EXPECT_EQ(a.vector[first].imag(), 0.0);
    EXPECT_GT(a.vector[first].real(), 0.0);
  }
}

TEST(GeneralizedEigen, ZeroSReturnsFirstUnitVector) {
  const EigenPair p = max_generalized_eigenpair(CMatrix::Zero(4, 4), CMatrix::Identity(4, 4));
  EXPECT_EQ(p.value, 0.0);
  EXPECT_EQ(p.vector, CVector::Unit(4, 0));
}

TEST(GeneralizedEigen, SingularNIsReported) {
  for (auto strategy : {EigenStrategy::Dense, EigenStrategy::MatrixFree}) {
    try {
      max_generalized_eigenpair(diag({1, 1}), diag({1, -1}), kEigenTol, strategy);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::SingularN);
    }
  }
}

TEST(Kron, MatchesDefinition) {
  std::mt19937_64 rng(8);
  const CMatrix a = random_complex(2, 3, rng);
  const CMatrix b = random_complex(3, 2, rng);
  const CMatrix k = kron(a, b);
  ASSERT_EQ(k.rows(), 6);
  ASSERT_EQ(k.cols(), 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) EXPECT_EQ(k(i, j), a(i / 3, j / 2) * b(i % 3, j % 2));
}
