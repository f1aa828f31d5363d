#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "smt/numerics.hpp"

namespace {

using smt::ErrorKind;
using smt::Matrix;
using smt::Vector;

double frob_rel_reconstruction(const Matrix& m, const smt::SymEigResult& r) {
  const Matrix rebuilt = r.eigenvectors * r.eigenvalues.asDiagonal() * r.eigenvectors.transpose();
  return (m - rebuilt).norm() / std::max(1e-300, m.norm());
}

TEST(SymEig, DiagonalIsSortedAscending) {
  Matrix m(2, 2);
  m << 2, 0, 0, 1;
  const auto r = smt::sym_eig(m);
  EXPECT_DOUBLE_EQ(r.eigenvalues[0], 1.0);
  EXPECT_DOUBLE_EQ(r.eigenvalues[1], 2.0);
  EXPECT_NEAR(std::abs(r.eigenvectors(1, 0)), 1.0, 1e-15);
  EXPECT_NEAR(std::abs(r.eigenvectors(0, 1)), 1.0, 1e-15);
}

TEST(SymEig, Identity) {
  const auto r = smt::sym_eig(Matrix::Identity(3, 3));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(r.eigenvalues[i], 1.0, 1e-15);
  EXPECT_LE((r.eigenvectors.transpose() * r.eigenvectors - Matrix::Identity(3, 3)).norm(), 1e-10);
}

TEST(SymEig, MatchesCharacteristicPolynomialRoots) {
  std::mt19937_64 rng(20240601);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix m = smt::oracle::random_symmetric(6, rng);
    const auto roots = smt::oracle::char_poly_roots(m);
    ASSERT_EQ(roots.size(), 6u) << "oracle failed to bracket all roots";
    const auto r = smt::sym_eig(m);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(r.eigenvalues[i], roots[static_cast<std::size_t>(i)], 1e-8);
  }
}

TEST(SymEig, ReconstructionAndOrthogonalityProperty) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const smt::Index n = 1 + static_cast<smt::Index>(rng() % 40);
    const Matrix m = smt::oracle::random_symmetric(n, rng);
    const auto r = smt::sym_eig(m);
    EXPECT_LE(frob_rel_reconstruction(m, r), 1e-8);
    EXPECT_LE((r.eigenvectors.transpose() * r.eigenvectors - Matrix::Identity(n, n)).norm(), 1e-10);
    for (smt::Index i = 1; i < n; ++i) EXPECT_LE(r.eigenvalues[i - 1], r.eigenvalues[i]);
  }
}

TEST(SymEig, DegenerateSpectra) {
  // Repeated eigenvalues and a rank-one matrix.
  Vector u = Vector::LinSpaced(30, -1.0, 2.0);
  const Matrix rank_one = u * u.transpose();
  const auto r = smt::sym_eig(rank_one);
  EXPECT_LE(frob_rel_reconstruction(rank_one, r), 1e-8);
  EXPECT_NEAR(r.eigenvalues[29], u.squaredNorm(), 1e-10 * u.squaredNorm());
  const auto z = smt::sym_eig(Matrix::Zero(5, 5));
  EXPECT_EQ(z.eigenvalues.cwiseAbs().maxCoeff(), 0.0);
}

TEST(SymEig, Errors) {
  Matrix asym(2, 2);
  asym << 1, 2, 0, 1;
  try {
    smt::sym_eig(asym);
    FAIL();
  } catch (const smt::Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonSymmetric);
  }
  Matrix nan = Matrix::Identity(2, 2);
  nan(0, 0) = std::nan("");
  try {
    smt::sym_eig(nan);
    FAIL();
  } catch (const smt::Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFinite);
  }
}

TEST(InvSqrt, DiagonalAndIdentity) {
  Matrix d(2, 2);
  d << 4, 0, 0, 9;
  const Matrix s = smt::inv_sqrt(d);
  EXPECT_NEAR(s(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(s(1, 1), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(s(0, 1), 0.0, 1e-15);
  EXPECT_LE((smt::inv_sqrt(Matrix::Identity(4, 4)) - Matrix::Identity(4, 4)).norm(), 1e-14);
}

TEST(InvSqrt, DefiningIdentityOnRandomPsd) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix b = smt::oracle::random_matrix(5, 8, rng);
    const Matrix m = b * b.transpose();
    const Matrix s = smt::inv_sqrt(m);
    EXPECT_LE((s * m * s - Matrix::Identity(5, 5)).norm(), 1e-7 * 5);
    EXPECT_LE((s - s.transpose()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(InvSqrt, RidgeAndNotPositiveDefinite) {
  Matrix singular = Matrix::Zero(3, 3);
  singular(0, 0) = 1.0;
  try {
    smt::inv_sqrt(singular);
    FAIL();
  } catch (const smt::Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotPositiveDefinite);
  }
  const Matrix s = smt::inv_sqrt(singular, 0.25);
  Matrix reg = singular;
  reg.diagonal().array() += 0.25;
  EXPECT_LE((s * reg * s - Matrix::Identity(3, 3)).norm(), 1e-7 * 3);
}

TEST(SecondMoment, ConstantColumn) {
  Matrix a(2, 2);
  a << 1, 1, 0, 0;
  const auto v = smt::second_moment(a, 0.0, false);
  Matrix expected(2, 2);
  expected << 1, 0, 0, 0;
  EXPECT_EQ(v.matrix, expected);
  EXPECT_EQ(v.sample_count, 2u);
}

TEST(SecondMoment, IdentityWithRidge) {
  const auto v = smt::second_moment(Matrix::Identity(2, 2), 0.1, false);
  EXPECT_NEAR(v.matrix(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(v.matrix(1, 1), 0.6, 1e-15);
  EXPECT_EQ(v.matrix(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(v.ridge, 0.1);
}

TEST(SecondMoment, MatchesTwoPassOracle) {
  std::mt19937_64 rng(3);
  const Matrix a = smt::oracle::random_matrix(4, 50, rng);
  for (bool center : {false, true}) {
    const auto v = smt::second_moment(a, 0.0, center);
    EXPECT_LE((v.matrix - smt::oracle::two_pass_moment(a, center)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SecondMoment, IsPsdAndShardsMerge) {
  std::mt19937_64 rng(5);
  const Matrix a = smt::oracle::random_matrix(6, 3, rng, 0.0, 1.0);  // rank deficient
  const auto v = smt::second_moment(a, 1e-3, false);
  EXPECT_LE((v.matrix - v.matrix.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GE(smt::sym_eig(v.matrix).eigenvalues[0], 1e-3 - 1e-12);

  smt::MomentAccumulator left(6), right(6), whole(6);
  const Matrix b = smt::oracle::random_matrix(6, 40, rng);
  left.add_columns(b.leftCols(15));
  right.add_columns(b.rightCols(25));
  whole.add_columns(b);
  left.merge(right);
  EXPECT_LE((left.finish(0.0, true).matrix - whole.finish(0.0, true).matrix).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SecondMoment, DefaultRidgeAndEmpty) {
  const auto v = smt::second_moment(Matrix::Identity(4, 4) * 2.0, -1.0, false);
  EXPECT_NEAR(v.ridge, 1e-6, 1e-18);  // (1/4)(2I)(2I)^T = I
  try {
    smt::second_moment(Matrix(3, 0));
    FAIL();
  } catch (const smt::Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyBatch);
  }
}

}  // namespace
