#include <gtest/gtest.h>

#include <random>

#include "expect_error.hpp"
#include "oracles.hpp"
#include "smt/recovery.hpp"

namespace {

using smt::ErrorKind;
using smt::Index;
using smt::Matrix;
using smt::Vector;
using smt::testing::expect_error;

TEST(Recovery, ZeroBetaGivesZeroCode) {
  std::mt19937_64 rng(1);
  const Matrix p = smt::oracle::random_matrix(5, 12, rng);
  const auto r = smt::invert_embedding(Vector::Zero(5), p);
  EXPECT_EQ(r.code.values, Vector::Zero(12));
  EXPECT_TRUE(r.report.converged);
}

TEST(Recovery, DefaultLambdaIsScaleAware) {
  std::mt19937_64 rng(2);
  const Matrix p = smt::oracle::random_matrix(6, 20, rng);
  const Vector beta = smt::oracle::random_matrix(6, 1, rng).col(0);
  const Vector z = smt::column_norms(p);
  const double base = smt::default_recovery_lambda(beta, p, z);
  EXPECT_GT(base, 0.0);
  EXPECT_NEAR(smt::default_recovery_lambda(8.0 * beta, p, z), 8.0 * base, 1e-12 * base);
  const Vector corr = p.transpose() * beta;
  EXPECT_NEAR(base, 0.01 * (corr.array() / z.array()).maxCoeff(), 1e-15);
}

TEST(Recovery, IdentityEmbeddingShrinksOneHot) {
  const Matrix p = Matrix::Identity(6, 6);
  Vector beta = Vector::Zero(6);
  beta[3] = 2.0;
  const auto r = smt::invert_embedding(beta, p);
  // ||beta - a||^2 + lambda a with lambda = 0.01 * 2.
  Vector expected = Vector::Zero(6);
  expected[3] = 2.0 - 0.01;
  EXPECT_LE((r.code.values - expected).cwiseAbs().maxCoeff(), 1e-9);
}

// Weighted problem with weights z maps to an unweighted one on columns p_j / z_j,
// with a factor 2 between the two objective conventions.
TEST(Recovery, MatchesEnumerationOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix p = smt::oracle::random_matrix(6, 10, rng);
    Vector truth = Vector::Zero(10);
    truth[static_cast<Index>(rng() % 10)] = 1.0;
    truth[static_cast<Index>(rng() % 10)] += 0.5;
    const Vector beta = p * truth;
    smt::RecoveryConfig cfg;
    cfg.lambda = 0.05;
    const auto r = smt::invert_embedding(beta, p, cfg);
    const Vector z = smt::column_norms(p);
    const Matrix scaled = p * z.cwiseInverse().asDiagonal();
    const auto oracle = smt::oracle::enumerate_nn_lasso(beta, scaled, cfg.lambda / 2.0, 10);
    const Vector oracle_code = oracle.code.cwiseQuotient(z);
    const double got = (beta - p * r.code.values).squaredNorm() + cfg.lambda * z.dot(r.code.values);
    const double want = (beta - p * oracle_code).squaredNorm() + cfg.lambda * z.dot(oracle_code);
    EXPECT_NEAR(got, want, 1e-8);
  }
}

TEST(Recovery, UnitWeightsOption) {
  std::mt19937_64 rng(4);
  Matrix p = smt::oracle::random_matrix(4, 8, rng);
  p.col(0) *= 5.0;
  smt::RecoveryConfig cfg;
  cfg.use_canonical_weights = false;
  EXPECT_EQ(smt::recovery_weights(p, cfg), Vector::Ones(8));
  cfg.use_canonical_weights = true;
  EXPECT_NEAR(smt::recovery_weights(p, cfg)[0], p.col(0).norm(), 1e-15);
}

TEST(Recovery, BatchMatchesSingleAcrossThreads) {
  std::mt19937_64 rng(5);
  const Matrix p = smt::oracle::random_matrix(5, 15, rng);
  const Matrix betas = p * smt::oracle::random_matrix(15, 9, rng, 0.0, 1.0);
  const Matrix one = smt::invert_embedding_batch(betas, p, {}, 1);
  const Matrix four = smt::invert_embedding_batch(betas, p, {}, 4);
  EXPECT_EQ(one, four);
  for (Index c = 0; c < betas.cols(); ++c) EXPECT_EQ(Vector(one.col(c)), smt::invert_embedding(betas.col(c), p).code.values);
}

TEST(Recovery, ReconstructLayer1IsLinear) {
  std::mt19937_64 rng(6);
  const Matrix dict = smt::oracle::random_unit_columns(9, 14, rng);
  const Vector a = smt::oracle::random_matrix(14, 1, rng, 0.0, 1.0).col(0);
  const Vector b = smt::oracle::random_matrix(14, 1, rng, 0.0, 1.0).col(0);
  const Vector sum = smt::reconstruct_layer1(a + b, dict);
  EXPECT_LE((sum - smt::reconstruct_layer1(a, dict) - smt::reconstruct_layer1(b, dict)).cwiseAbs().maxCoeff(), 1e-12);
  expect_error(ErrorKind::DimensionMismatch, [&] { smt::reconstruct_layer1(Vector::Zero(3), dict); });
}

TEST(Recovery, NormalizedLocalMean) {
  std::mt19937_64 rng(7);
  const Matrix landmarks = smt::oracle::random_matrix(2, 30, rng);
  const Matrix query = smt::oracle::random_matrix(2, 5, rng);
  const Vector flat = smt::normalized_local_mean(Vector::Constant(30, 0.7), landmarks, query, 0.2);
  for (Index q = 0; q < 5; ++q) EXPECT_NEAR(flat[q], 0.7, 1e-12);
  Vector spike = Vector::Zero(30);
  spike[4] = 1.0;
  const Vector near = smt::normalized_local_mean(spike, landmarks, landmarks.col(4), 0.05);
  const Vector far = smt::normalized_local_mean(spike, landmarks, Matrix::Constant(2, 1, 5.0), 0.5);
  EXPECT_GT(near[0], far[0]);
  expect_error(ErrorKind::InvalidArgument, [&] { smt::normalized_local_mean(spike, landmarks, query, 0.0); });
  expect_error(ErrorKind::DimensionMismatch, [&] { smt::invert_embedding(Vector::Zero(3), landmarks); });
}

}  // namespace
