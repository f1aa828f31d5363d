#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "smt/embedding.hpp"

namespace {

using smt::ErrorKind;
using smt::Index;
using smt::Matrix;
using smt::Vector;

constexpr double kPi = 3.14159265358979323846;

// Dyadic entries so shifts and second differences are exact in binary.
Matrix dyadic_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(-4096, 4096);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng) / 1024.0;
  return m;
}

// Mixture of three slow sinusoids and white noise rows: a clear spectral gap
// after the third functional.
Matrix slow_mixture(Index n, Index t, std::mt19937_64& rng) {
  Matrix latent(n, t);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (Index k = 0; k < t; ++k) {
    latent(0, k) = std::sin(2 * kPi * k / 400.0);
    latent(1, k) = std::cos(2 * kPi * k / 300.0);
    latent(2, k) = std::sin(2 * kPi * k / 500.0 + 1.0);
    for (Index i = 3; i < n; ++i) latent(i, k) = noise(rng);
  }
  return smt::oracle::random_matrix(n, n, rng) * latent;
}

// Generalized problem G u = mu V u via Eigen, independent of sym_eig.
Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> oracle_pencil(const Matrix& a, const Matrix& dense_d,
                                                               double ridge) {
  const Matrix y = a * dense_d;
  Matrix v = a * a.transpose() / static_cast<double>(a.cols());
  v.diagonal().array() += ridge;
  return Eigen::GeneralizedSelfAdjointEigenSolver<Matrix>(y * y.transpose(), v);
}

TEST(SecondDiff, DenseStencil) {
  const auto d = smt::build_second_diff(5, {0});
  ASSERT_EQ(d.cols(), 3);
  Matrix expected = Matrix::Zero(5, 3);
  for (Index c = 0; c < 3; ++c) {
    expected(c, c) = -0.5;
    expected(c + 1, c) = 1.0;
    expected(c + 2, c) = -0.5;
  }
  EXPECT_EQ(d.dense(), expected);
}

TEST(SecondDiff, ChunksAreNotBridged) {
  const auto d = smt::build_second_diff(12, {0, 4, 6, 9});
  // Chunks [0,4) [4,6) [6,9) [9,12) give 2 + 0 + 1 + 1 columns.
  ASSERT_EQ(d.cols(), 4);
  const std::vector<Index> starts{0, 4, 6, 9, 12};
  const Matrix dense = d.dense();
  for (Index c = 0; c < d.cols(); ++c) {
    std::vector<Index> rows;
    for (Index t = 0; t < 12; ++t)
      if (dense(t, c) != 0.0) rows.push_back(t);
    ASSERT_EQ(rows.size(), 3u);
    auto chunk_of = [&](Index t) {
      std::size_t k = 0;
      while (starts[k + 1] <= t) ++k;
      return k;
    };
    EXPECT_EQ(chunk_of(rows.front()), chunk_of(rows.back()));
  }
}

TEST(SecondDiff, ChunkTooShortAndBadBoundaries) {
  for (auto [t, starts] : std::vector<std::pair<Index, std::vector<Index>>>{{2, {0}}, {4, {0, 2}}, {0, {}}}) {
    try {
      smt::build_second_diff(t, starts);
      FAIL();
    } catch (const smt::Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::ChunkTooShort);
    }
  }
  try {
    smt::build_second_diff(6, {0, 3, 3});
    FAIL();
  } catch (const smt::Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
  }
}

TEST(SecondDiff, RampAndAffineAnnihilatedExactly) {
  const Index t = 50;
  const auto d = smt::build_second_diff(t, {0, 17, 30});
  Matrix ramp(1, t);
  for (Index k = 0; k < t; ++k) ramp(0, k) = static_cast<double>(k);
  EXPECT_EQ(d.apply(ramp), Matrix::Zero(1, d.cols()));

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix ab = dyadic_matrix(6, 2, rng);
    Matrix x(6, t);
    for (Index k = 0; k < t; ++k) x.col(k) = ab.col(0) + static_cast<double>(k) * ab.col(1);
    const Matrix y = d.apply(x);
    EXPECT_EQ(y, Matrix::Zero(6, d.cols()));
    EXPECT_EQ(x * d.dense(), y);
  }
}

TEST(SecondDiff, ChunkwiseShiftInvarianceBitExact) {
  std::mt19937_64 rng(9);
  const std::vector<Index> starts{0, 11, 25};
  const Index t = 40;
  const auto d = smt::build_second_diff(t, starts);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix a = dyadic_matrix(5, t, rng);
    Matrix shifted = a;
    for (std::size_t c = 0; c < starts.size(); ++c) {
      const Index b = starts[c];
      const Index e = c + 1 < starts.size() ? starts[c + 1] : t;
      const Matrix shift = dyadic_matrix(5, 1, rng);
      for (Index k = b; k < e; ++k) shifted.col(k) += shift;
    }
    EXPECT_EQ(d.apply(shifted), d.apply(a));
  }
}

TEST(SecondDiff, ChunkedBatchMatchesOperator) {
  std::mt19937_64 rng(10);
  smt::SequenceBatch batch;
  batch.append_chunk(smt::oracle::random_matrix(4, 7, rng));
  batch.append_chunk(smt::oracle::random_matrix(4, 2, rng));
  batch.append_chunk(smt::oracle::random_matrix(4, 9, rng));
  const auto d = smt::build_second_diff(batch.num_timepoints(), batch.chunk_starts);
  EXPECT_LE((smt::chunked_second_differences(batch) - batch.signals * d.dense()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AnalyticEmbedding, MatchesGeneralizedEigenOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 12, t = 300, f = 4;
    const Matrix a = smt::oracle::random_matrix(n, t, rng, 0.0, 1.0);
    const auto d = smt::build_second_diff(t, {0, 100, 180});
    const double ridge = 1e-3;
    const auto emb = smt::solve_embedding_analytic(a, d, f, ridge);
    const auto oracle = oracle_pencil(a, d.dense(), ridge);

    EXPECT_LE(smt::orthogonality_error(emb.p, emb.metric.matrix), 1e-8);
    const double objective = smt::embedding_objective(emb.p, d.apply(a));
    EXPECT_NEAR(objective, oracle.eigenvalues().head(f).sum(), 1e-8 * (1.0 + objective));
    for (Index i = 0; i < f; ++i) EXPECT_NEAR(emb.eigenvalues[i], oracle.eigenvalues()[i], 1e-8);
    const Matrix u = oracle.eigenvectors().leftCols(f).transpose();
    EXPECT_LE(smt::oracle::principal_angles(emb.p, u).maxCoeff(), 1e-5);
  }
}

TEST(AnalyticEmbedding, BeatsRandomFeasibleFrames) {
  std::mt19937_64 rng(12);
  const Index n = 10, t = 200, f = 3;
  const Matrix a = slow_mixture(n, t, rng);
  const auto d = smt::build_second_diff(t, {0});
  const auto emb = smt::solve_embedding_analytic(a, d, f, 1e-6);
  const Matrix y = d.apply(a);
  const double best = smt::embedding_objective(emb.p, y);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix p = smt::oracle::gram_schmidt_v(smt::oracle::random_matrix(f, n, rng), emb.metric.matrix);
    ASSERT_LE(smt::orthogonality_error(p, emb.metric.matrix), 1e-8);
    EXPECT_GE(smt::embedding_objective(p, y), best - 1e-9);
  }
}

TEST(AnalyticEmbedding, SignsCanonicalAndRowsAscend) {
  std::mt19937_64 rng(13);
  const Matrix a = slow_mixture(8, 150, rng);
  const auto emb = smt::solve_embedding_analytic(a, smt::build_second_diff(150, {0}), 5);
  for (Index i = 0; i < emb.f(); ++i) {
    Index arg = 0;
    emb.p.row(i).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(emb.p(i, arg), 0.0);
    if (i) EXPECT_LE(emb.eigenvalues[i - 1], emb.eigenvalues[i]);
  }
}

TEST(AnalyticEmbedding, Errors) {
  const auto d = smt::build_second_diff(3, {0});
  try {
    smt::solve_embedding_analytic(Matrix::Ones(4, 2), d, 1);
    FAIL();
  } catch (const smt::Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientTimepoints);
  }
  try {
    smt::solve_embedding_analytic(Matrix::Identity(4, 3), d, 5);
    FAIL();
  } catch (const smt::Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
  }
}

TEST(AnalyticEmbedding, NeverActiveElementsGetZeroColumns) {
  std::mt19937_64 rng(14);
  const Index n = 8, t = 120, f = 3;
  Matrix a = smt::oracle::random_matrix(n, t, rng, 0.0, 1.0);
  a.row(2).setZero();
  a.row(5).setZero();
  const auto d = smt::build_second_diff(t, {0, 60});
  const auto emb = smt::solve_embedding_analytic(a, d, f);
  EXPECT_EQ(emb.p.col(2).norm(), 0.0);
  EXPECT_EQ(emb.p.col(5).norm(), 0.0);
  EXPECT_LE(smt::orthogonality_error(emb.p, emb.metric.matrix), 1e-8);

  Matrix sub(n - 2, t);
  Index r = 0;
  for (Index i = 0; i < n; ++i)
    if (i != 2 && i != 5) sub.row(r++) = a.row(i);
  const auto oracle = oracle_pencil(sub, d.dense(), emb.metric.ridge);
  for (Index i = 0; i < f; ++i) EXPECT_NEAR(emb.eigenvalues[i], oracle.eigenvalues()[i], 1e-8);
  EXPECT_GT(emb.eigenvalues[0], 1e-6);

  try {
    smt::solve_embedding_analytic(a, d, n - 1);
    FAIL();
  } catch (const smt::Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RankCollapse);
  }
}

TEST(EmbeddingAccumulator, ShardsMergeToWhole) {
  std::mt19937_64 rng(14);
  smt::SequenceBatch batch;
  for (int c = 0; c < 6; ++c) batch.append_chunk(smt::oracle::random_matrix(5, 5 + c, rng, 0.0, 1.0));
  smt::EmbeddingAccumulator whole(5), left(5), right(5);
  whole.add(batch);
  for (std::size_t c = 0; c < batch.num_chunks(); ++c) (c % 2 ? left : right).add_chunk(batch.chunk(c));
  left.merge(right);
  EXPECT_EQ(left.diff_columns(), whole.diff_columns());
  EXPECT_LE((left.scatter() - whole.scatter()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((left.metric(0.0).matrix - whole.metric(0.0).matrix).cwiseAbs().maxCoeff(), 1e-12);
  const Matrix y = smt::chunked_second_differences(batch);
  EXPECT_LE((whole.scatter() - y * y.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SgdStep, KeepsConstraintAndDescends) {
  std::mt19937_64 rng(15);
  const Index n = 10, t = 400, f = 3;
  const Matrix a = slow_mixture(n, t, rng);
  const auto d = smt::build_second_diff(t, {0});
  const Matrix y = d.apply(a) / std::sqrt(static_cast<double>(d.cols()));
  const auto metric = smt::SgdMetric::from(smt::second_moment(a, 1e-6));
  Matrix p = smt::random_orthonormal_frame(f, metric.v.matrix, 3);
  const Vector mean = a.rowwise().mean();
  double prev = smt::embedding_objective(p, y);
  for (int step = 0; step < 50; ++step) {
    p = smt::sgd_embedding_step(p, y, metric, mean, 1.0, 0.0, 0.05);
    EXPECT_LE(smt::orthogonality_error(p, metric.v.matrix), 1e-8);
    const double obj = smt::embedding_objective(p, y);
    EXPECT_LE(obj, prev + 1e-9);
    prev = obj;
  }
}

TEST(SgdStep, NoOpWhenGammasZero) {
  std::mt19937_64 rng(16);
  const Matrix a = smt::oracle::random_matrix(6, 50, rng);
  const auto metric = smt::SgdMetric::from(smt::second_moment(a, 1e-6));
  const Matrix p = smt::random_orthonormal_frame(2, metric.v.matrix, 1);
  const Matrix y = smt::build_second_diff(50, {0}).apply(a);
  const Matrix next = smt::sgd_embedding_step(p, y, metric, Vector::Zero(6), 0.0, 0.0, 0.1);
  EXPECT_LE((next - p).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(SgdStep, ShrinkageCollapseIsReported) {
  std::mt19937_64 rng(17);
  const Matrix a = smt::oracle::random_matrix(6, 50, rng, 0.0, 1.0);
  const auto metric = smt::SgdMetric::from(smt::second_moment(a, 1e-6));
  const Matrix p = smt::random_orthonormal_frame(2, metric.v.matrix, 1);
  const Matrix y = smt::build_second_diff(50, {0}).apply(a);
  try {
    smt::sgd_embedding_step(p, y, metric, Vector::Ones(6), 0.0, 1e6, 0.1);
    FAIL();
  } catch (const smt::Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RankCollapse);
  }
}

TEST(SgdStep, ShrinkageZeroesColumns) {
  Matrix p(2, 3);
  p << 1.0, -0.2, 0.05, -2.0, 0.3, -0.05;
  Vector t(3);
  t << 0.5, 0.25, 0.1;
  smt::shrink_columns(p, t);
  Matrix expected(2, 3);
  expected << 0.5, 0.0, 0.0, -1.5, 0.05, 0.0;
  EXPECT_LE((p - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TrainEmbedding, SgdReachesAnalyticSubspace) {
  std::mt19937_64 rng(18);
  const Index n = 10, f = 3;
  smt::SequenceBatch codes;
  for (int c = 0; c < 4; ++c) codes.append_chunk(slow_mixture(n, 300, rng));

  smt::EmbeddingTrainingConfig cfg;
  cfg.f = f;
  cfg.ridge = 1e-6;
  const auto analytic = smt::train_embedding(codes, cfg);

  cfg.method = smt::EmbeddingMethod::Sgd;
  cfg.chunks_per_batch = 4;
  cfg.eta = 0.1;
  cfg.eta_decay = false;
  cfg.epochs = 2000;
  const auto sgd = smt::train_embedding(codes, cfg);
  const Vector angles = smt::oracle::principal_angles(analytic.embedding.p, sgd.embedding.p);
  EXPECT_LE(angles.maxCoeff() * 180.0 / kPi, 5.0);
  EXPECT_LE(sgd.log.back().orthogonality_error, 1e-8);
  EXPECT_EQ(sgd.log.size(), cfg.epochs);

  std::ostringstream csv;
  smt::write_embedding_log_csv(csv, sgd.log);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "epoch,objective,orthogonality_error");
}

TEST(TrainEmbedding, AnalyticMatchesDirectSolve) {
  std::mt19937_64 rng(19);
  smt::SequenceBatch codes;
  codes.append_chunk(smt::oracle::random_matrix(7, 40, rng, 0.0, 1.0));
  codes.append_chunk(smt::oracle::random_matrix(7, 30, rng, 0.0, 1.0));
  smt::EmbeddingTrainingConfig cfg;
  cfg.f = 2;
  const auto trained = smt::train_embedding(codes, cfg);
  const auto direct =
      smt::solve_embedding_analytic(codes.signals, smt::build_second_diff(70, codes.chunk_starts), 2);
  EXPECT_LE(smt::oracle::principal_angles(trained.embedding.p, direct.p).maxCoeff(), 1e-6);
}

TEST(TrainEmbedding, DefaultDimensionRule) {
  EXPECT_EQ(smt::default_embedding_dim(1.0, 100), 5);  // ln 100 = 4.6
  EXPECT_EQ(smt::default_embedding_dim(4.0, 300), 23);
  EXPECT_EQ(smt::default_embedding_dim(100.0, 10), 10);
}

}  // namespace
