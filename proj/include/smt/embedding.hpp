#pragma once

// Learning the functional embedding P from temporally ordered sparse codes:
//
//   min ||P A D||_F^2  s.t.  P V P^T = I
//
// solved either analytically (trailing eigenvectors of the V-whitened
// second-difference scatter) or by whitened SGD with column shrinkage and
// parallel orthogonalization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "smt/error.hpp"
#include "smt/numerics.hpp"
#include "smt/random.hpp"
#include "smt/sequence.hpp"

namespace smt {

enum class EmbeddingMethod { Analytic = 0, Sgd = 1 };

inline const char* to_string(EmbeddingMethod m) { return m == EmbeddingMethod::Analytic ? "analytic" : "sgd"; }

/// f x num_elements matrix of functionals, V-orthonormal rows.
struct EmbeddingMatrix {
  Matrix p;
  MomentMatrix metric;
  EmbeddingMethod method = EmbeddingMethod::Analytic;
  // Analytic path: eigenvalues of the whitened operator for the kept rows.
  Vector eigenvalues;

  Index f() const { return p.rows(); }
  Index num_elements() const { return p.cols(); }
};

/// ||P V P^T - I||_F.
inline double orthogonality_error(const Matrix& p, const Matrix& v) {
  return (p * v * p.transpose() - Matrix::Identity(p.rows(), p.rows())).norm();
}

/// Second-difference operator D: one column per interior timepoint t of each
/// chunk, carrying (-0.5, 1, -0.5) at rows (t-1, t, t+1). Stored by the row of
/// its centre entry.
class SecondDiffOperator {
 public:
  Index num_timepoints() const { return timepoints_; }
  Index cols() const { return static_cast<Index>(centers_.size()); }
  const std::vector<Index>& centers() const { return centers_; }
  const std::vector<Index>& chunk_starts() const { return chunk_starts_; }

  /// Dense T x cols() matrix.
  Matrix dense() const {
    Matrix d = Matrix::Zero(timepoints_, cols());
    for (Index c = 0; c < cols(); ++c) {
      const Index t = centers_[static_cast<std::size_t>(c)];
      d(t - 1, c) = -0.5;
      d(t, c) = 1.0;
      d(t + 1, c) = -0.5;
    }
    return d;
  }

  /// X D for X with T columns; column c is x_t - x_{t-1}/2 - x_{t+1}/2.
  Matrix apply(const Matrix& x) const {
    require(x.cols() == timepoints_, ErrorKind::DimensionMismatch, "SecondDiffOperator: column count");
    Matrix out(x.rows(), cols());
    for (Index c = 0; c < cols(); ++c) {
      const Index t = centers_[static_cast<std::size_t>(c)];
      out.col(c) = -0.5 * x.col(t - 1) + x.col(t) - 0.5 * x.col(t + 1);
    }
    return out;
  }

  friend SecondDiffOperator build_second_diff(Index timepoints, const std::vector<Index>& chunk_starts);

 private:
  Index timepoints_ = 0;
  std::vector<Index> chunk_starts_;
  std::vector<Index> centers_;
};

/// Builds D for T timepoints split at `chunk_starts` (first column of each
/// chunk; a leading 0 is implied). Chunks shorter than 3 contribute no
/// columns; ChunkTooShort if no chunk contributes.
inline SecondDiffOperator build_second_diff(Index timepoints, const std::vector<Index>& chunk_starts) {
  require(timepoints >= 0, ErrorKind::InvalidArgument, "build_second_diff: negative T");
  std::vector<Index> starts = chunk_starts;
  if (starts.empty() || starts.front() != 0) starts.insert(starts.begin(), 0);
  for (std::size_t i = 1; i < starts.size(); ++i)
    require(starts[i] > starts[i - 1] && starts[i] < timepoints, ErrorKind::InvalidArgument,
            "build_second_diff: chunk boundaries must be strictly increasing within [0, T)");

  SecondDiffOperator op;
  op.timepoints_ = timepoints;
  op.chunk_starts_ = starts;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const Index begin = starts[i];
    const Index end = i + 1 < starts.size() ? starts[i + 1] : timepoints;
    for (Index t = begin + 1; t + 1 < end; ++t) op.centers_.push_back(t);
  }
  require(!op.centers_.empty(), ErrorKind::ChunkTooShort, "build_second_diff: every chunk is shorter than 3");
  return op;
}

/// Second differences of every chunk of a batch, concatenated (= A D).
inline Matrix chunked_second_differences(const SequenceBatch& batch) {
  Index cols = 0;
  for (std::size_t c = 0; c < batch.num_chunks(); ++c) {
    const auto [b, e] = batch.chunk_range(c);
    cols += std::max<Index>(0, e - b - 2);
  }
  Matrix out(batch.dim(), cols);
  Index k = 0;
  for (std::size_t c = 0; c < batch.num_chunks(); ++c) {
    const auto [b, e] = batch.chunk_range(c);
    for (Index t = b + 1; t + 1 < e; ++t)
      out.col(k++) = -0.5 * batch.signals.col(t - 1) + batch.signals.col(t) - 0.5 * batch.signals.col(t + 1);
  }
  return out;
}

namespace detail {

// Flip each row so that its largest-magnitude entry is positive.
inline void canonicalize_signs(Matrix& p) {
  for (Index i = 0; i < p.rows(); ++i) {
    Index arg = 0;
    p.row(i).cwiseAbs().maxCoeff(&arg);
    if (p(i, arg) < 0) p.row(i) *= -1.0;
  }
}

}  // namespace detail

/// Streaming accumulation of V (second moment of the codes) and the
/// second-difference scatter G = sum (A_c D_c)(A_c D_c)^T over chunks.
/// Accumulators built on disjoint shards merge by addition.
class EmbeddingAccumulator {
 public:
  explicit EmbeddingAccumulator(Index num_elements)
      : moments_(num_elements), scatter_(Matrix::Zero(num_elements, num_elements)) {}

  Index num_elements() const { return moments_.dim(); }
  Index diff_columns() const { return diff_columns_; }
  std::size_t timepoints() const { return moments_.count(); }

  void add_chunk(const Matrix& chunk) {
    require(chunk.rows() == num_elements(), ErrorKind::DimensionMismatch, "EmbeddingAccumulator: code length");
    if (chunk.cols() == 0) return;
    moments_.add_columns(chunk);
    if (chunk.cols() >= 3) {
      const Matrix y = build_second_diff(chunk.cols(), {0}).apply(chunk);
      scatter_.selfadjointView<Eigen::Lower>().rankUpdate(y);
      diff_columns_ += y.cols();
    }
  }

  void add(const SequenceBatch& codes) {
    for (std::size_t c = 0; c < codes.num_chunks(); ++c) add_chunk(codes.chunk(c));
  }

  void merge(const EmbeddingAccumulator& other) {
    moments_.merge(other.moments_);
    scatter_ += other.scatter_;
    diff_columns_ += other.diff_columns_;
  }

  /// ridge < 0 selects relative_ridge * trace(V) / dim.
  MomentMatrix metric(double ridge, bool center = false, double relative_ridge = 1e-6) const {
    return moments_.finish(ridge, center, relative_ridge);
  }
  Vector mean_code() const { return moments_.mean(); }
  Matrix scatter() const { return scatter_.selfadjointView<Eigen::Lower>(); }

 private:
  MomentAccumulator moments_;
  Matrix scatter_;  // lower triangle
  Index diff_columns_ = 0;
};

/// Trailing-eigenvector solution P = U^T V^{-1/2} for a given metric and
/// scatter. Rows ascend by eigenvalue; signs canonicalized.
/// Elements whose unridged second moment is at most 1e-12 of the largest
/// were never active; they get zero columns and the eigenproblem is solved
/// on the remaining block, so P V P^T = I still holds exactly.
inline std::vector<Index> active_elements(const MomentMatrix& metric) {
  const Vector raw = metric.matrix.diagonal().array() - metric.ridge;
  const double top = raw.size() ? raw.maxCoeff() : 0.0;
  std::vector<Index> active;
  for (Index j = 0; j < raw.size(); ++j)
    if (raw[j] > 1e-12 * top) active.push_back(j);
  return active;
}

inline EmbeddingMatrix solve_embedding_from_scatter(const Matrix& scatter, MomentMatrix metric, Index f) {
  const Index n = scatter.rows();
  require(f >= 1 && f <= n, ErrorKind::InvalidArgument, "solve_embedding: f must be in [1, num_elements]");
  const std::vector<Index> active = active_elements(metric);
  const auto m = static_cast<Index>(active.size());
  require(m >= f, ErrorKind::RankCollapse,
          "solve_embedding: only " + std::to_string(m) + " elements are ever active, fewer than f");
  Matrix sub_v(m, m), sub_scatter(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) {
      sub_v(i, j) = metric.matrix(active[i], active[j]);
      sub_scatter(i, j) = scatter(active[i], active[j]);
    }
  const Matrix s = inv_sqrt(sub_v);
  Matrix whitened = s * sub_scatter * s;
  whitened = 0.5 * (whitened + whitened.transpose());
  const SymEigResult eig = sym_eig(whitened);
  const Matrix sub_p = eig.eigenvectors.leftCols(f).transpose() * s;
  EmbeddingMatrix out;
  out.p = Matrix::Zero(f, n);
  for (Index j = 0; j < m; ++j) out.p.col(active[j]) = sub_p.col(j);
  detail::canonicalize_signs(out.p);
  out.eigenvalues = eig.eigenvalues.head(f);
  out.metric = std::move(metric);
  out.method = EmbeddingMethod::Analytic;
  return out;
}

/// Analytic solution on a single coefficient matrix A and operator D. ridge
/// < 0 selects 1e-6 trace(V)/dim; V is the uncentered second moment unless
/// `center` is set.
inline EmbeddingMatrix solve_embedding_analytic(const Matrix& a, const SecondDiffOperator& d, Index f,
                                                double ridge = -1.0, bool center = false) {
  require(a.cols() >= 3, ErrorKind::InsufficientTimepoints, "solve_embedding_analytic: need T >= 3");
  require(a.cols() == d.num_timepoints(), ErrorKind::DimensionMismatch, "solve_embedding_analytic: T mismatch");
  const Matrix y = d.apply(a);
  Matrix scatter = y * y.transpose();
  return solve_embedding_from_scatter(scatter, second_moment(a, ridge, center), f);
}

/// ||P A D||_F^2 given Y = A D.
inline double embedding_objective(const Matrix& p, const Matrix& second_diffs) {
  return (p * second_diffs).squaredNorm();
}

/// Precomputed V^{-1} shared by SGD steps within an epoch.
struct SgdMetric {
  MomentMatrix v;
  Matrix v_inverse;

  static SgdMetric from(MomentMatrix v) {
    SgdMetric m;
    Eigen::LDLT<Matrix> ldlt(v.matrix);
    require(ldlt.info() == Eigen::Success && ldlt.isPositive(), ErrorKind::NotPositiveDefinite,
            "sgd metric V is not positive definite");
    m.v_inverse = ldlt.solve(Matrix::Identity(v.dim(), v.dim()));
    m.v_inverse = 0.5 * (m.v_inverse + m.v_inverse.transpose());
    m.v = std::move(v);
    return m;
  }
};

/// Entrywise soft threshold of column j by thresholds[j].
inline void shrink_columns(Matrix& p, const Vector& thresholds) {
  for (Index j = 0; j < p.cols(); ++j) {
    const double t = thresholds[j];
    if (t <= 0.0) continue;
    for (Index i = 0; i < p.rows(); ++i) {
      const double v = p(i, j);
      p(i, j) = v > t ? v - t : (v < -t ? v + t : 0.0);
    }
  }
}

/// P <- (P V P^T)^{-1/2} P. RankCollapse if P V P^T is numerically singular.
inline Matrix parallel_orthogonalize(const Matrix& p, const Matrix& v) {
  Matrix c = p * v * p.transpose();
  c = 0.5 * (c + c.transpose());
  const SymEigResult eig = sym_eig(c);
  const double top = eig.eigenvalues.size() ? eig.eigenvalues[eig.eigenvalues.size() - 1] : 0.0;
  if (eig.eigenvalues.size() == 0 || top <= 0.0 || eig.eigenvalues[0] <= 1e-12 * top)
    throw Error(ErrorKind::RankCollapse, "P V P^T is singular; embedding rows collapsed");
  return spectral_map(eig, [](double x) { return 1.0 / std::sqrt(x); }) * p;
}

/// One SGD update given Y = A_batch D_batch:
///   (1) P -= 2 gamma0 eta P Y Y^T V^{-1}
///   (2) shrink column j of P by gamma1 * mean_alpha[j]
///   (3) P <- (P V P^T)^{-1/2} P
inline Matrix sgd_embedding_step(const Matrix& p, const Matrix& second_diffs, const SgdMetric& metric,
                                 const Vector& mean_alpha, double gamma0, double gamma1, double eta) {
  require(eta > 0.0, ErrorKind::InvalidArgument, "sgd_embedding_step: eta must be positive");
  require(gamma0 >= 0.0 && gamma1 >= 0.0, ErrorKind::InvalidArgument, "sgd_embedding_step: negative gamma");
  require(p.cols() == metric.v.dim() && second_diffs.rows() == p.cols() && mean_alpha.size() == p.cols(),
          ErrorKind::DimensionMismatch, "sgd_embedding_step: dimensions");
  Matrix next = p;
  if (gamma0 > 0.0 && second_diffs.cols() > 0)
    next.noalias() -= (2.0 * gamma0 * eta) * ((p * second_diffs) * second_diffs.transpose()) * metric.v_inverse;
  if (gamma1 > 0.0) shrink_columns(next, gamma1 * mean_alpha);
  return parallel_orthogonalize(next, metric.v.matrix);
}

/// Convenience overload taking the raw batch and its operator.
inline Matrix sgd_embedding_step(const Matrix& p, const Matrix& a_batch, const SecondDiffOperator& d,
                                 const SgdMetric& metric, const Vector& mean_alpha, double gamma0,
                                 double gamma1, double eta) {
  return sgd_embedding_step(p, d.apply(a_batch), metric, mean_alpha, gamma0, gamma1, eta);
}

/// Embedding dimension rule f = ceil(h log N).
inline Index default_embedding_dim(double h, Index num_elements) {
  require(h > 0.0 && num_elements >= 2, ErrorKind::InvalidArgument, "default_embedding_dim: bad arguments");
  return std::min<Index>(num_elements,
                         static_cast<Index>(std::ceil(h * std::log(static_cast<double>(num_elements)))));
}

struct EmbeddingTrainingConfig {
  Index f = 0;           // 0 selects default_embedding_dim(h, N)
  double h = 4.0;
  EmbeddingMethod method = EmbeddingMethod::Analytic;
  double ridge = -1.0;   // < 0: relative_ridge trace(V)/dim
  double relative_ridge = 1e-6;
  bool center = false;
  double gamma0 = 1.0;
  double gamma1 = 0.0;
  double eta = 0.05;
  bool eta_decay = true;  // eta / (1 + epoch)
  std::uint64_t epochs = 50;
  std::size_t chunks_per_batch = 16;
  // Scale each minibatch scatter by 1/(number of difference columns), so eta
  // is independent of batch size.
  bool normalize_batch = true;
  // SGD start: analytic-free random V-orthonormal frame.
  std::uint64_t seed = 1;
};

struct EmbeddingLogRow {
  std::uint64_t epoch;
  double objective;
  double orthogonality_error;
};

inline void write_embedding_log_csv(std::ostream& out, const std::vector<EmbeddingLogRow>& rows) {
  out << "epoch,objective,orthogonality_error\n";
  out.precision(17);
  for (const auto& r : rows) out << r.epoch << ',' << r.objective << ',' << r.orthogonality_error << '\n';
}

struct EmbeddingTrainingResult {
  EmbeddingMatrix embedding;
  std::vector<EmbeddingLogRow> log;
};

/// Random Gaussian f x N frame made V-orthonormal.
inline Matrix random_orthonormal_frame(Index f, const Matrix& v, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix p(f, v.rows());
  for (Index j = 0; j < p.cols(); ++j)
    for (Index i = 0; i < f; ++i) p(i, j) = normal(rng);
  return parallel_orthogonalize(p, v);
}

/// Trains P on chunked code sequences. V is computed once over the full
/// stream; the analytic path accumulates the scatter chunk by chunk, the SGD
/// path cycles minibatches of `chunks_per_batch` chunks for `epochs` epochs.
inline EmbeddingTrainingResult train_embedding(const SequenceBatch& codes, const EmbeddingTrainingConfig& cfg,
                                               const Matrix* initial_p = nullptr) {
  codes.validate();
  const Index n = codes.dim();
  EmbeddingAccumulator acc(n);
  acc.add(codes);
  const Index f = cfg.f > 0 ? cfg.f : default_embedding_dim(cfg.h, n);
  require(static_cast<Index>(acc.timepoints()) >= f && acc.diff_columns() > 0, ErrorKind::InsufficientTimepoints,
          "train_embedding: not enough usable timepoints");
  require(f <= n, ErrorKind::InvalidArgument, "train_embedding: f exceeds num_elements");

  MomentMatrix metric = acc.metric(cfg.ridge, cfg.center, cfg.relative_ridge);
  const Matrix all_diffs = chunked_second_differences(codes);
  EmbeddingTrainingResult out;

  if (cfg.method == EmbeddingMethod::Analytic) {
    out.embedding = solve_embedding_from_scatter(acc.scatter(), std::move(metric), f);
    out.log.push_back({0, embedding_objective(out.embedding.p, all_diffs),
                       orthogonality_error(out.embedding.p, out.embedding.metric.matrix)});
    return out;
  }

  const SgdMetric sgd = SgdMetric::from(metric);
  const Vector mean_alpha = acc.mean_code();
  Matrix p = initial_p ? *initial_p : random_orthonormal_frame(f, sgd.v.matrix, cfg.seed);
  require(p.rows() == f && p.cols() == n, ErrorKind::DimensionMismatch, "train_embedding: initial P shape");

  // Minibatches of whole chunks.
  std::vector<Matrix> batches;
  for (std::size_t c = 0; c < codes.num_chunks(); c += std::max<std::size_t>(1, cfg.chunks_per_batch)) {
    SequenceBatch part;
    for (std::size_t k = c; k < std::min(codes.num_chunks(), c + std::max<std::size_t>(1, cfg.chunks_per_batch)); ++k)
      part.append_chunk(codes.chunk(k));
    Matrix y = chunked_second_differences(part);
    if (y.cols() == 0) continue;
    if (cfg.normalize_batch) y /= std::sqrt(static_cast<double>(y.cols()));
    batches.push_back(std::move(y));
  }

  for (std::uint64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double eta = cfg.eta_decay ? cfg.eta / (1.0 + static_cast<double>(epoch)) : cfg.eta;
    for (const Matrix& y : batches) p = sgd_embedding_step(p, y, sgd, mean_alpha, cfg.gamma0, cfg.gamma1, eta);
    out.log.push_back({epoch, embedding_objective(p, all_diffs), orthogonality_error(p, sgd.v.matrix)});
  }
  out.embedding.p = std::move(p);
  out.embedding.metric = sgd.v;
  out.embedding.method = EmbeddingMethod::Sgd;
  return out;
}

}  // namespace smt
