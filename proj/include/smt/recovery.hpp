#pragma once

// Recovering sparse codes from embedded vectors:
//   min ||beta - P a||^2 + lambda z^T a,  a >= 0.

#include <algorithm>
#include <cmath>
#include <vector>

#include "smt/error.hpp"
#include "smt/numerics.hpp"
#include "smt/parallel.hpp"
#include "smt/sparse.hpp"

namespace smt {

struct RecoveryConfig {
  double lambda = 0.0;  // <= 0 selects default_recovery_lambda per vector
  double lambda_fraction = 0.01;
  bool use_canonical_weights = true;  // z = column norms of P, else z = 1
  SolverOptions solver{};
};

/// lambda = fraction * max_j (p_j^T beta / z_j)_+. Zero when no column
/// correlates positively with beta.
inline double default_recovery_lambda(const Vector& beta, const Matrix& p, const Vector& weights,
                                      double fraction = 0.01) {
  const Vector corr = p.transpose() * beta;
  double best = 0.0;
  for (Index j = 0; j < corr.size(); ++j)
    if (weights[j] > 0.0) best = std::max(best, corr[j] / weights[j]);
  return fraction * best;
}

inline Vector recovery_weights(const Matrix& p, const RecoveryConfig& cfg) {
  return cfg.use_canonical_weights ? column_norms(p) : Vector::Ones(p.cols());
}

/// alpha_rec = g(beta). A beta with no positive correlation to any column
/// (including beta = 0) recovers the zero code. With canonical weights the
/// report's KKT and iteration counts refer to the unit-column problem.
inline SolveResult invert_embedding(const Vector& beta, const Matrix& p, const RecoveryConfig& cfg = {}) {
  require(beta.size() == p.rows(), ErrorKind::DimensionMismatch, "invert_embedding: beta length must equal f");
  const Vector z = recovery_weights(p, cfg);
  const double lambda = cfg.lambda > 0.0 ? cfg.lambda : default_recovery_lambda(beta, p, z, cfg.lambda_fraction);
  if (lambda <= 0.0) {
    SolveResult r;
    r.code = SparseCode::zeros(p.cols());
    r.report.converged = true;
    return r;
  }
  if (!cfg.use_canonical_weights) return weighted_nn_lasso(beta, p, lambda, z, cfg.solver);
  // With z = column norms, b = z .* a turns the problem into an unweighted
  // one over unit columns. Same minimizer, far better conditioned when the
  // norms spread over orders of magnitude. Zero columns stay at zero.
  Matrix unit = Matrix::Zero(p.rows(), p.cols());
  for (Index j = 0; j < p.cols(); ++j)
    if (z[j] > 0.0) unit.col(j) = p.col(j) / z[j];
  SolveResult r = weighted_nn_lasso(beta, unit, lambda, Vector::Ones(p.cols()), cfg.solver);
  for (Index j = 0; j < p.cols(); ++j) r.code.values[j] = z[j] > 0.0 ? r.code.values[j] / z[j] : 0.0;
  r.code = SparseCode::from_values(std::move(r.code.values), cfg.solver.activation_floor);
  return r;
}

/// Column-wise invert_embedding.
inline Matrix invert_embedding_batch(const Matrix& betas, const Matrix& p, const RecoveryConfig& cfg,
                                     unsigned threads = 1) {
  Matrix out(p.cols(), betas.cols());
  parallel_for(static_cast<std::size_t>(betas.cols()), threads, [&](std::size_t c) {
    out.col(static_cast<Index>(c)) = invert_embedding(betas.col(static_cast<Index>(c)), p, cfg).code.values;
  });
  return out;
}

/// Phi alpha.
inline Vector reconstruct_layer1(const Vector& alpha, const Matrix& dict) {
  require(alpha.size() == dict.cols(), ErrorKind::DimensionMismatch, "reconstruct_layer1: code length");
  return dict * alpha;
}

/// Kernel-weighted local mean of recovered mass at `query` points, bandwidth
/// h: sum_j a_j K(q - l_j) / sum_j K(q - l_j). Used for plot data only.
inline Vector normalized_local_mean(const Vector& alpha, const Matrix& landmarks, const Matrix& query,
                                    double bandwidth) {
  require(alpha.size() == landmarks.cols(), ErrorKind::DimensionMismatch, "normalized_local_mean: lengths");
  require(bandwidth > 0.0, ErrorKind::InvalidArgument, "normalized_local_mean: bandwidth must be positive");
  Vector out(query.cols());
  for (Index q = 0; q < query.cols(); ++q) {
    double num = 0.0, den = 0.0;
    for (Index j = 0; j < landmarks.cols(); ++j) {
      const double w = std::exp(-0.5 * (query.col(q) - landmarks.col(j)).squaredNorm() / (bandwidth * bandwidth));
      num += w * alpha[j];
      den += w;
    }
    out[q] = den > 0.0 ? num / den : 0.0;
  }
  return out;
}

}  // namespace smt
