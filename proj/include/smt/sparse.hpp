#pragma once

// Non-negative sparse inference.
//
// Every solver here minimizes a problem of the form
//
//   f(a) = sum_k w_k ||t_k - A_k a||^2 + c^T a,   a >= 0,  c >= 0
//
// with accelerated proximal gradient (non-negative soft threshold), restart
// on objective increase, backtracking on the Lipschitz estimate and a
// periodic active-set Newton polish that lands exactly on the optimum once
// the support has settled.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <tuple>
#include <utility>
#include <vector>

#include "smt/error.hpp"
#include "smt/numerics.hpp"

namespace smt {

struct SolverOptions {
  double kkt_tol = 1e-6;
  int max_iters = 2000;
  double activation_floor = 1e-8;
  // Active-set polish is attempted every this many iterations.
  int polish_every = 10;
  // Supports larger than this skip the polish step.
  Index polish_max_support = 512;
  bool record_history = false;
};

/// Non-negative coefficient vector plus the indices above the activation floor.
struct SparseCode {
  Vector values;
  std::vector<Index> support;

  static SparseCode from_values(Vector v, double activation_floor = 1e-8) {
    SparseCode code;
    v = v.cwiseMax(0.0);
    for (Index i = 0; i < v.size(); ++i)
      if (v[i] > activation_floor) code.support.push_back(i);
    code.values = std::move(v);
    return code;
  }

  static SparseCode zeros(Index n) { return {Vector::Zero(n), {}}; }

  Index size() const { return values.size(); }
  std::size_t l0() const { return support.size(); }
};

struct SolveReport {
  int iterations = 0;
  double final_objective = 0.0;
  double kkt_violation = 0.0;
  bool converged = false;
  std::vector<double> objective_history;  // filled when SolverOptions::record_history
};

struct SolveResult {
  SparseCode code;
  SolveReport report;
};

/// One weighted least-squares term w ||target - op a||^2; `op` is borrowed.
struct LeastSquaresTerm {
  const Matrix* op;
  Vector target;
  double weight;
};

/// f(a) = sum_k w_k ||t_k - A_k a||^2 + linear^T a over a >= 0.
class NonNegativeQuadratic {
 public:
  NonNegativeQuadratic(std::vector<LeastSquaresTerm> terms, Vector linear)
      : terms_(std::move(terms)), linear_(std::move(linear)) {
    for (const auto& term : terms_) {
      require(term.op != nullptr, ErrorKind::InvalidArgument, "least-squares term without operator");
      require(term.op->cols() == linear_.size() && term.op->rows() == term.target.size(),
              ErrorKind::DimensionMismatch, "least-squares term dimensions");
      require(term.weight >= 0.0, ErrorKind::InvalidArgument, "negative term weight");
    }
    require((linear_.array() >= 0.0).all(), ErrorKind::InvalidArgument,
            "linear penalty must be non-negative");
  }

  Index dim() const { return linear_.size(); }
  const Vector& linear() const { return linear_; }
  const std::vector<LeastSquaresTerm>& terms() const { return terms_; }

  double smooth_value(const Vector& a) const {
    double v = 0.0;
    for (const auto& term : terms_) v += term.weight * (term.target - *term.op * a).squaredNorm();
    return v;
  }

  double value(const Vector& a) const { return smooth_value(a) + linear_.dot(a); }

  Vector smooth_gradient(const Vector& a) const {
    Vector g = Vector::Zero(dim());
    for (const auto& term : terms_)
      g.noalias() += (2.0 * term.weight) * (term.op->transpose() * (*term.op * a - term.target));
    return g;
  }

  Vector gradient(const Vector& a) const { return smooth_gradient(a) + linear_; }

  /// Largest eigenvalue of the Hessian, 50 power iterations.
  double lipschitz() const {
    return power_iteration(dim(), [this](const Vector& v) {
      Vector out = Vector::Zero(dim());
      for (const auto& term : terms_)
        out.noalias() += (2.0 * term.weight) * (term.op->transpose() * (*term.op * v));
      return out;
    });
  }

  /// Hessian restricted to `support`, and the matching right-hand side of
  /// the stationarity equations H_SS a_S = rhs.
  std::pair<Matrix, Vector> restricted_system(const std::vector<Index>& support) const {
    const Index s = static_cast<Index>(support.size());
    Matrix h = Matrix::Zero(s, s);
    Vector rhs = Vector::Zero(s);
    for (const auto& term : terms_) {
      Matrix cols(term.op->rows(), s);
      for (Index j = 0; j < s; ++j) cols.col(j) = term.op->col(support[static_cast<std::size_t>(j)]);
      h.noalias() += (2.0 * term.weight) * (cols.transpose() * cols);
      rhs.noalias() += (2.0 * term.weight) * (cols.transpose() * term.target);
    }
    for (Index j = 0; j < s; ++j) rhs[j] -= linear_[support[static_cast<std::size_t>(j)]];
    return {std::move(h), std::move(rhs)};
  }

 private:
  std::vector<LeastSquaresTerm> terms_;
  Vector linear_;
};

/// Max over coordinates of the projected-gradient KKT residual:
/// |g_i| where a_i > 0, max(0, -g_i) where a_i = 0.
inline double kkt_violation(const Vector& a, const Vector& gradient) {
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const double r = a[i] > 0.0 ? std::abs(gradient[i]) : std::max(0.0, -gradient[i]);
    worst = std::max(worst, r);
  }
  return worst;
}

namespace detail {

// Newton step onto the stationary point of the current support. Returns
// true and overwrites `a` when the candidate is strictly feasible and does
// not increase the objective.
inline bool polish_support(const NonNegativeQuadratic& problem, Vector& a, double& fa,
                           const SolverOptions& opts) {
  std::vector<Index> support;
  for (Index i = 0; i < a.size(); ++i)
    if (a[i] > 0.0) support.push_back(i);
  if (support.empty() || static_cast<Index>(support.size()) > opts.polish_max_support) return false;

  auto [h, rhs] = problem.restricted_system(support);
  Eigen::LDLT<Matrix> ldlt(h);
  if (ldlt.info() != Eigen::Success) return false;
  Vector sol = ldlt.solve(rhs);
  if (!sol.allFinite() || (h * sol - rhs).norm() > 1e-9 * std::max(1.0, rhs.norm())) return false;
  if ((sol.array() <= 0.0).any()) return false;

  Vector cand = Vector::Zero(a.size());
  for (std::size_t j = 0; j < support.size(); ++j) cand[support[j]] = sol[static_cast<Index>(j)];
  const double fc = problem.value(cand);
  if (fc > fa) return false;
  a = std::move(cand);
  fa = fc;
  return true;
}

}  // namespace detail

/// Minimizes `problem` over a >= 0 from `init` (clamped to the orthant).
inline SolveResult solve_nonnegative(const NonNegativeQuadratic& problem, const Vector& init,
                                     const SolverOptions& opts = {}) {
  const Index n = problem.dim();
  require(init.size() == n, ErrorKind::DimensionMismatch, "solver init size");

  SolveReport report;
  Vector x = init.cwiseMax(0.0);
  double fx = problem.value(x);
  if (opts.record_history) report.objective_history.push_back(fx);

  auto finish = [&](Vector a, double kkt) {
    report.final_objective = problem.value(a);
    report.kkt_violation = kkt;
    report.converged = kkt <= opts.kkt_tol;
    return SolveResult{SparseCode::from_values(std::move(a), opts.activation_floor), std::move(report)};
  };

  double kkt = kkt_violation(x, problem.gradient(x));
  if (kkt <= opts.kkt_tol || n == 0) return finish(std::move(x), kkt);

  double lip = std::max(problem.lipschitz(), std::numeric_limits<double>::min());
  Vector y = x;
  Vector x_prev = x;
  double t = 1.0;

  // Backtracking proximal step from `point`; doubles `lip` until the
  // quadratic upper bound holds.
  auto prox_step = [&](const Vector& point) {
    const double f_smooth = problem.smooth_value(point);
    const Vector g = problem.smooth_gradient(point);
    Vector z;
    for (int bt = 0; bt < 60; ++bt) {
      z = (point - (g + problem.linear()) / lip).cwiseMax(0.0);
      const Vector step = z - point;
      if (problem.smooth_value(z) <= f_smooth + g.dot(step) + 0.5 * lip * step.squaredNorm() +
                                          1e-14 * std::max(1.0, std::abs(f_smooth)))
        break;
      lip *= 2.0;
    }
    const double fz = problem.value(z);
    return std::pair<Vector, double>(std::move(z), fz);
  };

  for (int it = 1; it <= opts.max_iters; ++it) {
    report.iterations = it;
    auto [z, fz] = prox_step(y);
    if (fz > fx) {
      // Momentum overshoot: restart from the last accepted iterate.
      t = 1.0;
      std::tie(z, fz) = prox_step(x);
      if (fz > fx) {
        z = x;
        fz = fx;
      }
    }

    x_prev = std::move(x);
    x = std::move(z);
    fx = fz;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = x + ((t - 1.0) / t_next) * (x - x_prev);
    t = t_next;

    if (opts.polish_every > 0 && it % opts.polish_every == 0) {
      if (detail::polish_support(problem, x, fx, opts)) {
        y = x;
        t = 1.0;
      }
    }
    if (opts.record_history) report.objective_history.push_back(fx);

    kkt = kkt_violation(x, problem.gradient(x));
    if (kkt <= opts.kkt_tol) break;
  }
  if (kkt > opts.kkt_tol && detail::polish_support(problem, x, fx, opts)) {
    kkt = kkt_violation(x, problem.gradient(x));
    if (opts.record_history) report.objective_history.push_back(fx);
  }
  return finish(std::move(x), kkt);
}

inline void check_unit_columns(const Matrix& dict, double tol = 1e-6) {
  for (Index j = 0; j < dict.cols(); ++j)
    require(std::abs(dict.col(j).norm() - 1.0) <= tol, ErrorKind::InvalidArgument,
            "dictionary column " + std::to_string(j) + " is not unit norm");
}

/// min 1/2 ||x - Phi a||^2 + lambda ||a||_1, a >= 0.
inline SolveResult nn_lasso(const Vector& x, const Matrix& dict, double lambda,
                            const SolverOptions& opts = {}, const Vector* warm_start = nullptr) {
  require(lambda > 0.0, ErrorKind::InvalidArgument, "nn_lasso: lambda must be positive");
  require(x.size() == dict.rows(), ErrorKind::DimensionMismatch, "nn_lasso: signal/dictionary rows");
  require(x.allFinite(), ErrorKind::NonFinite, "nn_lasso: signal not finite");
  check_unit_columns(dict);
  NonNegativeQuadratic problem({{&dict, x, 0.5}}, Vector::Constant(dict.cols(), lambda));
  const Vector init = warm_start ? *warm_start : Vector::Zero(dict.cols());
  return solve_nonnegative(problem, init, opts);
}

/// Column norms of P, the canonical recovery weights.
inline Vector column_norms(const Matrix& p) { return p.colwise().norm().transpose(); }

/// min ||beta - P a||^2 + lambda z^T a, a >= 0 (no 1/2 on the quadratic).
inline SolveResult weighted_nn_lasso(const Vector& beta, const Matrix& p, double lambda,
                                     const Vector& weights, const SolverOptions& opts = {}) {
  require(lambda > 0.0, ErrorKind::InvalidArgument, "weighted_nn_lasso: lambda must be positive");
  require(beta.size() == p.rows(), ErrorKind::DimensionMismatch, "weighted_nn_lasso: beta length");
  require(weights.size() == p.cols(), ErrorKind::DimensionMismatch, "weighted_nn_lasso: weights length");
  require((weights.array() >= 0.0).all(), ErrorKind::InvalidArgument, "weighted_nn_lasso: negative weight");
  require(beta.allFinite(), ErrorKind::NonFinite, "weighted_nn_lasso: beta not finite");
  NonNegativeQuadratic problem({{&p, beta, 1.0}}, lambda * weights);
  return solve_nonnegative(problem, Vector::Zero(p.cols()), opts);
}

/// Causal linear prediction 2 a_{t-1} - a_{t-2}.
inline Vector linear_prediction(const Vector& prev, const Vector& prev2) { return 2.0 * prev - prev2; }

/// min ||x - Phi a||^2 + lambda ||a||_1 + gamma0 ||P (a - a_pred)||^2, a >= 0,
/// with a_pred = 2 a_{t-1} - a_{t-2}. Warm-started from max(a_pred, 0).
inline SolveResult temporal_regularized_infer(const Vector& x, const Matrix& dict, const Matrix& p,
                                              const Vector& prev, const Vector& prev2,
                                              double lambda, double gamma0,
                                              const SolverOptions& opts = {}) {
  require(lambda > 0.0, ErrorKind::InvalidArgument, "temporal_regularized_infer: lambda must be positive");
  require(gamma0 >= 0.0, ErrorKind::InvalidArgument, "temporal_regularized_infer: gamma0 must be >= 0");
  require(x.size() == dict.rows(), ErrorKind::DimensionMismatch, "temporal_regularized_infer: signal rows");
  require(p.cols() == dict.cols() && prev.size() == dict.cols() && prev2.size() == dict.cols(),
          ErrorKind::DimensionMismatch, "temporal_regularized_infer: code lengths");
  require(x.allFinite(), ErrorKind::NonFinite, "temporal_regularized_infer: signal not finite");
  check_unit_columns(dict);
  const Vector predicted = linear_prediction(prev, prev2);
  std::vector<LeastSquaresTerm> terms{{&dict, x, 1.0}};
  if (gamma0 > 0.0) terms.push_back({&p, p * predicted, gamma0});
  NonNegativeQuadratic problem(std::move(terms), Vector::Constant(dict.cols(), lambda));
  const Vector init = gamma0 > 0.0 ? Vector(predicted.cwiseMax(0.0)) : Vector(Vector::Zero(dict.cols()));
  return solve_nonnegative(problem, init, opts);
}

/// Lawson-Hanson non-negative least squares, min ||b - A a||^2 s.t. a >= 0.
/// Intended for small column counts.
inline Vector nnls(const Matrix& a, const Vector& b, int max_outer = 0) {
  require(a.rows() == b.size(), ErrorKind::DimensionMismatch, "nnls: rows");
  const Index n = a.cols();
  if (max_outer <= 0) max_outer = static_cast<int>(3 * n + 10);
  Vector x = Vector::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  const double tol = 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff() * b.cwiseAbs().maxCoeff()) *
                     static_cast<double>(std::max<Index>(1, a.rows()));

  auto solve_passive = [&]() {
    std::vector<Index> idx;
    for (Index j = 0; j < n; ++j)
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    Matrix sub(a.rows(), static_cast<Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) sub.col(static_cast<Index>(j)) = a.col(idx[j]);
    Vector s_sub = sub.colPivHouseholderQr().solve(b);
    Vector s = Vector::Zero(n);
    for (std::size_t j = 0; j < idx.size(); ++j) s[idx[j]] = s_sub[static_cast<Index>(j)];
    return s;
  };

  for (int outer = 0; outer < max_outer; ++outer) {
    const Vector w = a.transpose() * (b - a * x);
    Index best = -1;
    double best_w = tol;
    for (Index j = 0; j < n; ++j)
      if (!passive[static_cast<std::size_t>(j)] && w[j] > best_w) {
        best_w = w[j];
        best = j;
      }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;

    for (int inner = 0; inner <= n; ++inner) {
      const Vector s = solve_passive();
      bool feasible = true;
      for (Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && s[j] <= 0.0) feasible = false;
      if (feasible) {
        x = s;
        break;
      }
      double step = 1.0;
      for (Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && s[j] <= 0.0)
          step = std::min(step, x[j] / (x[j] - s[j]));
      x += step * (s - x);
      for (Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && x[j] <= 1e-15) {
          passive[static_cast<std::size_t>(j)] = false;
          x[j] = 0.0;
        }
    }
  }
  return x.cwiseMax(0.0);
}

/// Indices of the k columns of `landmarks` nearest to x (Euclidean),
/// nearest first; ties broken by index.
inline std::vector<Index> nearest_columns(const Vector& x, const Matrix& landmarks, Index k) {
  std::vector<std::pair<double, Index>> dist(static_cast<std::size_t>(landmarks.cols()));
  for (Index j = 0; j < landmarks.cols(); ++j)
    dist[static_cast<std::size_t>(j)] = {(landmarks.col(j) - x).squaredNorm(), j};
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
  std::vector<Index> out(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = dist[static_cast<std::size_t>(i)].second;
  return out;
}

/// Non-negative least-squares interpolation of x from its k nearest landmarks.
inline SparseCode knn_interpolate(const Vector& x, const Matrix& landmarks, Index k,
                                  double activation_floor = 1e-8) {
  require(k >= 1, ErrorKind::InvalidArgument, "knn_interpolate: k must be >= 1");
  require(k <= landmarks.cols(), ErrorKind::InvalidArgument, "knn_interpolate: k exceeds landmark count");
  require(x.size() == landmarks.rows(), ErrorKind::DimensionMismatch, "knn_interpolate: point dimension");
  const std::vector<Index> nn = nearest_columns(x, landmarks, k);

  Matrix local(landmarks.rows(), k);
  for (Index i = 0; i < k; ++i) local.col(i) = landmarks.col(nn[static_cast<std::size_t>(i)]);
  if (k >= 2) {
    bool identical = true;
    for (Index i = 1; i < k && identical; ++i) identical = local.col(i) == local.col(0);
    require(!identical, ErrorKind::DegenerateNeighborhood, "knn_interpolate: all neighbours coincide");
  }
  const Vector local_code = nnls(local, x);
  Vector values = Vector::Zero(landmarks.cols());
  for (Index i = 0; i < k; ++i) values[nn[static_cast<std::size_t>(i)]] = local_code[i];
  return SparseCode::from_values(std::move(values), activation_floor);
}

}  // namespace smt
