#pragma once

// Dense symmetric eigensolver, inverse square root and second-moment estimation.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "smt/error.hpp"

namespace smt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Eigenpairs of a symmetric matrix; eigenvalues ascending, column i of
/// `eigenvectors` pairs with `eigenvalues[i]`.
struct SymEigResult {
  Vector eigenvalues;
  Matrix eigenvectors;
};

namespace detail {

// Householder reduction to tridiagonal form (EISPACK tred2). On exit `z`
// holds the accumulated orthogonal transform, `d` the diagonal and `e` the
// sub-diagonal in e[1..n-1].
inline void householder_tridiagonalize(Matrix& z, Vector& d, Vector& e) {
  const Index n = z.rows();
  for (Index j = 0; j < n; ++j) d[j] = z(n - 1, j);

  for (Index i = n - 1; i > 0; --i) {
    double scale = 0.0;
    double h = 0.0;
    for (Index k = 0; k < i; ++k) scale += std::abs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (Index j = 0; j < i; ++j) {
        d[j] = z(i - 1, j);
        z(i, j) = 0.0;
        z(j, i) = 0.0;
      }
    } else {
      for (Index k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (Index j = 0; j < i; ++j) e[j] = 0.0;

      for (Index j = 0; j < i; ++j) {
        f = d[j];
        z(j, i) = f;
        g = e[j] + z(j, j) * f;
        for (Index k = j + 1; k <= i - 1; ++k) {
          g += z(k, j) * d[k];
          e[k] += z(k, j) * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (Index j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (Index j = 0; j < i; ++j) e[j] -= hh * d[j];
      for (Index j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        for (Index k = j; k <= i - 1; ++k) z(k, j) -= (f * e[k] + g * d[k]);
        d[j] = z(i - 1, j);
        z(i, j) = 0.0;
      }
    }
    d[i] = h;
  }

  for (Index i = 0; i < n - 1; ++i) {
    z(n - 1, i) = z(i, i);
    z(i, i) = 1.0;
    const double h = d[i + 1];
    if (h != 0.0) {
      for (Index k = 0; k <= i; ++k) d[k] = z(k, i + 1) / h;
      for (Index j = 0; j <= i; ++j) {
        double g = 0.0;
        for (Index k = 0; k <= i; ++k) g += z(k, i + 1) * z(k, j);
        for (Index k = 0; k <= i; ++k) z(k, j) -= g * d[k];
      }
    }
    for (Index k = 0; k <= i; ++k) z(k, i + 1) = 0.0;
  }
  for (Index j = 0; j < n; ++j) {
    d[j] = z(n - 1, j);
    z(n - 1, j) = 0.0;
  }
  z(n - 1, n - 1) = 1.0;
  e[0] = 0.0;
}

// Implicit-shift QL on the tridiagonal (d, e), accumulating rotations into z
// (EISPACK tql2).
inline void implicit_ql(Matrix& z, Vector& d, Vector& e) {
  const Index n = z.rows();
  for (Index i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;

  double f = 0.0;
  double tst1 = 0.0;
  const double eps = std::numeric_limits<double>::epsilon();
  constexpr int kMaxSweeps = 64;

  for (Index l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    Index m = l;
    while (m < n) {
      if (std::abs(e[m]) <= eps * tst1) break;
      ++m;
    }
    if (m > l) {
      int sweeps = 0;
      do {
        if (++sweeps > kMaxSweeps)
          throw Error(ErrorKind::NonFinite, "sym_eig: QL iteration did not converge");
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (Index i = l + 2; i < n; ++i) d[i] -= h;
        f += h;

        p = d[m];
        double c = 1.0, c2 = 1.0, c3 = 1.0;
        const double el1 = e[l + 1];
        double s = 0.0, s2 = 0.0;
        for (Index i = m - 1; i >= l; --i) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[i];
          h = c * p;
          r = std::hypot(p, e[i]);
          e[i + 1] = s * r;
          s = e[i] / r;
          c = p / r;
          p = c * d[i] - s * g;
          d[i + 1] = h + s * (c * g + s * d[i]);
          for (Index k = 0; k < n; ++k) {
            h = z(k, i + 1);
            z(k, i + 1) = s * z(k, i) + c * h;
            z(k, i) = c * z(k, i) - s * h;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }
}

}  // namespace detail

/// Relative asymmetry max|M - M^T| / max(1, max|M|).
inline double relative_asymmetry(const Matrix& m) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() / scale;
}

/// Symmetric eigendecomposition via Householder tridiagonalization and
/// implicit-shift QL. Eigenvalues are returned in ascending order.
inline SymEigResult sym_eig(const Matrix& m) {
  require(m.rows() == m.cols(), ErrorKind::DimensionMismatch, "sym_eig: matrix must be square");
  require(all_finite(m), ErrorKind::NonFinite, "sym_eig: matrix has NaN/Inf entries");
  const Index n = m.rows();
  if (n == 0) return {};
  require(relative_asymmetry(m) <= 1e-9, ErrorKind::NonSymmetric,
          "sym_eig: matrix is not symmetric");

  Matrix z = 0.5 * (m + m.transpose());
  Vector d(n), e(n);
  if (n == 1) {
    return {Vector::Constant(1, z(0, 0)), Matrix::Identity(1, 1)};
  }
  detail::householder_tridiagonalize(z, d, e);
  detail::implicit_ql(z, d, e);

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return d[a] < d[b]; });

  SymEigResult out{Vector(n), Matrix(n, n)};
  for (Index i = 0; i < n; ++i) {
    out.eigenvalues[i] = d[order[static_cast<std::size_t>(i)]];
    out.eigenvectors.col(i) = z.col(order[static_cast<std::size_t>(i)]);
  }
  return out;
}

/// Q diag(f(lambda)) Q^T.
template <typename Fn>
Matrix spectral_map(const SymEigResult& eig, Fn&& fn) {
  Vector mapped = eig.eigenvalues.unaryExpr(fn);
  return eig.eigenvectors * mapped.asDiagonal() * eig.eigenvectors.transpose();
}

/// Returns S = (M + ridge I)^{-1/2}, symmetric.
inline Matrix inv_sqrt(const Matrix& m, double ridge = 0.0) {
  require(ridge >= 0.0, ErrorKind::InvalidArgument, "inv_sqrt: ridge must be non-negative");
  Matrix shifted = m;
  shifted.diagonal().array() += ridge;
  const SymEigResult eig = sym_eig(shifted);
  if (eig.eigenvalues.size() == 0) return Matrix();
  const double smallest = eig.eigenvalues[0];
  require(smallest > 0.0, ErrorKind::NotPositiveDefinite,
          "inv_sqrt: smallest eigenvalue " + std::to_string(smallest) + " is not positive");
  Matrix s = spectral_map(eig, [](double v) { return 1.0 / std::sqrt(v); });
  return 0.5 * (s + s.transpose());
}

/// (Regularized) second-moment matrix of coefficient columns; used as the
/// whitening metric V.
struct MomentMatrix {
  Matrix matrix;
  std::size_t sample_count = 0;
  double ridge = 0.0;

  Index dim() const { return matrix.rows(); }
};

/// scale * trace(V) / dim; falls back to 1e-12 for an all-zero matrix.
inline double default_ridge(const Matrix& v, double scale = 1e-6) {
  if (v.rows() == 0) return 0.0;
  const double r = scale * v.trace() / static_cast<double>(v.rows());
  return r > 0.0 ? r : 1e-12;
}

/// Streaming accumulator for sum(a a^T), sum(a) and count; shards merge by
/// addition.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(Index dim = 0) : outer_(Matrix::Zero(dim, dim)), sum_(Vector::Zero(dim)) {}

  Index dim() const { return sum_.size(); }
  std::size_t count() const { return count_; }

  void add_columns(const Matrix& a) {
    require(a.rows() == dim(), ErrorKind::DimensionMismatch, "MomentAccumulator: row count");
    outer_.selfadjointView<Eigen::Lower>().rankUpdate(a);
    sum_ += a.rowwise().sum();
    count_ += static_cast<std::size_t>(a.cols());
  }

  void merge(const MomentAccumulator& other) {
    require(other.dim() == dim(), ErrorKind::DimensionMismatch, "MomentAccumulator: merge dims");
    outer_ += other.outer_;
    sum_ += other.sum_;
    count_ += other.count_;
  }

  Vector mean() const {
    require(count_ > 0, ErrorKind::EmptyBatch, "MomentAccumulator: no samples");
    return sum_ / static_cast<double>(count_);
  }

  /// ridge < 0 selects default_ridge(V, relative_ridge).
  MomentMatrix finish(double ridge, bool center, double relative_ridge = 1e-6) const {
    require(count_ > 0, ErrorKind::EmptyBatch, "second_moment: no samples");
    const double t = static_cast<double>(count_);
    Matrix full = outer_.selfadjointView<Eigen::Lower>();
    Matrix m = full / t;
    if (center) {
      const Vector mu = sum_ / t;
      m -= mu * mu.transpose();
    }
    m = 0.5 * (m + m.transpose());
    if (ridge < 0.0) ridge = default_ridge(m, relative_ridge);
    m.diagonal().array() += ridge;
    return {std::move(m), count_, ridge};
  }

 private:
  Matrix outer_;  // lower triangle only
  Vector sum_;
  std::size_t count_ = 0;
};

/// (1/T) A A^T (+ ridge I), optionally mean-subtracted. ridge < 0 selects
/// default_ridge().
inline MomentMatrix second_moment(const Matrix& a, double ridge = 0.0, bool center = false) {
  require(a.cols() > 0, ErrorKind::EmptyBatch, "second_moment: T = 0");
  MomentAccumulator acc(a.rows());
  acc.add_columns(a);
  return acc.finish(ridge, center);
}

/// Largest eigenvalue of the PSD operator x -> apply(x) by power iteration
/// from a fixed start vector.
template <typename Apply>
double power_iteration(Index dim, Apply&& apply, int iterations = 50) {
  if (dim == 0) return 0.0;
  Vector v = Vector::Ones(dim);
  for (Index i = 0; i < dim; ++i) v[i] += 1e-3 * static_cast<double>(i % 7);
  v.normalize();
  double estimate = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Vector w = apply(v);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    estimate = v.dot(w);
    v = w / norm;
  }
  return std::max(estimate, apply(v).norm());
}

}  // namespace smt
