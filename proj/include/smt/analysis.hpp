#pragma once

// Smoothness of code trajectories, affinity groups, needle fits of
// dictionary elements and neighbour statistics.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <ostream>
#include <vector>

#include "smt/error.hpp"
#include "smt/numerics.hpp"
#include "smt/parallel.hpp"
#include "smt/whitening.hpp"

namespace smt {

/// Mean over interior t of ||y_t - y_{t-1}/2 - y_{t+1}/2|| divided by the
/// mean of ||y_t|| over all t. Zero for a series that is affine in t.
inline double smoothness_ratio(const Matrix& series, const std::vector<Index>& chunk_starts) {
  const Index t = series.cols();
  std::vector<Index> starts = chunk_starts;
  if (starts.empty() || starts.front() != 0) starts.insert(starts.begin(), 0);
  double diff = 0.0;
  Index interior = 0;
  for (std::size_t c = 0; c < starts.size(); ++c) {
    const Index b = starts[c];
    const Index e = c + 1 < starts.size() ? starts[c + 1] : t;
    require(e - b >= 3, ErrorKind::ChunkTooShort, "smoothness_ratio: every chunk needs >= 3 steps");
    for (Index k = b + 1; k + 1 < e; ++k) {
      diff += (series.col(k) - 0.5 * series.col(k - 1) - 0.5 * series.col(k + 1)).norm();
      ++interior;
    }
  }
  if (diff == 0.0) return 0.0;
  const double level = series.colwise().norm().mean();
  return (diff / static_cast<double>(interior)) / level;
}

inline double cosine_similarity(const Matrix& p, Index j, Index k) {
  const double nj = p.col(j).norm(), nk = p.col(k).norm();
  require(nj > 0.0 && nk > 0.0, ErrorKind::ZeroColumn, "cosine_similarity: zero column");
  return std::clamp(p.col(j).dot(p.col(k)) / (nj * nk), -1.0, 1.0);
}

struct AffinityGroup {
  Index anchor = 0;
  std::vector<std::pair<Index, double>> neighbors;  // descending similarity
};

/// top_n embedding columns most cosine-similar to the anchor column. Zero
/// columns and the anchor itself are excluded; ties keep index order.
inline AffinityGroup affinity_group(const Matrix& p, Index anchor, Index top_n) {
  require(anchor >= 0 && anchor < p.cols(), ErrorKind::InvalidArgument, "affinity_group: anchor out of range");
  const Vector norms = p.colwise().norm().transpose();
  require(norms[anchor] > 0.0, ErrorKind::ZeroColumn, "affinity_group: anchor has a zero embedding column");
  AffinityGroup g;
  g.anchor = anchor;
  const Vector dots = p.transpose() * p.col(anchor);
  for (Index k = 0; k < p.cols(); ++k)
    if (k != anchor && norms[k] > 0.0)
      g.neighbors.emplace_back(k, std::clamp(dots[k] / (norms[k] * norms[anchor]), -1.0, 1.0));
  std::stable_sort(g.neighbors.begin(), g.neighbors.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (static_cast<Index>(g.neighbors.size()) > top_n) g.neighbors.resize(static_cast<std::size_t>(top_n));
  return g;
}

struct NeedleParams {
  double cx = 0.0, cy = 0.0;  // pixels; x along columns
  double orientation = 0.0;   // radians in [0, pi)
  double length = 0.0;        // 2 sqrt(principal covariance eigenvalue)
  double aspect = 1.0;        // principal / minor eigenvalue
  double kurtosis = 0.0;      // E[r^4] / E[r^2]^2 of the envelope (2 for a Gaussian)
  double explained_variance = 0.0;
  bool fit_ok = false;

  bool well_fit(double min_explained = 0.6) const { return fit_ok && explained_variance >= min_explained; }
};

struct NeedleFitOptions {
  double envelope_sigma = 1.5;
  Index fft_padding = 8;
  // Envelopes with radial kurtosis below this are rejected. Uniform-noise
  // 20x20 patches: median 1.40, max 1.43 over 1000 draws; Gaussian envelope 2.
  double min_kurtosis = 1.5;
  double max_aspect = 100.0;
};

namespace detail {

inline Matrix gaussian_smooth(const Matrix& m, double sigma) {
  const Index radius = static_cast<Index>(std::ceil(3.0 * sigma));
  Vector kernel(2 * radius + 1);
  for (Index i = -radius; i <= radius; ++i) kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  kernel /= kernel.sum();
  auto pass = [&](const Matrix& in, bool along_rows) {
    Matrix out = Matrix::Zero(in.rows(), in.cols());
    for (Index r = 0; r < in.rows(); ++r)
      for (Index c = 0; c < in.cols(); ++c) {
        double acc = 0.0, wsum = 0.0;
        for (Index k = -radius; k <= radius; ++k) {
          const Index rr = along_rows ? r + k : r, cc = along_rows ? c : c + k;
          if (rr < 0 || rr >= in.rows() || cc < 0 || cc >= in.cols()) continue;
          acc += kernel[k + radius] * in(rr, cc);
          wsum += kernel[k + radius];
        }
        out(r, c) = acc / wsum;
      }
    return out;
  };
  return pass(pass(m, true), false);
}

// Wave-vector angle of the largest non-DC amplitude of the zero-padded FFT.
inline double spectral_orientation(const Matrix& element, Index padding) {
  const Index n0 = element.rows() * padding, n1 = element.cols() * padding;
  Matrix padded = Matrix::Zero(n0, n1);
  padded.topLeftCorner(element.rows(), element.cols()) = element;
  const auto count = static_cast<std::size_t>(n0 * n1);
  std::unique_ptr<fftw_complex, FftwFree> buf(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * count)));
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_2d(static_cast<int>(n0), static_cast<int>(n1), buf.get(), buf.get(), FFTW_FORWARD,
                            FFTW_ESTIMATE);
  }
  for (Index i = 0; i < n0; ++i)
    for (Index j = 0; j < n1; ++j) {
      buf.get()[i * n1 + j][0] = padded(i, j);
      buf.get()[i * n1 + j][1] = 0.0;
    }
  fftw_execute(plan);
  double best = -1.0;
  double angle = 0.0;
  for (Index i = 0; i < n0; ++i)
    for (Index j = 0; j < n1; ++j) {
      if (i == 0 && j == 0) continue;
      const double re = buf.get()[i * n1 + j][0], im = buf.get()[i * n1 + j][1];
      const double amp = re * re + im * im;
      if (amp > best) {
        best = amp;
        angle = std::atan2(signed_frequency(i, n0), signed_frequency(j, n1));
      }
    }
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  constexpr double pi = 3.14159265358979323846;
  angle = std::fmod(angle, pi);
  if (angle < 0.0) angle += pi;
  if (angle >= pi) angle -= pi;
  return angle;
}

}  // namespace detail

/// Needle summary of a square (or rectangular) element. Envelope: |element|
/// smoothed by a Gaussian. Centre and covariance: envelope-weighted moments.
/// Orientation: FFT amplitude peak. explained_variance: R^2 of the envelope
/// against a Gaussian with the fitted moments (least-squares gain and offset).
inline NeedleParams needle_fit(const Matrix& element, const NeedleFitOptions& opts = {}) {
  require(element.size() > 0 && element.cwiseAbs().maxCoeff() > 0.0, ErrorKind::ZeroElement,
          "needle_fit: element is zero");
  require(element.allFinite(), ErrorKind::NonFinite, "needle_fit: element not finite");
  const Matrix env = detail::gaussian_smooth(element.cwiseAbs(), opts.envelope_sigma);
  const double mass = env.sum();
  NeedleParams out;
  double cx = 0.0, cy = 0.0;
  for (Index r = 0; r < env.rows(); ++r)
    for (Index c = 0; c < env.cols(); ++c) {
      cx += env(r, c) * static_cast<double>(c);
      cy += env(r, c) * static_cast<double>(r);
    }
  cx /= mass;
  cy /= mass;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (Index r = 0; r < env.rows(); ++r)
    for (Index c = 0; c < env.cols(); ++c) {
      const Eigen::Vector2d d(static_cast<double>(c) - cx, static_cast<double>(r) - cy);
      cov += env(r, c) * d * d.transpose();
    }
  cov /= mass;
  out.cx = cx;
  out.cy = cy;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const double lmin = std::max(eig.eigenvalues()[0], 0.0), lmax = std::max(eig.eigenvalues()[1], 0.0);
  out.length = 2.0 * std::sqrt(lmax);
  out.aspect = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();

  // Radial kurtosis in the Mahalanobis metric, and the Gaussian-fit R^2.
  const Eigen::Matrix2d prec = lmin > 0.0 ? Eigen::Matrix2d(cov.inverse()) : Eigen::Matrix2d::Zero();
  double m2 = 0.0, m4 = 0.0;
  Vector g(env.size()), e(env.size());
  Index k = 0;
  for (Index c = 0; c < env.cols(); ++c)
    for (Index r = 0; r < env.rows(); ++r, ++k) {
      const Eigen::Vector2d d(static_cast<double>(c) - cx, static_cast<double>(r) - cy);
      const double q = d.dot(prec * d);
      m2 += env(r, c) * q;
      m4 += env(r, c) * q * q;
      g[k] = std::exp(-0.5 * q);
      e[k] = env(r, c);
    }
  m2 /= mass;
  m4 /= mass;
  out.kurtosis = m2 > 0.0 ? m4 / (m2 * m2) : 0.0;

  Matrix design(env.size(), 2);
  design.col(0) = g;
  design.col(1).setOnes();
  const Vector coef = design.colPivHouseholderQr().solve(e);
  const double sst = (e.array() - e.mean()).square().sum();
  out.explained_variance = sst > 0.0 ? 1.0 - (e - design * coef).squaredNorm() / sst : 0.0;

  out.orientation = detail::spectral_orientation(element, opts.fft_padding);
  const bool inside = cx >= 0.0 && cy >= 0.0 && cx <= static_cast<double>(element.cols() - 1) &&
                      cy <= static_cast<double>(element.rows() - 1);
  out.fit_ok = lmin > 0.0 && inside && out.kurtosis >= opts.min_kurtosis && out.aspect <= opts.max_aspect;
  return out;
}

/// min(|a - b|, pi - |a - b|) for orientations in [0, pi).
inline double angular_distance(double a, double b) {
  constexpr double pi = 3.14159265358979323846;
  const double d = std::fabs(a - b);
  return std::min(d, pi - d);
}

/// Needle fits of every dictionary column reshaped to side x side.
inline std::vector<NeedleParams> fit_dictionary_needles(const Matrix& atoms, Index side,
                                                        const NeedleFitOptions& opts = {}, unsigned threads = 1) {
  require(atoms.rows() == side * side, ErrorKind::SizeMismatch, "fit_dictionary_needles: atom size");
  std::vector<NeedleParams> out(static_cast<std::size_t>(atoms.cols()));
  parallel_for(out.size(), threads, [&](std::size_t j) {
    const Vector a = atoms.col(static_cast<Index>(j));
    out[j] = needle_fit(Eigen::Map<const Matrix>(a.data(), side, side), opts);
  });
  return out;
}

struct NeighborStatsRow {
  Index element = 0;
  double embedding_dlength = 0.0;
  double embedding_dangle = 0.0;
  double pixel_dlength = 0.0;
  double pixel_dangle = 0.0;
};

struct NeighborStats {
  std::vector<NeighborStatsRow> rows;
  NeighborStatsRow aggregate;  // means over rows; element = -1
};

/// For the top_m well-fit elements (by explained variance), mean |dLength|
/// and angular distance to the top_k neighbours among well-fit elements in
/// embedding space (cosine of P columns) and pixel space (Euclidean on atoms).
inline NeighborStats neighbor_similarity_stats(const Matrix& atoms, const Matrix& p,
                                               const std::vector<NeedleParams>& needles, Index top_m, Index top_k,
                                               double min_explained = 0.6) {
  require(atoms.cols() == p.cols() && static_cast<Index>(needles.size()) == atoms.cols(),
          ErrorKind::DimensionMismatch, "neighbor_similarity_stats: element counts differ");
  std::vector<Index> well;
  const Vector pnorm = p.colwise().norm().transpose();
  for (Index j = 0; j < atoms.cols(); ++j)
    if (needles[static_cast<std::size_t>(j)].well_fit(min_explained) && pnorm[j] > 0.0) well.push_back(j);
  require(top_m >= 1 && top_m <= static_cast<Index>(well.size()), ErrorKind::InsufficientWellFit,
          "neighbor_similarity_stats: " + std::to_string(well.size()) + " well-fit elements, need " +
              std::to_string(top_m));
  require(top_k >= 1 && top_k < static_cast<Index>(well.size()), ErrorKind::InsufficientWellFit,
          "neighbor_similarity_stats: top_k must be below the well-fit count");
  std::vector<Index> selected = well;
  std::stable_sort(selected.begin(), selected.end(), [&](Index a, Index b) {
    return needles[static_cast<std::size_t>(a)].explained_variance > needles[static_cast<std::size_t>(b)].explained_variance;
  });
  selected.resize(static_cast<std::size_t>(top_m));

  NeighborStats out;
  out.aggregate.element = -1;
  for (Index j : selected) {
    const NeedleParams& nj = needles[static_cast<std::size_t>(j)];
    std::vector<std::pair<double, Index>> emb, pix;
    for (Index k : well) {
      if (k == j) continue;
      emb.emplace_back(-p.col(j).dot(p.col(k)) / (pnorm[j] * pnorm[k]), k);
      pix.emplace_back((atoms.col(j) - atoms.col(k)).norm(), k);
    }
    std::stable_sort(emb.begin(), emb.end());
    std::stable_sort(pix.begin(), pix.end());
    NeighborStatsRow row;
    row.element = j;
    for (Index i = 0; i < top_k; ++i) {
      const NeedleParams& ne = needles[static_cast<std::size_t>(emb[static_cast<std::size_t>(i)].second)];
      const NeedleParams& np = needles[static_cast<std::size_t>(pix[static_cast<std::size_t>(i)].second)];
      row.embedding_dlength += std::fabs(ne.length - nj.length);
      row.embedding_dangle += angular_distance(ne.orientation, nj.orientation);
      row.pixel_dlength += std::fabs(np.length - nj.length);
      row.pixel_dangle += angular_distance(np.orientation, nj.orientation);
    }
    const double kd = static_cast<double>(top_k);
    row.embedding_dlength /= kd;
    row.embedding_dangle /= kd;
    row.pixel_dlength /= kd;
    row.pixel_dangle /= kd;
    out.rows.push_back(row);
  }
  const double md = static_cast<double>(out.rows.size());
  for (const auto& r : out.rows) {
    out.aggregate.embedding_dlength += r.embedding_dlength / md;
    out.aggregate.embedding_dangle += r.embedding_dangle / md;
    out.aggregate.pixel_dlength += r.pixel_dlength / md;
    out.aggregate.pixel_dangle += r.pixel_dangle / md;
  }
  return out;
}

}  // namespace smt
