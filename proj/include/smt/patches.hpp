#pragma once

// Patch sequences from frame streams, and synthetic moving-feature patches.

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "smt/error.hpp"
#include "smt/log.hpp"
#include "smt/numerics.hpp"
#include "smt/parallel.hpp"
#include "smt/random.hpp"
#include "smt/sequence.hpp"
#include "smt/whitening.hpp"

namespace smt {

/// Column-major flattening of a square patch.
inline Vector flatten_patch(const Matrix& patch) { return Eigen::Map<const Vector>(patch.data(), patch.size()); }

inline Matrix unflatten_patch(const Vector& v, Index side) {
  require(v.size() == side * side, ErrorKind::SizeMismatch, "unflatten_patch: size");
  return Eigen::Map<const Matrix>(v.data(), side, side);
}

/// Fixed patch x patch windows on a stride grid, followed across
/// consecutive frames. Each window yields chunks of chunk_len frames; a
/// shorter tail of >= 3 frames is kept, shorter tails are dropped with a
/// warning. Columns are ordered window-major, then time.
inline SequenceBatch extract_patch_sequences(const std::vector<Matrix>& frames, Index patch = 20, Index stride = 20,
                                             Index chunk_len = 9) {
  require(!frames.empty(), ErrorKind::EmptyStream, "extract_patch_sequences: no frames");
  require(patch >= 1 && stride >= 1, ErrorKind::InvalidArgument, "extract_patch_sequences: patch and stride >= 1");
  require(chunk_len >= 3, ErrorKind::ChunkTooShort, "extract_patch_sequences: chunk_len must be >= 3");
  const Index rows = frames[0].rows(), cols = frames[0].cols();
  for (const auto& f : frames)
    require(f.rows() == rows && f.cols() == cols, ErrorKind::SizeMismatch, "extract_patch_sequences: frame sizes differ");
  require(rows >= patch && cols >= patch, ErrorKind::SizeMismatch, "extract_patch_sequences: frame smaller than patch");

  const auto num_frames = static_cast<Index>(frames.size());
  std::vector<std::pair<Index, Index>> spans;
  for (Index b = 0; b < num_frames; b += chunk_len) {
    const Index e = std::min(num_frames, b + chunk_len);
    if (e - b >= 3)
      spans.emplace_back(b, e);
    else
      log_warning("dropping " + std::to_string(e - b) + "-frame tail chunk (need >= 3)");
  }
  require(!spans.empty(), ErrorKind::ChunkTooShort, "extract_patch_sequences: fewer than 3 frames");

  std::vector<std::pair<Index, Index>> windows;
  for (Index c = 0; c + patch <= cols; c += stride)
    for (Index r = 0; r + patch <= rows; r += stride) windows.emplace_back(r, c);

  Index per_window = 0;
  for (const auto& s : spans) per_window += s.second - s.first;
  SequenceBatch out;
  out.signals.resize(patch * patch, static_cast<Index>(windows.size()) * per_window);
  Index col = 0;
  for (const auto& [r, c] : windows)
    for (const auto& [b, e] : spans) {
      out.chunk_starts.push_back(col);
      for (Index t = b; t < e; ++t) {
        const Matrix block = frames[static_cast<std::size_t>(t)].block(r, c, patch, patch);
        out.signals.col(col++) = flatten_patch(block);
      }
    }
  return out;
}

enum class FeatureKind { Gabor, Blob };

struct MovingFeatureConfig {
  Index patch = 20;
  Index num_sequences = 5000;
  Index length = 9;
  std::vector<FeatureKind> features{FeatureKind::Gabor};
  double max_speed = 0.75;     // pixels per frame
  double max_rotation = 0.05;  // radians per frame
  double wavelength_min = 4.0, wavelength_max = 8.0;
  double sigma_min = 1.5, sigma_max = 3.0;
  // When set, every track stays within inside_margin pixels of the border:
  // the speed is capped to fit and the start is drawn from the feasible box.
  bool keep_inside = false;
  double inside_margin = 2.0;
  bool whiten = true;
  unsigned threads = 1;
};

struct FeatureTrack {
  Index sequence;
  Index frame;
  double x;
  double y;
  double theta;
};

struct MovingFeatureData {
  SequenceBatch batch;
  std::vector<FeatureTrack> tracks;
  std::optional<WhiteningSpec> whitening;
};

/// Gabor (or Gaussian blob) centred at (cx, cy) in pixel coordinates, x
/// along columns; the carrier varies along direction theta.
inline Matrix render_feature(Index side, FeatureKind kind, double cx, double cy, double theta, double wavelength,
                             double sigma, double phase) {
  Matrix m(side, side);
  const double c = std::cos(theta), s = std::sin(theta);
  for (Index y = 0; y < side; ++y)
    for (Index x = 0; x < side; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double env = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      m(y, x) = kind == FeatureKind::Blob ? env
                                          : env * std::cos(2.0 * 3.14159265358979323846 * (dx * c + dy * s) / wavelength + phase);
    }
  return m;
}

/// Sequence s draws from shard_seed(seed, s): a feature starting in the
/// central half of the patch with constant velocity and angular velocity.
inline MovingFeatureData make_moving_feature_sequences(const MovingFeatureConfig& cfg, std::uint64_t seed) {
  require(cfg.patch >= 2 && cfg.length >= 3 && cfg.num_sequences >= 1 && !cfg.features.empty(),
          ErrorKind::InvalidArgument, "make_moving_feature_sequences: bad config");
  require(!cfg.keep_inside || static_cast<double>(cfg.patch) - 1.0 > 2.0 * cfg.inside_margin, ErrorKind::InvalidArgument,
          "make_moving_feature_sequences: inside_margin leaves no room");
  MovingFeatureData out;
  if (cfg.whiten) out.whitening = scaled_whitening(cfg.patch);
  const Index n = cfg.num_sequences, len = cfg.length;
  out.batch.signals.resize(cfg.patch * cfg.patch, n * len);
  out.tracks.resize(static_cast<std::size_t>(n * len));
  for (Index s = 0; s < n; ++s) out.batch.chunk_starts.push_back(s * len);

  parallel_for(static_cast<std::size_t>(n), cfg.threads, [&](std::size_t si) {
    const auto s = static_cast<Index>(si);
    Rng rng(shard_seed(seed, si));
    const double side = static_cast<double>(cfg.patch);
    std::uniform_real_distribution<double> pos(0.25 * side, 0.75 * side);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> angle(0.0, 3.14159265358979323846);
    const FeatureKind kind = cfg.features[static_cast<std::size_t>(rng() % cfg.features.size())];
    double x0 = pos(rng), y0 = pos(rng);
    const double theta0 = angle(rng);
    const double heading = 2.0 * angle(rng);
    double speed = cfg.max_speed * unit(rng);
    if (cfg.keep_inside) {
      const double lo = cfg.inside_margin, hi = side - 1.0 - cfg.inside_margin, span = static_cast<double>(len - 1);
      const double reach = std::max(std::abs(std::cos(heading)), std::abs(std::sin(heading))) * speed * span;
      if (reach > hi - lo) speed *= (hi - lo) / reach;
      const double dx = speed * std::cos(heading) * span, dy = speed * std::sin(heading) * span;
      x0 = lo - std::min(0.0, dx) + unit(rng) * (hi - lo - std::abs(dx));
      y0 = lo - std::min(0.0, dy) + unit(rng) * (hi - lo - std::abs(dy));
    }
    const double vx = speed * std::cos(heading), vy = speed * std::sin(heading);
    const double omega = cfg.max_rotation * (2.0 * unit(rng) - 1.0);
    const double wavelength = cfg.wavelength_min + (cfg.wavelength_max - cfg.wavelength_min) * unit(rng);
    const double sigma = cfg.sigma_min + (cfg.sigma_max - cfg.sigma_min) * unit(rng);
    const double phase = 2.0 * angle(rng);
    for (Index t = 0; t < len; ++t) {
      const double td = static_cast<double>(t);
      const double x = x0 + vx * td, y = y0 + vy * td, theta = theta0 + omega * td;
      Matrix frame = render_feature(cfg.patch, kind, x, y, theta, wavelength, sigma, phase);
      if (out.whitening) frame = whiten_frame(frame, *out.whitening);
      const Index col = s * len + t;
      out.batch.signals.col(col) = flatten_patch(frame);
      out.tracks[static_cast<std::size_t>(col)] = {s, t, x, y, theta};
    }
  });
  return out;
}

inline void write_tracks_csv(std::ostream& out, const std::vector<FeatureTrack>& tracks) {
  out << "sequence,frame,x,y,theta\n";
  out.precision(17);
  for (const auto& t : tracks) out << t.sequence << ',' << t.frame << ',' << t.x << ',' << t.y << ',' << t.theta << '\n';
}

}  // namespace smt
