#pragma once

// Unit-disc toy world: uniformly placed landmarks and straight-line
// trajectories coded by KNN interpolation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <random>
#include <vector>

#include "smt/error.hpp"
#include "smt/numerics.hpp"
#include "smt/parallel.hpp"
#include "smt/random.hpp"
#include "smt/recovery.hpp"
#include "smt/sequence.hpp"
#include "smt/sparse.hpp"

namespace smt {

struct Trajectory {
  Eigen::Vector2d start;
  Eigen::Vector2d velocity;
  Index length = 0;

  Eigen::Vector2d at(Index t) const { return start + static_cast<double>(t) * velocity; }
};

struct DiscWorld {
  Matrix landmarks;  // 2 x num_landmarks
  std::vector<Trajectory> trajectories;

  Index num_landmarks() const { return landmarks.cols(); }

  /// Mean distance from each landmark to its nearest other landmark.
  double mean_spacing() const {
    double total = 0.0;
    for (Index j = 0; j < landmarks.cols(); ++j) {
      double best = std::numeric_limits<double>::infinity();
      for (Index k = 0; k < landmarks.cols(); ++k)
        if (k != j) best = std::min(best, (landmarks.col(j) - landmarks.col(k)).norm());
      total += best;
    }
    return total / static_cast<double>(landmarks.cols());
  }
};

/// Uniform point in the closed unit disc by rejection sampling.
inline Eigen::Vector2d sample_disc_point(Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    const Eigen::Vector2d p(u(rng), u(rng));
    if (p.squaredNorm() <= 1.0) return p;
  }
}

inline DiscWorld make_disc_world(Index num_landmarks = 300, std::uint64_t seed = 1) {
  require(num_landmarks >= 1, ErrorKind::InvalidArgument, "make_disc_world: need at least one landmark");
  Rng rng(seed);
  DiscWorld world;
  world.landmarks.resize(2, num_landmarks);
  for (Index j = 0; j < num_landmarks; ++j) world.landmarks.col(j) = sample_disc_point(rng);
  return world;
}

struct DiscTrajectoryConfig {
  Index k = 4;
  Index num_trajectories = 2000;
  Index steps = 8;
  double speed_min = 0.02;
  double speed_max = 0.1;
  unsigned threads = 1;
};

struct DiscCodes {
  SequenceBatch codes;  // num_landmarks x T, one chunk per trajectory
  Matrix positions;     // 2 x T
};

/// Straight line from a uniform start with uniform direction and speed,
/// truncated when it leaves the disc; redrawn until it has >= 3 points.
inline Trajectory sample_trajectory(Rng& rng, const DiscTrajectoryConfig& cfg) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * 3.14159265358979323846);
  std::uniform_real_distribution<double> speed(cfg.speed_min, cfg.speed_max);
  for (;;) {
    Trajectory tr;
    tr.start = sample_disc_point(rng);
    const double a = angle(rng);
    tr.velocity = speed(rng) * Eigen::Vector2d(std::cos(a), std::sin(a));
    tr.length = 0;
    while (tr.length < cfg.steps && tr.at(tr.length).squaredNorm() <= 1.0) ++tr.length;
    if (tr.length >= 3) return tr;
  }
}

/// Codes every trajectory point with knn_interpolate against the landmarks.
/// Trajectory i draws from shard_seed(seed, i). Replaces world.trajectories.
inline DiscCodes disc_trajectory_codes(DiscWorld& world, const DiscTrajectoryConfig& cfg, std::uint64_t seed) {
  require(cfg.steps >= 3, ErrorKind::ChunkTooShort, "disc_trajectory_codes: steps must be >= 3");
  require(cfg.num_trajectories >= 1, ErrorKind::InvalidArgument, "disc_trajectory_codes: no trajectories");
  require(cfg.speed_min > 0.0 && cfg.speed_max >= cfg.speed_min, ErrorKind::InvalidArgument,
          "disc_trajectory_codes: bad speed range");
  const auto n = static_cast<std::size_t>(cfg.num_trajectories);
  world.trajectories.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(shard_seed(seed, i));
    world.trajectories[i] = sample_trajectory(rng, cfg);
  }

  std::vector<Index> starts(n);
  Index total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    starts[i] = total;
    total += world.trajectories[i].length;
  }
  DiscCodes out;
  out.codes.signals = Matrix::Zero(world.num_landmarks(), total);
  out.codes.chunk_starts = starts;
  out.positions.resize(2, total);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    const Trajectory& tr = world.trajectories[i];
    for (Index t = 0; t < tr.length; ++t) {
      const Index col = starts[i] + t;
      const Eigen::Vector2d p = tr.at(t);
      out.positions.col(col) = p;
      out.codes.signals.col(col) = knn_interpolate(p, world.landmarks, cfg.k).values;
    }
  });
  return out;
}

/// Planted h-sparse function on the disc: the sum of KNN codes of h points
/// at pairwise distance >= min_separation.
struct PlantedFunction {
  Matrix points;  // 2 x h
  Vector code;
};

inline PlantedFunction plant_function(const DiscWorld& world, Index h, Index k, double min_separation, Rng& rng) {
  require(h >= 1, ErrorKind::InvalidArgument, "plant_function: h must be >= 1");
  PlantedFunction out;
  out.points.resize(2, h);
  for (int attempt = 0;; ++attempt) {
    require(attempt < 100000, ErrorKind::InvalidArgument, "plant_function: separation unattainable");
    bool ok = true;
    for (Index i = 0; i < h && ok; ++i) {
      out.points.col(i) = sample_disc_point(rng);
      for (Index j = 0; j < i && ok; ++j) ok = (out.points.col(i) - out.points.col(j)).norm() >= min_separation;
    }
    if (ok) break;
  }
  out.code = Vector::Zero(world.num_landmarks());
  for (Index i = 0; i < h; ++i) out.code += knn_interpolate(out.points.col(i), world.landmarks, k).values;
  return out;
}

struct MassCluster {
  Eigen::Vector2d center;
  double mass = 0.0;
};

/// Greedy clustering of recovered mass: landmarks in descending mass order
/// join the first cluster whose seed lies within `radius`, else open a new
/// one. Clusters below min_fraction of the total mass are discarded.
inline std::vector<MassCluster> cluster_mass(const Vector& alpha, const Matrix& landmarks, double radius,
                                             double min_fraction = 0.05) {
  std::vector<Index> order;
  for (Index j = 0; j < alpha.size(); ++j)
    if (alpha[j] > 0.0) order.push_back(j);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return alpha[a] > alpha[b]; });
  std::vector<Eigen::Vector2d> seeds;
  std::vector<MassCluster> clusters;
  for (Index j : order) {
    const Eigen::Vector2d l = landmarks.col(j);
    std::size_t c = 0;
    while (c < seeds.size() && (seeds[c] - l).norm() > radius) ++c;
    if (c == seeds.size()) {
      seeds.push_back(l);
      clusters.push_back({Eigen::Vector2d::Zero(), 0.0});
    }
    clusters[c].center += alpha[j] * l;
    clusters[c].mass += alpha[j];
  }
  const double total = alpha.cwiseMax(0.0).sum();
  std::vector<MassCluster> kept;
  for (auto& c : clusters) {
    c.center /= c.mass;
    if (c.mass >= min_fraction * total) kept.push_back(c);
  }
  return kept;
}

/// Number of planted points matched one-to-one to clusters by greedy
/// nearest-pair matching within `radius`.
inline Index greedy_match(const Matrix& planted, const std::vector<MassCluster>& clusters, double radius) {
  struct Pair {
    double d;
    Index p;
    std::size_t c;
  };
  std::vector<Pair> pairs;
  for (Index p = 0; p < planted.cols(); ++p)
    for (std::size_t c = 0; c < clusters.size(); ++c)
      pairs.push_back({(planted.col(p) - clusters[c].center).norm(), p, c});
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.d < b.d; });
  std::vector<bool> used_p(static_cast<std::size_t>(planted.cols()), false), used_c(clusters.size(), false);
  Index matched = 0;
  for (const auto& pr : pairs) {
    if (pr.d > radius) break;
    if (used_p[static_cast<std::size_t>(pr.p)] || used_c[pr.c]) continue;
    used_p[static_cast<std::size_t>(pr.p)] = used_c[pr.c] = true;
    ++matched;
  }
  return matched;
}

/// Fraction of recovered mass lying within `radius` of some planted point.
inline double mass_near_planted(const Vector& alpha, const Matrix& landmarks, const Matrix& planted, double radius) {
  double near = 0.0, total = 0.0;
  for (Index j = 0; j < alpha.size(); ++j) {
    if (alpha[j] <= 0.0) continue;
    total += alpha[j];
    for (Index p = 0; p < planted.cols(); ++p)
      if ((landmarks.col(j) - planted.col(p)).norm() <= radius) {
        near += alpha[j];
        break;
      }
  }
  return total > 0.0 ? near / total : 0.0;
}

struct RecoveryTrial {
  PlantedFunction planted;
  Vector recovered;
  std::vector<MassCluster> clusters;
  Index matched = 0;
  double center_error = 0.0;  // h = 1: distance of the recovered mass center
  double near_fraction = 0.0;
  bool success = false;
};

struct RecoveryTrialConfig {
  Index h = 1;
  Index k = 4;
  double radius = 0.15;
  double min_separation = 0.5;
  RecoveryConfig recovery{};
};

/// Plants an h-sparse function, senses it with P and recovers it. h = 1
/// succeeds when the recovered mass center lies within `radius` of the
/// planted point; h > 1 when every planted point is matched to a cluster.
inline RecoveryTrial run_recovery_trial(const DiscWorld& world, const Matrix& p, const RecoveryTrialConfig& cfg,
                                        std::uint64_t seed) {
  Rng rng(seed);
  RecoveryTrial trial;
  trial.planted = plant_function(world, cfg.h, cfg.k, cfg.min_separation, rng);
  trial.recovered = invert_embedding(p * trial.planted.code, p, cfg.recovery).code.values;
  trial.near_fraction = mass_near_planted(trial.recovered, world.landmarks, trial.planted.points, cfg.radius);
  const double mass = trial.recovered.sum();
  if (cfg.h == 1) {
    if (mass > 0.0) {
      const Eigen::Vector2d center = world.landmarks * trial.recovered / mass;
      trial.center_error = (center - trial.planted.points.col(0)).norm();
      trial.success = trial.center_error <= cfg.radius;
      trial.clusters = {{center, mass}};
      trial.matched = trial.success ? 1 : 0;
    } else {
      trial.center_error = std::numeric_limits<double>::infinity();
    }
    return trial;
  }
  trial.clusters = cluster_mass(trial.recovered, world.landmarks, cfg.radius);
  trial.matched = greedy_match(trial.planted.points, trial.clusters, cfg.radius);
  trial.success = trial.matched == cfg.h;
  return trial;
}

/// Runs `trials` seeded trials (trial i uses shard_seed(seed, i)).
inline std::vector<RecoveryTrial> run_recovery_trials(const DiscWorld& world, const Matrix& p,
                                                      const RecoveryTrialConfig& cfg, Index trials,
                                                      std::uint64_t seed, unsigned threads = 1) {
  std::vector<RecoveryTrial> out(static_cast<std::size_t>(trials));
  parallel_for(out.size(), threads, [&](std::size_t i) { out[i] = run_recovery_trial(world, p, cfg, shard_seed(seed, i)); });
  return out;
}

}  // namespace smt
