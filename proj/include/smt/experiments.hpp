#pragma once

// End-to-end experiment drivers shared by the CLI and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "smt/analysis.hpp"
#include "smt/disc.hpp"
#include "smt/embedding.hpp"
#include "smt/model.hpp"
#include "smt/patches.hpp"
#include "smt/recovery.hpp"

namespace smt {

/// Multiple correlation of each row of `p` with an affine function of the
/// landmark coordinates (sqrt of the least-squares R^2).
inline Vector affine_row_correlations(const Matrix& p, const Matrix& landmarks) {
  require(p.cols() == landmarks.cols(), ErrorKind::DimensionMismatch, "affine_row_correlations: column counts");
  Matrix design(landmarks.cols(), landmarks.rows() + 1);
  design.col(0).setOnes();
  design.rightCols(landmarks.rows()) = landmarks.transpose();
  const auto qr = design.colPivHouseholderQr();
  Vector out(p.rows());
  for (Index r = 0; r < p.rows(); ++r) {
    const Vector y = p.row(r).transpose();
    const double centered = (y.array() - y.mean()).matrix().squaredNorm();
    const double residual = (y - design * qr.solve(y)).squaredNorm();
    out[r] = centered > 0.0 ? std::sqrt(std::max(0.0, 1.0 - residual / centered)) : 0.0;
  }
  return out;
}

struct DiscDemoConfig {
  Index landmarks = 300;
  Index f = 21;
  DiscTrajectoryConfig trajectories{};
  Index single_trials = 100;
  double single_radius = 0.15;
  Index multi_trials = 200;
  Index multi_h = 4;
  double multi_radius = 0.2;
  double min_separation = 0.5;
  RecoveryConfig recovery{};
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct DiscDemoResult {
  DiscWorld world;
  DiscCodes codes;
  EmbeddingMatrix embedding;
  double orthogonality = 0.0;
  Vector row_correlations;
  std::vector<RecoveryTrial> single;
  std::vector<RecoveryTrial> multi;

  double single_rate() const { return rate(single); }
  double multi_rate() const { return rate(multi); }

 private:
  static double rate(const std::vector<RecoveryTrial>& trials) {
    if (trials.empty()) return 0.0;
    const auto ok = std::count_if(trials.begin(), trials.end(), [](const RecoveryTrial& t) { return t.success; });
    return static_cast<double>(ok) / static_cast<double>(trials.size());
  }
};

/// Landmarks, trajectory codes, analytic embedding and seeded planted-recovery
/// trials. Seeds: world = seed, trajectories = seed + 1, trials = seed + 2/3.
inline DiscDemoResult run_disc_demo(const DiscDemoConfig& cfg) {
  DiscDemoResult out;
  out.world = make_disc_world(cfg.landmarks, cfg.seed);
  DiscTrajectoryConfig tc = cfg.trajectories;
  tc.threads = cfg.threads;
  out.codes = disc_trajectory_codes(out.world, tc, cfg.seed + 1);
  EmbeddingTrainingConfig ec;
  ec.f = cfg.f;
  out.embedding = train_embedding(out.codes.codes, ec).embedding;
  out.orthogonality = orthogonality_error(out.embedding.p, out.embedding.metric.matrix);
  out.row_correlations = affine_row_correlations(out.embedding.p, out.world.landmarks);

  RecoveryTrialConfig single;
  single.h = 1;
  single.k = tc.k;
  single.radius = cfg.single_radius;
  single.recovery = cfg.recovery;
  out.single = run_recovery_trials(out.world, out.embedding.p, single, cfg.single_trials, cfg.seed + 2, cfg.threads);
  RecoveryTrialConfig multi = single;
  multi.h = cfg.multi_h;
  multi.radius = cfg.multi_radius;
  multi.min_separation = cfg.min_separation;
  out.multi = run_recovery_trials(out.world, out.embedding.p, multi, cfg.multi_trials, cfg.seed + 3, cfg.threads);
  return out;
}

/// ||X - X_hat||_F / ||X||_F for X_hat = decode(encode(x)) at `layer`, column
/// by column, in the model input space.
inline double round_trip_error(const SmtModel& model, const Matrix& signals, Index layer, unsigned threads = 1,
                               Matrix* reconstructions = nullptr) {
  model.check_layer(layer);
  require(signals.rows() == model.layers[0].input_dim(), ErrorKind::DimensionMismatch,
          "round_trip_error: signal dim");
  Matrix x_hat(signals.rows(), signals.cols());
  parallel_for(static_cast<std::size_t>(signals.cols()), threads, [&](std::size_t t) {
    const auto col = static_cast<Index>(t);
    const auto codes = encode(signals.col(col), model, layer);
    x_hat.col(col) = decode(codes.back().beta, model, layer);
  });
  const double norm = signals.norm();
  const double err = (signals - x_hat).norm();
  if (reconstructions) *reconstructions = std::move(x_hat);
  return norm > 0.0 ? err / norm : err;
}

struct StraighteningReport {
  double alpha_smoothness = 0.0;
  double beta_smoothness = 0.0;
  double decode_error = 0.0;

  double ratio() const { return alpha_smoothness > 0.0 ? beta_smoothness / alpha_smoothness : 0.0; }
};

/// Smoothness of alpha and beta at `layer` over held-out chunked sequences,
/// plus the encode/decode round trip.
inline StraighteningReport straightening_report(const SmtModel& model, const SequenceBatch& heldout, Index layer,
                                                unsigned threads = 1, double gamma0 = 0.0) {
  const auto enc = encode_sequence(heldout, model, layer, gamma0, threads);
  const auto l = static_cast<std::size_t>(layer - 1);
  StraighteningReport r;
  r.alpha_smoothness = smoothness_ratio(enc.alphas[l].signals, heldout.chunk_starts);
  r.beta_smoothness = smoothness_ratio(enc.betas[l].signals, heldout.chunk_starts);
  r.decode_error = round_trip_error(model, heldout.signals, layer, threads);
  return r;
}

/// train_stack on signals divided by their mean column norm; the divisor is
/// stored as the layer-1 input scale so the model accepts raw signals. A
/// `base` model already carries its scale and sees the raw data.
inline StackTrainingResult train_scaled_stack(const SequenceBatch& data, const std::vector<LayerTrainingConfig>& configs,
                                              std::optional<WhiteningSpec> whitening = std::nullopt,
                                              unsigned threads = 1, const SmtModel* base = nullptr) {
  require(data.num_timepoints() > 0, ErrorKind::EmptySource, "train_scaled_stack: no data");
  if (base && base->depth() > 0) return train_stack(data, configs, std::move(whitening), threads, base);
  const double scale = data.signals.colwise().norm().mean();
  require(scale > 0.0, ErrorKind::InvalidArgument, "train_scaled_stack: all-zero data");
  SequenceBatch scaled = data;
  scaled.signals /= scale;
  auto out = train_stack(scaled, configs, std::move(whitening), threads);
  out.model.layers[0].input_scale = scale;
  return out;
}

}  // namespace smt
