#pragma once

// Overcomplete dictionary learning by alternating non-negative sparse
// inference with SGD on the reconstruction term.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <random>
#include <vector>

#include "smt/error.hpp"
#include "smt/numerics.hpp"
#include "smt/parallel.hpp"
#include "smt/random.hpp"
#include "smt/sparse.hpp"

namespace smt {

/// Matrix of atoms (signal_dim x num_elements). Learned dictionaries keep
/// unit-norm columns; landmark dictionaries (used with KNN coding) keep the
/// raw coordinates.
class Dictionary {
 public:
  Dictionary() = default;

  static Dictionary from_atoms(Matrix atoms, std::uint64_t trained_steps = 0) {
    require(atoms.allFinite(), ErrorKind::NonFinite, "dictionary atoms not finite");
    Dictionary d;
    d.atoms_ = std::move(atoms);
    for (Index j = 0; j < d.atoms_.cols(); ++j) {
      const double n = d.atoms_.col(j).norm();
      require(n > 0.0, ErrorKind::InvalidArgument, "dictionary atom " + std::to_string(j) + " is zero");
      d.atoms_.col(j) /= n;
    }
    d.norms_ = column_norms(d.atoms_);
    d.trained_steps_ = trained_steps;
    return d;
  }

  /// Adopts columns that are already unit norm (to within 1e-12) unchanged.
  static Dictionary from_unit_atoms(Matrix atoms, std::uint64_t trained_steps) {
    require(atoms.allFinite(), ErrorKind::NonFinite, "dictionary atoms not finite");
    Dictionary d;
    d.norms_ = column_norms(atoms);
    require(atoms.cols() == 0 || (d.norms_.array() - 1.0).abs().maxCoeff() <= 1e-12, ErrorKind::InvalidArgument,
            "from_unit_atoms: columns not unit norm");
    d.atoms_ = std::move(atoms);
    d.trained_steps_ = trained_steps;
    return d;
  }

  static Dictionary landmarks(Matrix points) {
    require(points.allFinite(), ErrorKind::NonFinite, "landmarks not finite");
    Dictionary d;
    d.atoms_ = std::move(points);
    d.norms_ = column_norms(d.atoms_);
    d.unit_norm_ = false;
    return d;
  }

  const Matrix& atoms() const { return atoms_; }
  const Vector& atom_norms() const { return norms_; }
  std::uint64_t trained_steps() const { return trained_steps_; }
  bool unit_norm() const { return unit_norm_; }
  Index signal_dim() const { return atoms_.rows(); }
  Index num_elements() const { return atoms_.cols(); }

 private:
  Matrix atoms_;
  Vector norms_;
  std::uint64_t trained_steps_ = 0;
  bool unit_norm_ = true;
};

/// I.i.d. standard normal atoms from a seeded generator, normalized.
inline Dictionary init_dictionary(Index signal_dim, Index num_elements, std::uint64_t seed) {
  require(signal_dim > 0 && num_elements > 0, ErrorKind::ZeroDimension, "init_dictionary: zero dimension");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix atoms(signal_dim, num_elements);
  for (Index j = 0; j < num_elements; ++j)
    for (Index i = 0; i < signal_dim; ++i) atoms(i, j) = normal(rng);
  return Dictionary::from_atoms(std::move(atoms));
}

/// (X - Phi A) A^T / batch_size: the descent direction of
/// 1/2 ||X - Phi A||_F^2 / batch_size with respect to Phi.
inline Matrix dictionary_descent_direction(const Matrix& atoms, const Matrix& batch_x, const Matrix& batch_alpha) {
  require(batch_x.cols() == batch_alpha.cols() && batch_x.cols() > 0, ErrorKind::DimensionMismatch,
          "dictionary_step: batches not aligned");
  require(batch_x.rows() == atoms.rows() && batch_alpha.rows() == atoms.cols(), ErrorKind::DimensionMismatch,
          "dictionary_step: batch dimensions");
  return (batch_x - atoms * batch_alpha) * batch_alpha.transpose() / static_cast<double>(batch_x.cols());
}

/// Phi <- normalize_columns(Phi + eta (X - Phi A) A^T / batch_size). Columns
/// with a zero update, or driven to exactly zero, keep their previous value.
inline Dictionary dictionary_step(const Dictionary& dict, const Matrix& batch_x, const Matrix& batch_alpha,
                                  double eta) {
  require(eta > 0.0, ErrorKind::InvalidArgument, "dictionary_step: eta must be positive");
  const Matrix delta = eta * dictionary_descent_direction(dict.atoms(), batch_x, batch_alpha);
  Matrix updated = dict.atoms();
  for (Index j = 0; j < updated.cols(); ++j) {
    if (delta.col(j).cwiseAbs().maxCoeff() == 0.0) continue;
    const Vector moved = dict.atoms().col(j) + delta.col(j);
    const double norm = moved.norm();
    if (norm > 0.0 && std::isfinite(norm)) updated.col(j) = moved / norm;
  }
  return Dictionary::from_unit_atoms(std::move(updated), dict.trained_steps() + 1);
}

struct DictionaryTrainingConfig {
  Index num_elements = 0;
  double lambda = 0.1;
  Index batch_size = 100;
  std::uint64_t steps = 1000;
  double eta0 = -1.0;       // < 0 selects 0.3 / batch_size
  double half_life = -1.0;  // < 0 selects steps / 3
  bool shuffle = true;      // false draws consecutive temporal windows
  std::uint64_t dead_atom_patience = 500;
  std::uint64_t seed = 1;
  SolverOptions solver{};
  unsigned threads = 1;
};

struct DictionaryLogRow {
  std::uint64_t step;
  double mean_residual;
  double mean_l0;
  double eta;
  double mean_objective;  // 1/2 ||x - Phi a||^2 + lambda sum(a), not written to CSV
};

inline void write_dictionary_log_csv(std::ostream& out, const std::vector<DictionaryLogRow>& rows) {
  out << "step,mean_residual,mean_l0,eta\n";
  out.precision(17);
  for (const auto& r : rows) out << r.step << ',' << r.mean_residual << ',' << r.mean_l0 << ',' << r.eta << '\n';
}

struct DictionaryTrainingResult {
  Dictionary dictionary;
  std::vector<DictionaryLogRow> log;
};

/// Codes every column of `signals` with nn_lasso against `dict`.
inline Matrix encode_batch(const Matrix& signals, const Matrix& dict, double lambda, const SolverOptions& opts,
                           unsigned threads, std::vector<SolveReport>* reports = nullptr) {
  Matrix codes(dict.cols(), signals.cols());
  if (reports) reports->assign(static_cast<std::size_t>(signals.cols()), {});
  parallel_for(static_cast<std::size_t>(signals.cols()), threads, [&](std::size_t c) {
    auto r = nn_lasso(signals.col(static_cast<Index>(c)), dict, lambda, opts);
    codes.col(static_cast<Index>(c)) = r.code.values;
    if (reports) (*reports)[c] = std::move(r.report);
  });
  return codes;
}

/// Alternates nn_lasso inference on a batch with dictionary_step; eta decays
/// as eta0 / (1 + step / half_life). Atoms unused for `dead_atom_patience`
/// consecutive steps are reset to a normalized batch element.
inline DictionaryTrainingResult train_dictionary(const Matrix& signals, const DictionaryTrainingConfig& cfg,
                                                 const Dictionary* init = nullptr) {
  require(signals.cols() > 0, ErrorKind::EmptySource, "train_dictionary: no signals");
  require(cfg.batch_size > 0 && cfg.num_elements > 0, ErrorKind::InvalidArgument,
          "train_dictionary: batch_size and num_elements must be positive");
  const Index n = signals.rows();
  const Index total = signals.cols();
  const Index batch = std::min(cfg.batch_size, total);
  const double eta0 = cfg.eta0 > 0 ? cfg.eta0 : 0.3 / static_cast<double>(batch);
  const double half_life = cfg.half_life > 0 ? cfg.half_life : std::max(1.0, static_cast<double>(cfg.steps) / 3.0);

  DictionaryTrainingResult out;
  out.dictionary = init ? *init : init_dictionary(n, cfg.num_elements, cfg.seed);
  require(out.dictionary.signal_dim() == n && out.dictionary.num_elements() == cfg.num_elements,
          ErrorKind::DimensionMismatch, "train_dictionary: initial dictionary shape");

  Rng rng(splitmix64(cfg.seed));
  std::vector<std::uint64_t> unused_for(static_cast<std::size_t>(cfg.num_elements), 0);
  Matrix batch_x(n, batch);

  for (std::uint64_t step = 0; step < cfg.steps; ++step) {
    if (cfg.shuffle) {
      std::uniform_int_distribution<Index> pick(0, total - 1);
      for (Index c = 0; c < batch; ++c) batch_x.col(c) = signals.col(pick(rng));
    } else {
      const Index start = static_cast<Index>((step * static_cast<std::uint64_t>(batch)) % static_cast<std::uint64_t>(total));
      for (Index c = 0; c < batch; ++c) batch_x.col(c) = signals.col((start + c) % total);
    }

    std::vector<SolveReport> reports;
    const Matrix codes = encode_batch(batch_x, out.dictionary.atoms(), cfg.lambda, cfg.solver, cfg.threads, &reports);

    const double eta = eta0 / (1.0 + static_cast<double>(step) / half_life);
    const Vector residuals = (batch_x - out.dictionary.atoms() * codes).colwise().norm();
    double l0 = 0.0;
    for (Index c = 0; c < batch; ++c)
      l0 += static_cast<double>((codes.col(c).array() > cfg.solver.activation_floor).count());
    const double objective =
        0.5 * residuals.squaredNorm() / static_cast<double>(batch) + cfg.lambda * codes.sum() / static_cast<double>(batch);
    out.log.push_back({step, residuals.mean(), l0 / static_cast<double>(batch), eta, objective});

    Dictionary next = dictionary_step(out.dictionary, batch_x, codes, eta);

    Matrix atoms = next.atoms();
    bool reset = false;
    for (Index j = 0; j < cfg.num_elements; ++j) {
      auto& idle = unused_for[static_cast<std::size_t>(j)];
      idle = codes.row(j).maxCoeff() < cfg.solver.activation_floor ? idle + 1 : 0;
      if (cfg.dead_atom_patience > 0 && idle >= cfg.dead_atom_patience) {
        std::uniform_int_distribution<Index> pick(0, batch - 1);
        const Vector candidate = batch_x.col(pick(rng));
        if (candidate.norm() > 0.0) {
          atoms.col(j) = candidate.normalized();
          reset = true;
        }
        idle = 0;
      }
    }
    out.dictionary = reset ? Dictionary::from_unit_atoms(std::move(atoms), next.trained_steps()) : std::move(next);
  }
  return out;
}

}  // namespace smt
