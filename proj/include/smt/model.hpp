#pragma once

// Stacked SMT layers: sparse coding followed by the linear embedding
// beta = P alpha, trained layer by layer.

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "smt/dictionary.hpp"
#include "smt/embedding.hpp"
#include "smt/error.hpp"
#include "smt/numerics.hpp"
#include "smt/parallel.hpp"
#include "smt/recovery.hpp"
#include "smt/sequence.hpp"
#include "smt/sparse.hpp"
#include "smt/whitening.hpp"

namespace smt {

enum class CodingMode : std::uint8_t { Lasso = 0, Knn = 1 };

struct SmtLayer {
  Dictionary dict;
  EmbeddingMatrix embed;
  RecoveryConfig recovery{};
  double lambda_inference = 0.1;
  CodingMode mode = CodingMode::Lasso;
  Index knn_k = 4;
  SolverOptions solver{};
  // Input map x' = (x - input_mean) / input_scale; identity when empty.
  Vector input_mean;
  double input_scale = 1.0;

  Index input_dim() const { return dict.signal_dim(); }
  Index num_elements() const { return dict.num_elements(); }
  Index output_dim() const { return embed.f(); }

  Vector normalize_input(const Vector& x) const {
    return input_mean.size() ? Vector((x - input_mean) / input_scale) : Vector(x / input_scale);
  }
  Vector denormalize_input(const Vector& x) const {
    return input_mean.size() ? Vector(x * input_scale + input_mean) : Vector(x * input_scale);
  }
};

inline constexpr std::uint32_t kModelFormatVersion = 1;

struct SmtModel {
  std::vector<SmtLayer> layers;
  std::optional<WhiteningSpec> whitening;
  std::uint32_t format_version = kModelFormatVersion;

  Index depth() const { return static_cast<Index>(layers.size()); }

  /// Dimension chaining and per-layer consistency.
  void validate() const {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const SmtLayer& layer = layers[l];
      require(layer.dict.num_elements() == layer.embed.num_elements(), ErrorKind::DimensionMismatch,
              "layer " + std::to_string(l + 1) + ": dictionary and embedding element counts differ");
      require(layer.input_mean.size() == 0 || layer.input_mean.size() == layer.input_dim(),
              ErrorKind::DimensionMismatch, "layer " + std::to_string(l + 1) + ": input mean length");
      require(layer.input_scale > 0.0, ErrorKind::InvalidArgument, "layer input scale must be positive");
      if (l > 0)
        require(layer.input_dim() == layers[l - 1].output_dim(), ErrorKind::DimensionMismatch,
                "layer " + std::to_string(l + 1) + ": input dim does not match previous embedding dim");
    }
  }

  void check_layer(Index layer) const {
    require(layer >= 1 && layer <= depth(), ErrorKind::LayerOutOfRange,
            "layer " + std::to_string(layer) + " outside 1.." + std::to_string(depth()));
  }
};

struct LayerCodes {
  Vector alpha;
  Vector beta;
};

/// Per-layer inference state for temporally regularized encoding.
struct TemporalContext {
  double gamma0 = 0.0;
  std::vector<Vector> prev;   // alpha_{t-1} per layer
  std::vector<Vector> prev2;  // alpha_{t-2} per layer
  Index history = 0;          // steps seen since the last reset

  void reset() {
    prev.clear();
    prev2.clear();
    history = 0;
  }
};

/// Sparse code of one (normalized) layer input. With a context holding two
/// previous codes, temporal_regularized_infer runs at 2 lambda so that
/// gamma0 = 0 reproduces the nn_lasso minimizer.
inline Vector code_layer_input(const SmtLayer& layer, const Vector& input, const Vector* prev = nullptr,
                               const Vector* prev2 = nullptr, double gamma0 = 0.0) {
  if (layer.mode == CodingMode::Knn) return knn_interpolate(input, layer.dict.atoms(), layer.knn_k).values;
  if (input.cwiseAbs().maxCoeff() == 0.0) return Vector::Zero(layer.num_elements());
  if (prev && prev2 && gamma0 > 0.0)
    return temporal_regularized_infer(input, layer.dict.atoms(), layer.embed.p, *prev, *prev2,
                                      2.0 * layer.lambda_inference, gamma0, layer.solver)
        .code.values;
  return nn_lasso(input, layer.dict.atoms(), layer.lambda_inference, layer.solver).code.values;
}

/// alpha^(l) then beta^(l) = P^(l) alpha^(l) for l = 1..up_to_layer; layer
/// l+1 consumes beta^(l).
inline std::vector<LayerCodes> encode(const Vector& x, const SmtModel& model, Index up_to_layer,
                                      TemporalContext* context = nullptr) {
  model.check_layer(up_to_layer);
  require(x.size() == model.layers[0].input_dim(), ErrorKind::DimensionMismatch,
          "encode: signal dim does not match layer-1 dictionary");
  require(x.allFinite(), ErrorKind::NonFinite, "encode: signal not finite");
  std::vector<LayerCodes> out;
  Vector input = x;
  const bool temporal = context && context->gamma0 > 0.0 && context->history >= 2;
  for (Index l = 0; l < up_to_layer; ++l) {
    const SmtLayer& layer = model.layers[static_cast<std::size_t>(l)];
    const auto li = static_cast<std::size_t>(l);
    Vector alpha = temporal && li < context->prev.size()
                       ? code_layer_input(layer, layer.normalize_input(input), &context->prev[li],
                                          &context->prev2[li], context->gamma0)
                       : code_layer_input(layer, layer.normalize_input(input));
    Vector beta = layer.embed.p * alpha;
    input = beta;
    out.push_back({std::move(alpha), std::move(beta)});
  }
  if (context) {
    context->prev2 = context->prev;
    context->prev.clear();
    for (const auto& c : out) context->prev.push_back(c.alpha);
    if (context->prev2.size() != context->prev.size()) context->prev2 = context->prev;
    ++context->history;
  }
  return out;
}

struct EncodedSequence {
  std::vector<SequenceBatch> alphas;  // per layer, same chunking as input
  std::vector<SequenceBatch> betas;
};

/// Encodes every column of a chunked sequence. With gamma0 > 0 each chunk is
/// encoded causally with temporal regularization (context reset per chunk);
/// otherwise columns are independent and run in parallel.
inline EncodedSequence encode_sequence(const SequenceBatch& batch, const SmtModel& model, Index up_to_layer,
                                       double gamma0 = 0.0, unsigned threads = 1) {
  batch.validate();
  model.check_layer(up_to_layer);
  EncodedSequence out;
  for (Index l = 0; l < up_to_layer; ++l) {
    const SmtLayer& layer = model.layers[static_cast<std::size_t>(l)];
    out.alphas.push_back({Matrix(layer.num_elements(), batch.num_timepoints()), batch.chunk_starts, batch.dt});
    out.betas.push_back({Matrix(layer.output_dim(), batch.num_timepoints()), batch.chunk_starts, batch.dt});
  }
  auto store = [&](Index col, const std::vector<LayerCodes>& codes) {
    for (std::size_t l = 0; l < codes.size(); ++l) {
      out.alphas[l].signals.col(col) = codes[l].alpha;
      out.betas[l].signals.col(col) = codes[l].beta;
    }
  };
  if (gamma0 > 0.0) {
    parallel_for(batch.num_chunks(), threads, [&](std::size_t c) {
      TemporalContext ctx;
      ctx.gamma0 = gamma0;
      const auto [b, e] = batch.chunk_range(c);
      for (Index t = b; t < e; ++t) store(t, encode(batch.signals.col(t), model, up_to_layer, &ctx));
    });
  } else {
    parallel_for(static_cast<std::size_t>(batch.num_timepoints()), threads, [&](std::size_t t) {
      const auto col = static_cast<Index>(t);
      store(col, encode(batch.signals.col(col), model, up_to_layer));
    });
  }
  return out;
}

/// Alternates beta^(l-1) = Phi^(l) alpha^(l) and alpha^(l-1) = g^(l-1)(beta^(l-1))
/// down to layer 1 and returns Phi^(1) alpha^(1) in the model input space. A
/// zero top code reconstructs to the zero signal. With `unwhiten` the result
/// is mapped through the unwhitening filter (requires whitening metadata).
inline Vector reconstruct_through_stack(const Vector& alpha_top, const SmtModel& model, Index top_layer,
                                        bool unwhiten = false) {
  model.check_layer(top_layer);
  const SmtLayer& top = model.layers[static_cast<std::size_t>(top_layer - 1)];
  require(alpha_top.size() == top.num_elements(), ErrorKind::DimensionMismatch,
          "reconstruct_through_stack: code length");
  const Index out_dim = model.layers[0].input_dim();
  if (alpha_top.cwiseAbs().maxCoeff() == 0.0) return Vector::Zero(out_dim);
  Vector alpha = alpha_top;
  for (Index l = top_layer; l >= 2; --l) {
    const SmtLayer& layer = model.layers[static_cast<std::size_t>(l - 1)];
    const SmtLayer& below = model.layers[static_cast<std::size_t>(l - 2)];
    const Vector beta = layer.denormalize_input(layer.dict.atoms() * alpha);
    alpha = invert_embedding(beta, below.embed.p, below.recovery).code.values;
  }
  const SmtLayer& first = model.layers[0];
  Vector x = first.denormalize_input(reconstruct_layer1(alpha, first.dict.atoms()));
  if (unwhiten) {
    require(model.whitening.has_value(), ErrorKind::InvalidArgument, "reconstruct_through_stack: no whitening spec");
    x = unwhiten_patch(x, *model.whitening);
  }
  return x;
}

/// x_hat = reconstruct_through_stack(g^(l)(beta), l).
inline Vector decode(const Vector& beta, const SmtModel& model, Index from_layer, bool unwhiten = false) {
  model.check_layer(from_layer);
  const SmtLayer& layer = model.layers[static_cast<std::size_t>(from_layer - 1)];
  require(beta.size() == layer.output_dim(), ErrorKind::DimensionMismatch, "decode: beta length must equal f");
  const Vector alpha = invert_embedding(beta, layer.embed.p, layer.recovery).code.values;
  return reconstruct_through_stack(alpha, model, from_layer, unwhiten);
}

/// reconstruct_through_stack of w1 e_j1 + w2 e_j2 at `layer`.
inline Vector interpolate_elements(const SmtModel& model, Index layer, Index j1, Index j2, double w1, double w2,
                                   bool unwhiten = false) {
  model.check_layer(layer);
  const Index n = model.layers[static_cast<std::size_t>(layer - 1)].num_elements();
  require(j1 != j2, ErrorKind::InvalidArgument, "interpolate_elements: j1 must differ from j2");
  require(j1 >= 0 && j1 < n && j2 >= 0 && j2 < n, ErrorKind::InvalidArgument, "interpolate_elements: index");
  Vector alpha = Vector::Zero(n);
  alpha[j1] = w1;
  alpha[j2] = w2;
  return reconstruct_through_stack(alpha, model, layer, unwhiten);
}

/// lambda = 0.1 mean ||x|| / sqrt(n).
inline double natural_lambda(const Matrix& signals) {
  require(signals.cols() > 0, ErrorKind::EmptySource, "natural_lambda: no signals");
  return 0.1 * signals.colwise().norm().mean() / std::sqrt(static_cast<double>(signals.rows()));
}

struct LayerTrainingConfig {
  DictionaryTrainingConfig dict{};  // dict.lambda <= 0 selects natural_lambda
  std::optional<Matrix> landmarks;  // given: KNN coding, dictionary training skipped
  Index knn_k = 4;
  EmbeddingTrainingConfig embed{};
  RecoveryConfig recovery{};
  bool normalize_input = true;  // layers >= 2: center and scale to unit mean norm
};

struct StackTrainingResult {
  SmtModel model;
  std::vector<std::vector<DictionaryLogRow>> dictionary_logs;
  std::vector<std::vector<EmbeddingLogRow>> embedding_logs;
};

/// Layer-by-layer training: dictionary (or given landmarks), codes for all
/// inputs, embedding on the chunked codes, then beta = P alpha feeds the
/// next layer. With `base`, its layers are kept as trained, the data is
/// encoded through them, and `configs` describe the layers added on top.
inline StackTrainingResult train_stack(const SequenceBatch& data, const std::vector<LayerTrainingConfig>& configs,
                                       std::optional<WhiteningSpec> whitening = std::nullopt,
                                       unsigned threads = 1, const SmtModel* base = nullptr) {
  require(data.num_timepoints() > 0, ErrorKind::EmptySource, "train_stack: no data");
  require(!configs.empty() || base, ErrorKind::InvalidArgument, "train_stack: need at least one layer config");
  data.validate();
  StackTrainingResult out;
  SequenceBatch inputs = data;
  if (base) {
    base->validate();
    out.model = *base;
    if (whitening) out.model.whitening = std::move(whitening);
    if (base->depth() > 0) inputs = encode_sequence(data, *base, base->depth(), 0.0, threads).betas.back();
  } else {
    out.model.whitening = std::move(whitening);
  }
  const std::size_t offset = out.model.layers.size();

  for (std::size_t c = 0; c < configs.size(); ++c) {
    const LayerTrainingConfig& cfg = configs[c];
    const std::size_t l = offset + c;
    SmtLayer layer;
    layer.recovery = cfg.recovery;
    layer.solver = cfg.dict.solver;
    if (l > 0 && cfg.normalize_input) {
      layer.input_mean = inputs.signals.rowwise().mean();
      const double scale = (inputs.signals.colwise() - layer.input_mean).colwise().norm().mean();
      layer.input_scale = scale > 0.0 ? scale : 1.0;
      inputs.signals = (inputs.signals.colwise() - layer.input_mean) / layer.input_scale;
    }

    if (cfg.landmarks) {
      require(cfg.landmarks->rows() == inputs.dim(), ErrorKind::DimensionMismatch, "train_stack: landmark dim");
      layer.dict = Dictionary::landmarks(*cfg.landmarks);
      layer.mode = CodingMode::Knn;
      layer.knn_k = cfg.knn_k;
      out.dictionary_logs.emplace_back();
    } else {
      DictionaryTrainingConfig dcfg = cfg.dict;
      if (dcfg.lambda <= 0.0) dcfg.lambda = natural_lambda(inputs.signals);
      dcfg.threads = threads;
      auto trained = train_dictionary(inputs.signals, dcfg);
      layer.dict = std::move(trained.dictionary);
      layer.lambda_inference = dcfg.lambda;
      out.dictionary_logs.push_back(std::move(trained.log));
    }

    SequenceBatch codes{Matrix(layer.num_elements(), inputs.num_timepoints()), inputs.chunk_starts, inputs.dt};
    parallel_for(static_cast<std::size_t>(inputs.num_timepoints()), threads, [&](std::size_t t) {
      const auto col = static_cast<Index>(t);
      codes.signals.col(col) = code_layer_input(layer, inputs.signals.col(col));
    });

    auto embedded = train_embedding(codes, cfg.embed);
    layer.embed = std::move(embedded.embedding);
    out.embedding_logs.push_back(std::move(embedded.log));

    inputs.signals = layer.embed.p * codes.signals;
    out.model.layers.push_back(std::move(layer));
  }
  out.model.validate();
  return out;
}

}  // namespace smt
