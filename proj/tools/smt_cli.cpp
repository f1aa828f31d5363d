#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cli_support.hpp"
#include "smt/analysis.hpp"
#include "smt/experiments.hpp"
#include "smt/frame_io.hpp"
#include "smt/model_io.hpp"

namespace {

using namespace smt;
using namespace smt::cli;

struct Common {
  std::string config;
  std::string out = "smt_out";
  unsigned threads = 0;
  std::uint64_t seed = 1;
};

void add_common(CLI::App& cmd, Common& c) {
  cmd.add_option("--config", c.config, "key=value file; keys are long option names without dashes");
  cmd.add_option("--out", c.out, "output directory");
  cmd.add_option("--threads", c.threads, "worker threads (0: SMT_THREADS or all cores)");
  cmd.add_option("--seed", c.seed, "random seed");
}

// Patch sequences from a frame file or the synthetic moving-feature generator.
struct DataOptions {
  std::string frames;
  Index stride = 0;
  Index chunk_len = 9;
  std::string feature = "blob";
  Index patch = 16;
  Index sequences = 200;
  Index length = 9;
  double sigma_min = 2.5, sigma_max = 2.5;
  double wavelength_min = 4.0, wavelength_max = 8.0;
  double speed = 1.5;
  double rotation = 0.05;
  bool whiten = true;
  bool keep_inside = true;
  double margin = 2.0;
  CLI::Option* patch_opt = nullptr;
  CLI::Option* whiten_opt = nullptr;
};

void add_data(CLI::App& cmd, DataOptions& d) {
  cmd.add_option("--frames", d.frames, "SMTF frame file (otherwise synthetic sequences)");
  cmd.add_option("--stride", d.stride, "window stride for --frames (0: patch size)");
  cmd.add_option("--chunk-len", d.chunk_len, "frames per chunk for --frames");
  cmd.add_option("--feature", d.feature, "synthetic feature: blob or gabor")->check(CLI::IsMember({"blob", "gabor"}));
  d.patch_opt = cmd.add_option("--patch", d.patch, "patch side in pixels (default: from the model)");
  cmd.add_option("--sequences", d.sequences, "synthetic sequences");
  cmd.add_option("--length", d.length, "frames per synthetic sequence");
  cmd.add_option("--sigma-min", d.sigma_min, "feature envelope width range");
  cmd.add_option("--sigma-max", d.sigma_max);
  cmd.add_option("--wavelength-min", d.wavelength_min, "Gabor wavelength range");
  cmd.add_option("--wavelength-max", d.wavelength_max);
  cmd.add_option("--speed", d.speed, "maximum speed in pixels per frame");
  cmd.add_option("--rotation", d.rotation, "maximum rotation in radians per frame");
  d.whiten_opt = cmd.add_option("--whiten", d.whiten, "whiten patches (default: as the model)");
  cmd.add_option("--keep-inside", d.keep_inside, "keep synthetic features inside the patch");
  cmd.add_option("--margin", d.margin, "border margin for --keep-inside");
}

struct Dataset {
  SequenceBatch batch;
  std::optional<WhiteningSpec> whitening;
  std::vector<FeatureTrack> tracks;
};

Dataset load_data(DataOptions d, std::uint64_t seed, unsigned threads, const SmtModel* model = nullptr) {
  if (model) {
    if (d.patch_opt->count() == 0) d.patch = std::lround(std::sqrt(static_cast<double>(model->layers[0].input_dim())));
    if (d.whiten_opt->count() == 0) d.whiten = model->whitening.has_value();
  }
  Dataset out;
  if (!d.frames.empty()) {
    out.batch = extract_patch_sequences(read_smtf(d.frames), d.patch, d.stride > 0 ? d.stride : d.patch, d.chunk_len);
    if (d.whiten) {
      out.whitening = scaled_whitening(d.patch);
      for (Index t = 0; t < out.batch.num_timepoints(); ++t)
        out.batch.signals.col(t) = whiten_patch(out.batch.signals.col(t), *out.whitening);
    }
  } else {
    MovingFeatureConfig mc;
    mc.patch = d.patch;
    mc.num_sequences = d.sequences;
    mc.length = d.length;
    mc.features = {d.feature == "gabor" ? FeatureKind::Gabor : FeatureKind::Blob};
    mc.sigma_min = d.sigma_min;
    mc.sigma_max = d.sigma_max;
    mc.wavelength_min = d.wavelength_min;
    mc.wavelength_max = d.wavelength_max;
    mc.max_speed = d.speed;
    mc.max_rotation = d.rotation;
    mc.whiten = d.whiten;
    mc.keep_inside = d.keep_inside;
    mc.inside_margin = d.margin;
    mc.threads = threads;
    auto data = make_moving_feature_sequences(mc, seed);
    out.batch = std::move(data.batch);
    out.whitening = std::move(data.whitening);
    out.tracks = std::move(data.tracks);
  }
  if (model)
    require(out.batch.dim() == model->layers[0].input_dim(), ErrorKind::DimensionMismatch,
            "data dimension " + std::to_string(out.batch.dim()) + " does not match the model input " +
                std::to_string(model->layers[0].input_dim()));
  return out;
}

template <typename T>
T per_layer(const std::vector<T>& values, std::size_t layer) {
  return values[std::min(layer, values.size() - 1)];
}

// ---------------------------------------------------------------- disc-demo

struct DiscOptions {
  Common common;
  DiscDemoConfig demo;
  Index trajectories = 2000;
  Index steps = 8;
  double speed_min = 0.02, speed_max = 0.1;
};

int run_disc_demo_cmd(const CLI::App& cmd, DiscOptions& o) {
  o.demo.seed = o.common.seed;
  o.demo.threads = resolve_threads(o.common.threads);
  o.demo.trajectories.num_trajectories = o.trajectories;
  o.demo.trajectories.steps = o.steps;
  o.demo.trajectories.speed_min = o.speed_min;
  o.demo.trajectories.speed_max = o.speed_max;
  RunOutput run(o.common.out, "disc-demo", resolved_options(cmd), o.common.seed);
  const auto r = run_disc_demo(o.demo);
  const Matrix& p = r.embedding.p;
  const Matrix& lm = r.world.landmarks;

  {
    auto out = run.open("landmark_functionals.csv");
    out << "landmark,x,y";
    for (Index i = 0; i < p.rows(); ++i) out << ",p" << i;
    out << '\n';
    for (Index j = 0; j < lm.cols(); ++j) {
      out << j << ',' << lm(0, j) << ',' << lm(1, j);
      for (Index i = 0; i < p.rows(); ++i) out << ',' << p(i, j);
      out << '\n';
    }
  }
  if (p.rows() >= 3) {
    auto out = run.open("embedding_scatter.csv");
    out << "landmark,x,y,e1,e2\n";
    for (Index j = 0; j < lm.cols(); ++j)
      out << j << ',' << lm(0, j) << ',' << lm(1, j) << ',' << p(1, j) << ',' << p(2, j) << '\n';
  }
  {
    auto out = run.open("row_correlations.csv");
    out << "row,eigenvalue,affine_correlation\n";
    for (Index i = 0; i < p.rows(); ++i) out << i << ',' << r.embedding.eigenvalues[i] << ',' << r.row_correlations[i] << '\n';
  }
  {
    auto out = run.open("recovery_single.csv");
    out << "trial,planted_x,planted_y,center_x,center_y,center_error,success\n";
    for (std::size_t i = 0; i < r.single.size(); ++i) {
      const auto& t = r.single[i];
      const Eigen::Vector2d c = t.clusters.empty() ? Eigen::Vector2d::Zero() : t.clusters[0].center;
      out << i << ',' << t.planted.points(0, 0) << ',' << t.planted.points(1, 0) << ',' << c.x() << ',' << c.y()
          << ',' << t.center_error << ',' << t.success << '\n';
    }
  }
  {
    auto out = run.open("recovery_multi.csv");
    out << "trial,point,planted_x,planted_y,matched,clusters,near_fraction,success\n";
    for (std::size_t i = 0; i < r.multi.size(); ++i) {
      const auto& t = r.multi[i];
      for (Index k = 0; k < t.planted.points.cols(); ++k)
        out << i << ',' << k << ',' << t.planted.points(0, k) << ',' << t.planted.points(1, k) << ',' << t.matched
            << ',' << t.clusters.size() << ',' << t.near_fraction << ',' << t.success << '\n';
    }
  }

  struct Check {
    std::string name;
    double value;
    double threshold;
    bool pass;
  };
  std::vector<Check> checks;
  const double f = static_cast<double>(p.rows());
  checks.push_back({"orthogonality_error", r.orthogonality, 1e-6 * f, r.orthogonality <= 1e-6 * f});
  if (p.rows() >= 3) {
    const double worst = std::min(r.row_correlations[1], r.row_correlations[2]);
    checks.push_back({"rows_2_3_affine_correlation", worst, 0.9, worst >= 0.9});
  }
  checks.push_back({"single_recovery_rate", r.single_rate(), 0.95, r.single_rate() >= 0.95});
  checks.push_back({"multi_recovery_rate", r.multi_rate(), 0.8, r.multi_rate() >= 0.8});
  bool all = true;
  {
    auto out = run.open("summary.csv");
    out << "check,value,threshold,pass\n";
    for (const auto& c : checks) {
      out << c.name << ',' << c.value << ',' << c.threshold << ',' << c.pass << '\n';
      run.set_result(c.name, c.value);
      std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " = " << c.value << '\n';
      all = all && c.pass;
    }
  }
  run.finish();
  return all ? kOk : kNumerical;
}

// -------------------------------------------------------------------- train

struct TrainOptions {
  Common common;
  DataOptions data;
  Index depth = 1;
  std::vector<Index> elements{100};
  std::vector<Index> f{8};
  std::vector<double> lambda{0.1};
  std::vector<std::uint64_t> steps{1000};
  Index batch = 100;
  double eta0 = 0.5;
  std::uint64_t patience = 50;
  double relative_ridge = 1e-6;
  std::string model;
  std::string resume;
};

int run_train_cmd(const CLI::App& cmd, TrainOptions& o) {
  const unsigned threads = resolve_threads(o.common.threads);
  RunOutput run(o.common.out, "train", resolved_options(cmd), o.common.seed);
  std::optional<SmtModel> base;
  if (!o.resume.empty()) base = load_model(o.resume);
  const Index have = base ? base->depth() : 0;
  require(o.depth >= have, ErrorKind::InvalidArgument, "--depth is smaller than the resumed model");

  const Dataset data = load_data(o.data, o.common.seed, threads, base ? &*base : nullptr);
  std::vector<LayerTrainingConfig> configs;
  for (Index l = have; l < o.depth; ++l) {
    const auto i = static_cast<std::size_t>(l);
    LayerTrainingConfig lc;
    lc.dict.num_elements = per_layer(o.elements, i);
    lc.dict.lambda = per_layer(o.lambda, i);
    lc.dict.steps = per_layer(o.steps, i);
    lc.dict.batch_size = o.batch;
    lc.dict.eta0 = o.eta0;
    lc.dict.dead_atom_patience = o.patience;
    lc.dict.seed = o.common.seed + static_cast<std::uint64_t>(l);
    lc.embed.f = per_layer(o.f, i);
    lc.embed.relative_ridge = o.relative_ridge;
    configs.push_back(lc);
  }
  const auto result = train_scaled_stack(data.batch, configs, data.whitening, threads, base ? &*base : nullptr);
  const std::string model_path = o.model.empty() ? run.path("model.smt").string() : o.model;
  save_model(result.model, model_path);
  if (o.model.empty()) run.add_file("model.smt");

  for (std::size_t i = 0; i < result.dictionary_logs.size(); ++i) {
    const std::string layer = std::to_string(static_cast<std::size_t>(have) + i + 1);
    auto dict_log = run.open("dictionary_log_" + layer + ".csv");
    write_dictionary_log_csv(dict_log, result.dictionary_logs[i]);
    auto emb_log = run.open("embedding_log_" + layer + ".csv");
    write_embedding_log_csv(emb_log, result.embedding_logs[i]);
  }
  run.set_result("depth", result.model.depth());
  run.set_result("model", o.model.empty() ? std::string("model.smt") : model_path);
  run.finish();
  std::cout << "saved " << result.model.depth() << "-layer model to " << model_path << '\n';
  return kOk;
}

// ------------------------------------------------------------------- encode

struct CodeOptions {
  Common common;
  DataOptions data;
  std::string model;
  Index layer = 0;
  double gamma0 = 0.0;
  std::string beta;
  bool unwhiten = false;
};

Index resolve_layer(const SmtModel& model, Index layer) {
  const Index l = layer > 0 ? layer : model.depth();
  model.check_layer(l);
  return l;
}

int run_encode_cmd(const CLI::App& cmd, CodeOptions& o) {
  const unsigned threads = resolve_threads(o.common.threads);
  const SmtModel model = load_model(o.model);
  const Index layer = resolve_layer(model, o.layer);
  RunOutput run(o.common.out, "encode", resolved_options(cmd), o.common.seed);
  const Dataset data = load_data(o.data, o.common.seed, threads, &model);
  const auto enc = encode_sequence(data.batch, model, layer, o.gamma0, threads);
  for (Index l = 0; l < layer; ++l) {
    const auto i = static_cast<std::size_t>(l);
    const std::string suffix = std::to_string(l + 1) + ".csv";
    auto a = run.open("alpha_" + suffix);
    write_series_csv(a, enc.alphas[i].signals, data.batch.chunk_starts, "a");
    auto b = run.open("beta_" + suffix);
    write_series_csv(b, enc.betas[i].signals, data.batch.chunk_starts, "b");
  }
  if (!data.tracks.empty()) {
    auto tracks = run.open("tracks.csv");
    write_tracks_csv(tracks, data.tracks);
  }
  run.set_result("timepoints", data.batch.num_timepoints());
  run.finish();
  return kOk;
}

// ------------------------------------------------------------------- decode

int run_decode_cmd(const CLI::App& cmd, CodeOptions& o) {
  const unsigned threads = resolve_threads(o.common.threads);
  const SmtModel model = load_model(o.model);
  const Index layer = resolve_layer(model, o.layer);
  RunOutput run(o.common.out, "decode", resolved_options(cmd), o.common.seed);

  if (!o.beta.empty()) {
    const auto [betas, starts] = read_series_csv(o.beta);
    require(betas.rows() == model.layers[static_cast<std::size_t>(layer - 1)].output_dim(),
            ErrorKind::DimensionMismatch, "beta width does not match layer " + std::to_string(layer));
    Matrix x(model.layers[0].input_dim(), betas.cols());
    parallel_for(static_cast<std::size_t>(betas.cols()), threads, [&](std::size_t t) {
      const auto c = static_cast<Index>(t);
      x.col(c) = decode(betas.col(c), model, layer, o.unwhiten);
    });
    auto out = run.open("reconstruction.csv");
    write_series_csv(out, x, starts, "x");
    run.finish();
    return kOk;
  }

  const Dataset data = load_data(o.data, o.common.seed, threads, &model);
  Matrix x_hat;
  const double error = round_trip_error(model, data.batch.signals, layer, threads, &x_hat);
  {
    auto out = run.open("round_trip.csv");
    out << "t,input_norm,error_norm\n";
    for (Index t = 0; t < x_hat.cols(); ++t)
      out << t << ',' << data.batch.signals.col(t).norm() << ',' << (data.batch.signals.col(t) - x_hat.col(t)).norm()
          << '\n';
  }
  {
    auto out = run.open("summary.csv");
    out << "layer,relative_error\n" << layer << ',' << error << '\n';
  }
  run.set_result("relative_error", error);
  run.finish();
  std::cout.precision(17);
  std::cout << "layer " << layer << " round-trip relative error " << error << '\n';
  return kOk;
}

// ------------------------------------------------------------------ analyze

struct AnalyzeOptions {
  Common common;
  DataOptions data;
  std::string model;
  Index anchors = 16;
  Index group = 9;
  Index top_m = 500;
  Index top_k = 9;
};

int run_analyze_cmd(const CLI::App& cmd, AnalyzeOptions& o) {
  const unsigned threads = resolve_threads(o.common.threads);
  const SmtModel model = load_model(o.model);
  RunOutput run(o.common.out, "analyze", resolved_options(cmd), o.common.seed);
  const Dataset data = load_data(o.data, o.common.seed, threads, &model);

  const auto enc = encode_sequence(data.batch, model, model.depth(), 0.0, threads);
  {
    auto out = run.open("smoothness.csv");
    out << "layer,alpha_smoothness,beta_smoothness,ratio\n";
    for (std::size_t l = 0; l < enc.alphas.size(); ++l) {
      const double a = smoothness_ratio(enc.alphas[l].signals, data.batch.chunk_starts);
      const double b = smoothness_ratio(enc.betas[l].signals, data.batch.chunk_starts);
      out << l + 1 << ',' << a << ',' << b << ',' << (a > 0.0 ? b / a : 0.0) << '\n';
    }
  }

  {
    auto out = run.open("affinity.csv");
    out << "layer,anchor,rank,neighbor,similarity,group_max\n";
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      const Matrix& p = model.layers[l].embed.p;
      const Index n = p.cols();
      const Index count = std::min(o.anchors, n);
      for (Index a = 0; a < count; ++a) {
        const Index anchor = a * n / count;
        if (p.col(anchor).norm() == 0.0) continue;
        const auto g = affinity_group(p, anchor, o.group);
        const double top = g.neighbors.empty() ? 0.0 : g.neighbors.front().second;
        for (std::size_t k = 0; k < g.neighbors.size(); ++k)
          out << l + 1 << ',' << anchor << ',' << k << ',' << g.neighbors[k].first << ',' << g.neighbors[k].second
              << ',' << top << '\n';
      }
    }
  }

  const Matrix& atoms = model.layers[0].dict.atoms();
  const Index side = std::lround(std::sqrt(static_cast<double>(atoms.rows())));
  if (side * side != atoms.rows()) {
    log_warning("layer-1 atoms are not square patches; needle tables skipped");
  } else {
    const auto needles = fit_dictionary_needles(atoms, side, {}, threads);
    Index well = 0;
    {
      auto out = run.open("needles.csv");
      out << "element,cx,cy,orientation,length,aspect,kurtosis,explained_variance,fit_ok,well_fit\n";
      for (std::size_t j = 0; j < needles.size(); ++j) {
        const auto& n = needles[j];
        out << j << ',' << n.cx << ',' << n.cy << ',' << n.orientation << ',' << n.length << ',' << n.aspect << ','
            << n.kurtosis << ',' << n.explained_variance << ',' << n.fit_ok << ',' << n.well_fit() << '\n';
        well += n.well_fit();
      }
    }
    const Index top_m = std::min(o.top_m, well);
    if (top_m < o.top_m) log_warning("only " + std::to_string(well) + " well-fit elements; top-m reduced");
    if (top_m > 0) {
      const auto stats = neighbor_similarity_stats(atoms, model.layers[0].embed.p, needles, top_m, o.top_k);
      auto out = run.open("neighbors.csv");
      out << "element,embedding_dlength,embedding_dangle,pixel_dlength,pixel_dangle\n";
      auto row = [&](const NeighborStatsRow& r) {
        out << r.element << ',' << r.embedding_dlength << ',' << r.embedding_dangle << ',' << r.pixel_dlength << ','
            << r.pixel_dangle << '\n';
      };
      for (const auto& r : stats.rows) row(r);
      row(stats.aggregate);
    }
    run.set_result("well_fit", well);
  }
  run.finish();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse manifold transform: sparse coding, manifold embedding and hierarchical stacks"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  DiscOptions disc;
  CLI::App* disc_cmd = app.add_subcommand("disc-demo", "unit-disc embedding and planted recovery");
  add_common(*disc_cmd, disc.common);
  disc_cmd->add_option("--landmarks", disc.demo.landmarks, "landmarks on the disc");
  disc_cmd->add_option("--f", disc.demo.f, "embedding dimension");
  disc_cmd->add_option("--trajectories", disc.trajectories, "straight trajectories");
  disc_cmd->add_option("--steps", disc.steps, "points per trajectory");
  disc_cmd->add_option("--speed-min", disc.speed_min);
  disc_cmd->add_option("--speed-max", disc.speed_max);
  disc_cmd->add_option("--single-trials", disc.demo.single_trials, "1-sparse recovery trials");
  disc_cmd->add_option("--multi-trials", disc.demo.multi_trials, "h-sparse recovery trials");
  disc_cmd->add_option("--planted", disc.demo.multi_h, "planted points per h-sparse trial");

  TrainOptions train;
  CLI::App* train_cmd = app.add_subcommand("train", "train a stack and save the model");
  add_common(*train_cmd, train.common);
  add_data(*train_cmd, train.data);
  train_cmd->add_option("--depth", train.depth, "number of layers");
  train_cmd->add_option("--elements", train.elements, "dictionary size per layer")->delimiter(',');
  train_cmd->add_option("--f", train.f, "embedding dimension per layer")->delimiter(',');
  train_cmd->add_option("--lambda", train.lambda, "sparsity per layer (<= 0: data-derived)")->delimiter(',');
  train_cmd->add_option("--steps", train.steps, "dictionary steps per layer")->delimiter(',');
  train_cmd->add_option("--batch", train.batch, "dictionary minibatch");
  train_cmd->add_option("--eta0", train.eta0, "dictionary step size");
  train_cmd->add_option("--patience", train.patience, "steps before an unused atom is reset");
  train_cmd->add_option("--relative-ridge", train.relative_ridge, "embedding metric ridge as a fraction of trace(V)/N")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--model", train.model, "model path (default: <out>/model.smt)");
  train_cmd->add_option("--resume", train.resume, "keep the layers of this model and train on top");

  CodeOptions encode_opts;
  CLI::App* encode_cmd = app.add_subcommand("encode", "alpha and beta time series");
  add_common(*encode_cmd, encode_opts.common);
  add_data(*encode_cmd, encode_opts.data);
  encode_cmd->add_option("--model", encode_opts.model, "model file")->required();
  encode_cmd->add_option("--layer", encode_opts.layer, "top layer (0: all)");
  encode_cmd->add_option("--gamma0", encode_opts.gamma0, "temporal prior weight (0: off)");

  CodeOptions decode_opts;
  CLI::App* decode_cmd = app.add_subcommand("decode", "reconstruct from beta, or report the round trip");
  add_common(*decode_cmd, decode_opts.common);
  add_data(*decode_cmd, decode_opts.data);
  decode_cmd->add_option("--model", decode_opts.model, "model file")->required();
  decode_cmd->add_option("--layer", decode_opts.layer, "layer to decode from (0: top)");
  decode_cmd->add_option("--beta", decode_opts.beta, "beta CSV from encode (otherwise round trip on data)");
  decode_cmd->add_option("--unwhiten", decode_opts.unwhiten, "undo whitening on reconstructions from --beta");

  AnalyzeOptions analyze;
  CLI::App* analyze_cmd = app.add_subcommand("analyze", "smoothness, affinity, needle and neighbour tables");
  add_common(*analyze_cmd, analyze.common);
  add_data(*analyze_cmd, analyze.data);
  analyze_cmd->add_option("--model", analyze.model, "model file")->required();
  analyze_cmd->add_option("--anchors", analyze.anchors, "affinity groups per layer");
  analyze_cmd->add_option("--group", analyze.group, "neighbours per affinity group");
  analyze_cmd->add_option("--top-m", analyze.top_m, "well-fit elements for neighbour statistics");
  analyze_cmd->add_option("--top-k", analyze.top_k, "neighbours per element");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  const auto config_of = [&](CLI::App* cmd) -> std::string {
    if (cmd == disc_cmd) return disc.common.config;
    if (cmd == train_cmd) return train.common.config;
    if (cmd == encode_cmd) return encode_opts.common.config;
    if (cmd == decode_cmd) return decode_opts.common.config;
    return analyze.common.config;
  };

  try {
    CLI::App* cmd = app.get_subcommands().front();
    if (const std::string cfg = config_of(cmd); !cfg.empty()) apply_config(*cmd, cfg);
    if (cmd == disc_cmd) return run_disc_demo_cmd(*cmd, disc);
    if (cmd == train_cmd) return run_train_cmd(*cmd, train);
    if (cmd == encode_cmd) return run_encode_cmd(*cmd, encode_opts);
    if (cmd == decode_cmd) return run_decode_cmd(*cmd, decode_opts);
    return run_analyze_cmd(*cmd, analyze);
  } catch (const smt::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  }
}
