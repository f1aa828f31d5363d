#pragma once

// Plumbing shared by the smt subcommands: config files, output directory,
// CSV tables, the JSON sidecar and exit codes.

#include <CLI11.hpp>
#include <Eigen/Core>
#include <fftw3.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "smt/error.hpp"
#include "smt/log.hpp"
#include "smt/model_io.hpp"
#include "smt/parallel.hpp"

namespace smt::cli {

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kValidation = 2, kNumerical = 3, kIo = 4 };

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io:
    case ErrorKind::BadMagic:
    case ErrorKind::VersionMismatch:
    case ErrorKind::TruncatedFile:
    case ErrorKind::ChecksumMismatch:
      return kIo;
    case ErrorKind::NonFinite:
    case ErrorKind::NonSymmetric:
    case ErrorKind::NotPositiveDefinite:
    case ErrorKind::RankCollapse:
    case ErrorKind::DegenerateNeighborhood:
    case ErrorKind::InsufficientWellFit:
    case ErrorKind::ZeroColumn:
    case ErrorKind::ZeroElement:
      return kNumerical;
    default:
      return kValidation;
  }
}

/// key=value lines, '#' starts a comment, blank lines ignored.
inline std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open config " + path);
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::InvalidArgument,
            path + ":" + std::to_string(n) + ": expected key=value");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

/// Fills options not given on the command line from the config file. Unknown
/// keys are errors.
inline void apply_config(CLI::App& cmd, const std::string& path) {
  for (const auto& [key, value] : read_config_file(path)) {
    CLI::Option* opt = cmd.get_option_no_throw("--" + key);
    require(opt != nullptr && key != "config", ErrorKind::InvalidArgument,
            "unknown config key '" + key + "' for " + cmd.get_name());
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

/// Every option of `cmd` with its effective value, excluding run plumbing.
inline std::map<std::string, std::string> resolved_options(const CLI::App& cmd) {
  static const std::vector<std::string> skip{"help", "config", "out", "threads"};
  std::map<std::string, std::string> out;
  for (const CLI::Option* opt : cmd.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || std::find(skip.begin(), skip.end(), name) != skip.end()) continue;
    if (opt->count() > 0) {
      std::string joined;
      for (const auto& r : opt->results()) joined += (joined.empty() ? "" : ",") + r;
      out[name] = joined;
    } else {
      out[name] = opt->get_default_str();
    }
  }
  return out;
}

inline unsigned resolve_threads(unsigned flag) { return flag > 0 ? flag : default_threads(); }

/// Output directory with a run log (the only place a timestamp appears), CSV
/// tables and a JSON sidecar describing the run.
class RunOutput {
 public:
  RunOutput(const std::string& dir, std::string command, std::map<std::string, std::string> config,
            std::uint64_t seed)
      : dir_(dir), command_(std::move(command)), config_(std::move(config)), seed_(seed) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    require(!ec, ErrorKind::Io, "cannot create output directory " + dir + ": " + ec.message());
    log_.open(dir_ / "run.log", std::ios::trunc);
    require(static_cast<bool>(log_), ErrorKind::Io, "cannot write " + (dir_ / "run.log").string());
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    log_ << "started " << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ") << '\n';
    log_ << "command " << command_ << '\n';
    for (const auto& [k, v] : config_) log_ << k << '=' << v << '\n';
    previous_sink_ = set_log_sink([this](const std::string& msg) {
      std::clog << "warning: " << msg << '\n';
      log_ << "warning: " << msg << '\n';
    });
  }

  RunOutput(const RunOutput&) = delete;
  RunOutput& operator=(const RunOutput&) = delete;
  ~RunOutput() { set_log_sink(previous_sink_); }

  std::filesystem::path path(const std::string& name) const { return dir_ / name; }

  std::ofstream open(const std::string& name) {
    std::ofstream out(path(name), std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path(name).string());
    out.precision(17);
    files_.push_back(name);
    return out;
  }

  void note(const std::string& line) { log_ << line << '\n'; }
  void add_file(const std::string& name) { files_.push_back(name); }
  void set_result(const std::string& key, nlohmann::json value) { results_[key] = std::move(value); }

  std::string config_hash() const {
    std::string text;
    for (const auto& [k, v] : config_) text += k + '=' + v + '\n';
    std::ostringstream hex;
    hex << std::hex << std::setw(16) << std::setfill('0')
        << fnv1a64(reinterpret_cast<const unsigned char*>(text.data()), text.size());
    return hex.str();
  }

  /// Writes run.json; called once the command has produced its tables.
  void finish() {
    nlohmann::json meta;
    meta["command"] = command_;
    meta["seed"] = seed_;
    meta["config"] = config_;
    meta["config_hash"] = config_hash();
    meta["outputs"] = files_;
    meta["results"] = results_;
    nlohmann::json versions;
    versions["smt"] = kVersion;
    versions["model_format"] = kModelFormatVersion;
    versions["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION);
    versions["fftw"] = std::string(fftw_version);
    meta["versions"] = versions;
    std::ofstream out(path("run.json"), std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write run.json");
    out << meta.dump(2) << '\n';
    log_ << "finished\n";
  }

 private:
  std::filesystem::path dir_;
  std::string command_;
  std::map<std::string, std::string> config_;
  std::uint64_t seed_;
  std::ofstream log_;
  LogSink previous_sink_;
  std::vector<std::string> files_;
  nlohmann::json results_ = nlohmann::json::object();
};

/// Rows of `m` as CSV with leading time and chunk columns.
inline void write_series_csv(std::ostream& out, const Matrix& m, const std::vector<Index>& chunk_starts,
                             const std::string& prefix) {
  out << "t,chunk";
  for (Index i = 0; i < m.rows(); ++i) out << ',' << prefix << i;
  out << '\n';
  std::size_t chunk = 0;
  for (Index t = 0; t < m.cols(); ++t) {
    while (chunk + 1 < chunk_starts.size() && chunk_starts[chunk + 1] <= t) ++chunk;
    out << t << ',' << chunk;
    for (Index i = 0; i < m.rows(); ++i) out << ',' << m(i, t);
    out << '\n';
  }
}

/// Reads a table written by write_series_csv back into columns and chunk starts.
inline std::pair<Matrix, std::vector<Index>> read_series_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::TruncatedFile, path + ": missing header");
  const auto width = static_cast<Index>(std::count(line.begin(), line.end(), ',')) - 1;
  require(width > 0, ErrorKind::InvalidArgument, path + ": no value columns");
  std::vector<std::vector<double>> rows;
  std::vector<Index> starts;
  Index last_chunk = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> values;
    Index t = 0, chunk = 0;
    for (Index c = 0; std::getline(ss, cell, ','); ++c) {
      try {
        if (c == 0) t = std::stol(cell);
        else if (c == 1) chunk = std::stol(cell);
        else values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(ErrorKind::InvalidArgument, path + ": bad number '" + cell + "'");
      }
    }
    require(static_cast<Index>(values.size()) == width, ErrorKind::SizeMismatch, path + ": ragged row");
    if (chunk != last_chunk) {
      starts.push_back(static_cast<Index>(rows.size()));
      last_chunk = chunk;
    }
    (void)t;
    rows.push_back(std::move(values));
  }
  require(!rows.empty(), ErrorKind::EmptySource, path + ": no rows");
  Matrix m(width, static_cast<Index>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (Index i = 0; i < width; ++i) m(i, static_cast<Index>(t)) = rows[t][static_cast<std::size_t>(i)];
  return {m, starts};
}

}  // namespace smt::cli
