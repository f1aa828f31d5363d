#pragma once

// Binary model files, little-endian:
//   "SMT1" | u32 format_version | u32 depth | u64 payload_size | payload | u64 FNV-1a(payload)

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "smt/error.hpp"
#include "smt/model.hpp"

namespace smt {

inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

template <typename T>
T to_little_endian(T v) {
  static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
  if constexpr (std::endian::native == std::endian::big) {
    std::array<unsigned char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    std::reverse(b.begin(), b.end());
    std::memcpy(&v, b.data(), sizeof(T));
  }
  return v;
}

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    v = to_little_endian(v);
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void u8(std::uint8_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f64(double v) { put(v); }
  void index(Index v) { u64(static_cast<std::uint64_t>(v)); }

  // Row-major.
  void matrix(const Matrix& m) {
    index(m.rows());
    index(m.cols());
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) f64(m(i, j));
  }
  void vector(const Vector& v) {
    index(v.size());
    for (Index i = 0; i < v.size(); ++i) f64(v[i]);
  }

  const std::vector<unsigned char>& bytes() const { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T get() {
    require(pos_ + sizeof(T) <= size_, ErrorKind::TruncatedFile, "model payload ends early");
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little_endian(v);
  }
  std::uint8_t u8() { return get<std::uint8_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() { return get<double>(); }
  Index index() {
    const std::uint64_t v = u64();
    require(v <= (std::uint64_t{1} << 40), ErrorKind::InvalidArgument, "model payload: implausible size");
    return static_cast<Index>(v);
  }
  Matrix matrix() {
    const Index r = index(), c = index();
    require(static_cast<std::size_t>(r * c) * 8 <= size_ - pos_, ErrorKind::TruncatedFile, "model matrix truncated");
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = f64();
    return m;
  }
  Vector vector() {
    const Index n = index();
    require(static_cast<std::size_t>(n) * 8 <= size_ - pos_, ErrorKind::TruncatedFile, "model vector truncated");
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = f64();
    return v;
  }
  bool done() const { return pos_ == size_; }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline constexpr std::array<char, 4> kModelMagic{'S', 'M', 'T', '1'};
inline constexpr std::size_t kModelHeaderSize = 4 + 4 + 4 + 8;

inline void write_solver(ByteWriter& w, const SolverOptions& s) {
  w.f64(s.kkt_tol);
  w.u64(static_cast<std::uint64_t>(s.max_iters));
  w.f64(s.activation_floor);
  w.u64(static_cast<std::uint64_t>(s.polish_every));
  w.u64(static_cast<std::uint64_t>(s.polish_max_support));
}

inline SolverOptions read_solver(ByteReader& r) {
  SolverOptions s;
  s.kkt_tol = r.f64();
  s.max_iters = static_cast<decltype(s.max_iters)>(r.u64());
  s.activation_floor = r.f64();
  s.polish_every = static_cast<decltype(s.polish_every)>(r.u64());
  s.polish_max_support = static_cast<decltype(s.polish_max_support)>(r.u64());
  return s;
}

}  // namespace detail

inline std::vector<unsigned char> serialize_model(const SmtModel& model) {
  model.validate();
  detail::ByteWriter p;
  p.u8(model.whitening ? 1 : 0);
  if (model.whitening) {
    p.index(model.whitening->frame_size);
    p.f64(model.whitening->r0);
  }
  for (const SmtLayer& layer : model.layers) {
    p.u8(static_cast<std::uint8_t>(layer.mode));
    p.index(layer.knn_k);
    p.u8(layer.dict.unit_norm() ? 1 : 0);
    p.u64(layer.dict.trained_steps());
    p.matrix(layer.dict.atoms());
    p.u8(static_cast<std::uint8_t>(layer.embed.method));
    p.matrix(layer.embed.p);
    p.matrix(layer.embed.metric.matrix);
    p.u64(static_cast<std::uint64_t>(layer.embed.metric.sample_count));
    p.f64(layer.embed.metric.ridge);
    p.vector(layer.embed.eigenvalues);
    p.f64(layer.lambda_inference);
    p.f64(layer.recovery.lambda);
    p.f64(layer.recovery.lambda_fraction);
    p.u8(layer.recovery.use_canonical_weights ? 1 : 0);
    detail::write_solver(p, layer.recovery.solver);
    detail::write_solver(p, layer.solver);
    p.vector(layer.input_mean);
    p.f64(layer.input_scale);
  }

  detail::ByteWriter out;
  for (char c : detail::kModelMagic) out.u8(static_cast<std::uint8_t>(c));
  out.u32(model.format_version);
  out.u32(static_cast<std::uint32_t>(model.layers.size()));
  out.u64(p.bytes().size());
  std::vector<unsigned char> bytes = out.bytes();
  bytes.insert(bytes.end(), p.bytes().begin(), p.bytes().end());
  detail::ByteWriter tail;
  tail.u64(fnv1a64(p.bytes().data(), p.bytes().size()));
  bytes.insert(bytes.end(), tail.bytes().begin(), tail.bytes().end());
  return bytes;
}

/// Order of checks: magic, version, truncation, checksum, then parsing.
inline SmtModel deserialize_model(const std::vector<unsigned char>& bytes) {
  require(bytes.size() >= 4, ErrorKind::TruncatedFile, "model file shorter than its magic");
  require(std::memcmp(bytes.data(), detail::kModelMagic.data(), 4) == 0, ErrorKind::BadMagic,
          "not an SMT model file");
  require(bytes.size() >= detail::kModelHeaderSize, ErrorKind::TruncatedFile, "model header truncated");
  detail::ByteReader header(bytes.data() + 4, detail::kModelHeaderSize - 4);
  const std::uint32_t version = header.u32();
  require(version == kModelFormatVersion, ErrorKind::VersionMismatch,
          "model format version " + std::to_string(version) + ", expected " + std::to_string(kModelFormatVersion));
  const std::uint32_t depth = header.u32();
  const std::uint64_t payload_size = header.u64();
  require(bytes.size() - detail::kModelHeaderSize >= 8 &&
              payload_size <= bytes.size() - detail::kModelHeaderSize - 8,
          ErrorKind::TruncatedFile, "model payload truncated");
  const unsigned char* payload = bytes.data() + detail::kModelHeaderSize;
  detail::ByteReader tail(payload + payload_size, 8);
  require(tail.u64() == fnv1a64(payload, static_cast<std::size_t>(payload_size)), ErrorKind::ChecksumMismatch,
          "model checksum mismatch");

  detail::ByteReader r(payload, static_cast<std::size_t>(payload_size));
  SmtModel model;
  model.format_version = version;
  if (r.u8()) {
    const Index frame_size = r.index();
    const double r0 = r.f64();
    model.whitening = whitening_mask(frame_size, r0);
  }
  for (std::uint32_t l = 0; l < depth; ++l) {
    SmtLayer layer;
    const std::uint8_t mode = r.u8();
    require(mode <= 1, ErrorKind::InvalidArgument, "model: unknown coding mode");
    layer.mode = static_cast<CodingMode>(mode);
    layer.knn_k = r.index();
    const bool unit = r.u8() != 0;
    const std::uint64_t steps = r.u64();
    Matrix atoms = r.matrix();
    layer.dict = unit ? Dictionary::from_unit_atoms(std::move(atoms), steps) : Dictionary::landmarks(std::move(atoms));
    const std::uint8_t method = r.u8();
    require(method <= 1, ErrorKind::InvalidArgument, "model: unknown embedding method");
    layer.embed.method = static_cast<EmbeddingMethod>(method);
    layer.embed.p = r.matrix();
    layer.embed.metric.matrix = r.matrix();
    layer.embed.metric.sample_count = static_cast<std::size_t>(r.u64());
    layer.embed.metric.ridge = r.f64();
    layer.embed.eigenvalues = r.vector();
    layer.lambda_inference = r.f64();
    layer.recovery.lambda = r.f64();
    layer.recovery.lambda_fraction = r.f64();
    layer.recovery.use_canonical_weights = r.u8() != 0;
    layer.recovery.solver = detail::read_solver(r);
    layer.solver = detail::read_solver(r);
    layer.input_mean = r.vector();
    layer.input_scale = r.f64();
    model.layers.push_back(std::move(layer));
  }
  require(r.done(), ErrorKind::InvalidArgument, "model payload has trailing bytes");
  model.validate();
  return model;
}

inline void save_model(const SmtModel& model, const std::string& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::Io, "write failed: " + path);
}

inline SmtModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace smt
