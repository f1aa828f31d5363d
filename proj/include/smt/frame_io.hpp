#pragma once

// Frame files: binary PGM (8 or 16 bit) and SMTF, a raw little-endian
// float32 stack with a 16-byte header ("SMTF", u32 width, u32 height,
// u32 frame count) followed by frames in row-major order.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "smt/error.hpp"
#include "smt/numerics.hpp"

namespace smt {

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::Io, "write failed: " + path);
}

inline std::uint32_t load_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline void store_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

}  // namespace detail

/// Binary PGM (P5) to values in [0, 1] (sample / maxval). Rows are image rows.
inline Matrix read_pgm(const std::string& path) {
  const auto bytes = detail::read_file(path);
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_space();
    require(pos < bytes.size() && std::isdigit(bytes[pos]), ErrorKind::BadMagic, "malformed PGM header: " + path);
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    return v;
  };
  require(bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5', ErrorKind::BadMagic, "not a binary PGM: " + path);
  pos = 2;
  const long width = number(), height = number(), maxval = number();
  require(width > 0 && height > 0 && maxval > 0 && maxval < 65536, ErrorKind::BadMagic, "bad PGM header: " + path);
  ++pos;  // single whitespace before the raster
  const std::size_t bpp = maxval < 256 ? 1 : 2;
  require(pos + static_cast<std::size_t>(width * height) * bpp <= bytes.size(), ErrorKind::TruncatedFile,
          "PGM raster truncated: " + path);
  Matrix frame(height, width);
  for (long r = 0; r < height; ++r)
    for (long c = 0; c < width; ++c) {
      const std::size_t i = pos + static_cast<std::size_t>(r * width + c) * bpp;
      const unsigned v = bpp == 1 ? bytes[i] : (static_cast<unsigned>(bytes[i]) << 8 | bytes[i + 1]);
      frame(r, c) = static_cast<double>(v) / static_cast<double>(maxval);
    }
  return frame;
}

/// Writes values clamped to [0, 1] as an 8-bit (maxval 255) or 16-bit
/// (maxval 65535) binary PGM.
inline void write_pgm(const std::string& path, const Matrix& frame, int bits = 8) {
  require(bits == 8 || bits == 16, ErrorKind::InvalidArgument, "write_pgm: bits must be 8 or 16");
  const unsigned maxval = bits == 8 ? 255u : 65535u;
  const std::string header =
      "P5\n" + std::to_string(frame.cols()) + " " + std::to_string(frame.rows()) + "\n" + std::to_string(maxval) + "\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  for (Index r = 0; r < frame.rows(); ++r)
    for (Index c = 0; c < frame.cols(); ++c) {
      const auto v = static_cast<unsigned>(std::lround(std::clamp(frame(r, c), 0.0, 1.0) * maxval));
      if (bits == 16) bytes.push_back(static_cast<unsigned char>(v >> 8));
      bytes.push_back(static_cast<unsigned char>(v & 0xff));
    }
  detail::write_file(path, bytes);
}

inline std::vector<Matrix> read_smtf(const std::string& path) {
  const auto bytes = detail::read_file(path);
  require(bytes.size() >= 16, ErrorKind::TruncatedFile, "SMTF header truncated: " + path);
  require(std::memcmp(bytes.data(), "SMTF", 4) == 0, ErrorKind::BadMagic, "not an SMTF file: " + path);
  const std::uint32_t width = detail::load_u32le(bytes.data() + 4);
  const std::uint32_t height = detail::load_u32le(bytes.data() + 8);
  const std::uint32_t count = detail::load_u32le(bytes.data() + 12);
  const std::uint64_t need = 16 + std::uint64_t{width} * height * count * 4;
  require(bytes.size() >= need, ErrorKind::TruncatedFile, "SMTF frames truncated: " + path);
  std::vector<Matrix> frames(count, Matrix(height, width));
  std::size_t pos = 16;
  for (auto& f : frames)
    for (std::uint32_t r = 0; r < height; ++r)
      for (std::uint32_t c = 0; c < width; ++c) {
        const std::uint32_t raw = detail::load_u32le(bytes.data() + pos);
        pos += 4;
        f(r, c) = static_cast<double>(std::bit_cast<float>(raw));
      }
  return frames;
}

inline void write_smtf(const std::string& path, const std::vector<Matrix>& frames) {
  const Index h = frames.empty() ? 0 : frames[0].rows(), w = frames.empty() ? 0 : frames[0].cols();
  for (const auto& f : frames)
    require(f.rows() == h && f.cols() == w, ErrorKind::SizeMismatch, "write_smtf: frame sizes differ");
  std::vector<unsigned char> bytes{'S', 'M', 'T', 'F'};
  detail::store_u32le(bytes, static_cast<std::uint32_t>(w));
  detail::store_u32le(bytes, static_cast<std::uint32_t>(h));
  detail::store_u32le(bytes, static_cast<std::uint32_t>(frames.size()));
  for (const auto& f : frames)
    for (Index r = 0; r < h; ++r)
      for (Index c = 0; c < w; ++c) detail::store_u32le(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(f(r, c))));
  detail::write_file(path, bytes);
}

}  // namespace smt
