#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace smt {

enum class ErrorKind {
  NonSymmetric,
  NonFinite,
  NotPositiveDefinite,
  EmptyBatch,
  DimensionMismatch,
  InvalidArgument,
  DegenerateNeighborhood,
  ZeroDimension,
  EmptySource,
  ChunkTooShort,
  InsufficientTimepoints,
  RankCollapse,
  LayerOutOfRange,
  SizeMismatch,
  EmptyStream,
  ZeroColumn,
  ZeroElement,
  InsufficientWellFit,
  BadMagic,
  VersionMismatch,
  TruncatedFile,
  ChecksumMismatch,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonSymmetric: return "NonSymmetric";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DegenerateNeighborhood: return "DegenerateNeighborhood";
    case ErrorKind::ZeroDimension: return "ZeroDimension";
    case ErrorKind::EmptySource: return "EmptySource";
    case ErrorKind::ChunkTooShort: return "ChunkTooShort";
    case ErrorKind::InsufficientTimepoints: return "InsufficientTimepoints";
    case ErrorKind::RankCollapse: return "RankCollapse";
    case ErrorKind::LayerOutOfRange: return "LayerOutOfRange";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::EmptyStream: return "EmptyStream";
    case ErrorKind::ZeroColumn: return "ZeroColumn";
    case ErrorKind::ZeroElement: return "ZeroElement";
    case ErrorKind::InsufficientWellFit: return "InsufficientWellFit";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` identifies the failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace smt
