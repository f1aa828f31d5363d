#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "smt/error.hpp"
#include "smt/numerics.hpp"

namespace smt {

/// Temporally ordered columns split into contiguous chunks. `chunk_starts`
/// holds the first column of each chunk, strictly increasing from 0.
struct SequenceBatch {
  Matrix signals;
  std::vector<Index> chunk_starts;
  double dt = 1.0;

  Index num_timepoints() const { return signals.cols(); }
  Index dim() const { return signals.rows(); }
  std::size_t num_chunks() const { return chunk_starts.size(); }

  std::pair<Index, Index> chunk_range(std::size_t c) const {
    const Index begin = chunk_starts[c];
    const Index end = c + 1 < chunk_starts.size() ? chunk_starts[c + 1] : signals.cols();
    return {begin, end};
  }

  auto chunk(std::size_t c) const {
    const auto [begin, end] = chunk_range(c);
    return signals.middleCols(begin, end - begin);
  }

  /// Single chunk covering all columns.
  static SequenceBatch single(Matrix signals, double dt = 1.0) {
    SequenceBatch b{std::move(signals), {0}, dt};
    if (b.signals.cols() == 0) b.chunk_starts.clear();
    return b;
  }

  void validate() const {
    const Index t = signals.cols();
    for (std::size_t i = 0; i < chunk_starts.size(); ++i) {
      require(chunk_starts[i] >= 0 && chunk_starts[i] < t, ErrorKind::InvalidArgument,
              "chunk boundary outside [0, T)");
      if (i == 0)
        require(chunk_starts[0] == 0, ErrorKind::InvalidArgument, "first chunk must start at 0");
      else
        require(chunk_starts[i] > chunk_starts[i - 1], ErrorKind::InvalidArgument,
                "chunk boundaries must be strictly increasing");
    }
    require(t == 0 || !chunk_starts.empty(), ErrorKind::InvalidArgument, "non-empty batch without chunks");
  }

  /// Appends `chunk` as a new chunk.
  void append_chunk(const Matrix& chunk) {
    if (signals.size() == 0) signals.resize(chunk.rows(), 0);
    require(chunk.rows() == signals.rows(), ErrorKind::DimensionMismatch, "append_chunk: row count");
    if (chunk.cols() == 0) return;
    const Index start = signals.cols();
    signals.conservativeResize(Eigen::NoChange, start + chunk.cols());
    signals.rightCols(chunk.cols()) = chunk;
    chunk_starts.push_back(start);
  }
};

}  // namespace smt
