#pragma once

// Fourier-domain whitening with the amplitude mask w(r) = r exp(-(r/r0)^4).

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <memory>
#include <mutex>

#include "smt/error.hpp"
#include "smt/numerics.hpp"

namespace smt {

struct WhiteningSpec {
  Index frame_size = 0;
  double r0 = 48.0;
  Matrix mask;  // frame_size x frame_size, FFT index order
};

/// Signed frequency of FFT bin k for an n-point transform.
inline double signed_frequency(Index k, Index n) { return static_cast<double>(k < n / 2 ? k : k - n); }

inline double whitening_gain(double r, double r0) { return r * std::exp(-std::pow(r / r0, 4)); }

inline WhiteningSpec whitening_mask(Index frame_size, double r0) {
  require(frame_size > 0 && frame_size % 2 == 0, ErrorKind::InvalidArgument, "whitening_mask: frame_size must be even");
  require(r0 > 0.0, ErrorKind::InvalidArgument, "whitening_mask: r0 must be positive");
  WhiteningSpec spec{frame_size, r0, Matrix(frame_size, frame_size)};
  for (Index i = 0; i < frame_size; ++i)
    for (Index j = 0; j < frame_size; ++j) {
      const double u = signed_frequency(j, frame_size), v = signed_frequency(i, frame_size);
      // Sum of squares in a fixed order keeps w(u,v) = w(v,u) exact.
      const double r = std::sqrt(std::min(u * u, v * v) + std::max(u * u, v * v));
      spec.mask(i, j) = whitening_gain(r, r0);
    }
  return spec;
}

/// Mask with r0 = 48 cycles per frame at 128 pixels, scaled linearly.
inline WhiteningSpec scaled_whitening(Index frame_size, double r0_at_128 = 48.0) {
  return whitening_mask(frame_size, r0_at_128 * static_cast<double>(frame_size) / 128.0);
}

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(fftw_complex* p) const { fftw_free(p); }
};

// Real part of IFFT(gain .* FFT(frame)).
inline Matrix fourier_filter(const Matrix& frame, const Matrix& gain) {
  const Index n0 = frame.rows(), n1 = frame.cols();
  const auto count = static_cast<std::size_t>(n0 * n1);
  std::unique_ptr<fftw_complex, FftwFree> buf(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * count)));
  require(buf != nullptr, ErrorKind::Io, "fftw_malloc failed");
  fftw_plan forward, backward;
  {
    std::lock_guard lock(fftw_planner_mutex());
    forward = fftw_plan_dft_2d(static_cast<int>(n0), static_cast<int>(n1), buf.get(), buf.get(), FFTW_FORWARD,
                               FFTW_ESTIMATE);
    backward = fftw_plan_dft_2d(static_cast<int>(n0), static_cast<int>(n1), buf.get(), buf.get(), FFTW_BACKWARD,
                                FFTW_ESTIMATE);
  }
  auto* data = buf.get();
  for (Index i = 0; i < n0; ++i)
    for (Index j = 0; j < n1; ++j) {
      data[i * n1 + j][0] = frame(i, j);
      data[i * n1 + j][1] = 0.0;
    }
  fftw_execute(forward);
  for (Index i = 0; i < n0; ++i)
    for (Index j = 0; j < n1; ++j) {
      data[i * n1 + j][0] *= gain(i, j);
      data[i * n1 + j][1] *= gain(i, j);
    }
  fftw_execute(backward);
  Matrix out(n0, n1);
  const double scale = 1.0 / static_cast<double>(count);
  for (Index i = 0; i < n0; ++i)
    for (Index j = 0; j < n1; ++j) out(i, j) = data[i * n1 + j][0] * scale;
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
  }
  return out;
}

inline void check_frame(const Matrix& frame, const WhiteningSpec& spec) {
  require(frame.rows() == spec.frame_size && frame.cols() == spec.frame_size, ErrorKind::SizeMismatch,
          "frame does not match whitening spec size");
}

}  // namespace detail

inline Matrix whiten_frame(const Matrix& frame, const WhiteningSpec& spec) {
  detail::check_frame(frame, spec);
  return detail::fourier_filter(frame, spec.mask);
}

/// Divides the spectrum by max(mask, floor * max(mask)).
inline Matrix unwhiten_frame(const Matrix& frame, const WhiteningSpec& spec, double floor = 1e-3) {
  detail::check_frame(frame, spec);
  require(floor > 0.0, ErrorKind::InvalidArgument, "unwhiten_frame: floor must be positive");
  const double lo = floor * spec.mask.maxCoeff();
  const Matrix gain = spec.mask.unaryExpr([lo](double w) { return 1.0 / std::max(w, lo); });
  return detail::fourier_filter(frame, gain);
}

/// Patches are flattened column-major; these apply the filters to a
/// flattened square patch.
inline Vector whiten_patch(const Vector& patch, const WhiteningSpec& spec) {
  require(patch.size() == spec.frame_size * spec.frame_size, ErrorKind::SizeMismatch, "whiten_patch: size");
  const Matrix m = Eigen::Map<const Matrix>(patch.data(), spec.frame_size, spec.frame_size);
  const Matrix w = whiten_frame(m, spec);
  return Eigen::Map<const Vector>(w.data(), w.size());
}

inline Vector unwhiten_patch(const Vector& patch, const WhiteningSpec& spec, double floor = 1e-3) {
  require(patch.size() == spec.frame_size * spec.frame_size, ErrorKind::SizeMismatch, "unwhiten_patch: size");
  const Matrix m = Eigen::Map<const Matrix>(patch.data(), spec.frame_size, spec.frame_size);
  const Matrix w = unwhiten_frame(m, spec, floor);
  return Eigen::Map<const Vector>(w.data(), w.size());
}

}  // namespace smt
