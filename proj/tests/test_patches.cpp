#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "expect_error.hpp"
#include "smt/embedding.hpp"
#include "smt/frame_io.hpp"
#include "smt/log.hpp"
#include "smt/patches.hpp"

namespace {

using smt::ErrorKind;
using smt::Index;
using smt::Matrix;
using smt::Vector;
using smt::testing::expect_error;

std::vector<Matrix> numbered_frames(Index count, Index rows, Index cols) {
  std::vector<Matrix> frames;
  for (Index t = 0; t < count; ++t) {
    Matrix f(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) f(r, c) = 10000.0 * t + 100.0 * r + c;
    frames.push_back(f);
  }
  return frames;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("smt_test_" + name);
}

TEST(Patches, FlattenRoundTrip) {
  Matrix p(3, 3);
  p << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  const Vector v = smt::flatten_patch(p);
  EXPECT_EQ(v[1], 4.0);  // column-major
  EXPECT_EQ(smt::unflatten_patch(v, 3), p);
  expect_error(ErrorKind::SizeMismatch, [&] { smt::unflatten_patch(v, 2); });
}

TEST(Patches, ExtractionLayout) {
  const auto frames = numbered_frames(9, 8, 12);
  std::vector<std::string> warnings;
  auto previous = smt::set_log_sink([&](const std::string& m) { warnings.push_back(m); });
  const auto batch = smt::extract_patch_sequences(frames, 4, 4, 4);
  smt::set_log_sink(previous);
  // 2 x 3 windows; frames split 4 + 4 + a dropped 1-frame tail.
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_EQ(batch.dim(), 16);
  EXPECT_EQ(batch.num_timepoints(), 6 * 8);
  EXPECT_EQ(batch.num_chunks(), 12u);
  batch.validate();
  // Window order: column offset outer, row offset inner; then time.
  const Matrix second = smt::unflatten_patch(batch.signals.col(8), 4);
  EXPECT_EQ(second(0, 0), 400.0);
  const Matrix later = smt::unflatten_patch(batch.signals.col(5), 4);
  EXPECT_EQ(later(1, 2), 10000.0 * 5 + 100.0 * 1 + 2);
  const Matrix third_window = smt::unflatten_patch(batch.signals.col(16), 4);
  EXPECT_EQ(third_window(0, 0), 4.0);
}

TEST(Patches, ShortTailKept) {
  const auto frames = numbered_frames(12, 4, 4);
  const auto batch = smt::extract_patch_sequences(frames, 4, 4, 9);
  EXPECT_EQ(batch.chunk_starts, (std::vector<Index>{0, 9}));
  EXPECT_EQ(batch.num_timepoints(), 12);
}

TEST(Patches, ExtractionErrors) {
  expect_error(ErrorKind::EmptyStream, [] { smt::extract_patch_sequences({}, 4, 4, 9); });
  auto frames = numbered_frames(5, 6, 6);
  expect_error(ErrorKind::SizeMismatch, [&] { smt::extract_patch_sequences(frames, 8, 8, 5); });
  expect_error(ErrorKind::ChunkTooShort, [&] { smt::extract_patch_sequences(frames, 4, 4, 2); });
  auto previous = smt::set_log_sink([](const std::string&) {});
  expect_error(ErrorKind::ChunkTooShort, [&] {
    smt::extract_patch_sequences(numbered_frames(2, 6, 6), 4, 4, 9);
  });
  smt::set_log_sink(previous);
  frames[2] = Matrix::Zero(5, 6);
  expect_error(ErrorKind::SizeMismatch, [&] { smt::extract_patch_sequences(frames, 4, 4, 5); });
}

TEST(MovingFeatures, StaticBlobHasZeroSecondDifference) {
  smt::MovingFeatureConfig cfg;
  cfg.patch = 12;
  cfg.num_sequences = 4;
  cfg.features = {smt::FeatureKind::Blob};
  cfg.max_speed = 0.0;
  cfg.max_rotation = 0.0;
  const auto data = smt::make_moving_feature_sequences(cfg, 3);
  const Matrix d = smt::chunked_second_differences(data.batch);
  EXPECT_LE(d.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MovingFeatures, TracksAreAffineAndFramesMatchRenderer) {
  smt::MovingFeatureConfig cfg;
  cfg.patch = 16;
  cfg.num_sequences = 20;
  cfg.features = {smt::FeatureKind::Gabor, smt::FeatureKind::Blob};
  cfg.whiten = false;
  const auto data = smt::make_moving_feature_sequences(cfg, 5);
  ASSERT_EQ(data.tracks.size(), 20u * 9u);
  EXPECT_FALSE(data.whitening.has_value());
  Matrix xy(3, static_cast<Index>(data.tracks.size()));
  for (std::size_t i = 0; i < data.tracks.size(); ++i) {
    xy(0, static_cast<Index>(i)) = data.tracks[i].x;
    xy(1, static_cast<Index>(i)) = data.tracks[i].y;
    xy(2, static_cast<Index>(i)) = data.tracks[i].theta;
  }
  const Matrix d = smt::chunked_second_differences(smt::SequenceBatch{xy, data.batch.chunk_starts, 1.0});
  EXPECT_LE(d.cwiseAbs().maxCoeff(), 1e-12);
  for (std::size_t s = 0; s < 20; ++s) {
    const auto& a = data.tracks[s * 9];
    const auto& b = data.tracks[s * 9 + 1];
    EXPECT_LE(std::hypot(b.x - a.x, b.y - a.y), cfg.max_speed + 1e-12);
    EXPECT_LE(std::abs(b.theta - a.theta), cfg.max_rotation + 1e-12);
  }
}

TEST(MovingFeatures, WhitenedFramesUseScaledMask) {
  smt::MovingFeatureConfig cfg;
  cfg.patch = 16;
  cfg.num_sequences = 3;
  cfg.features = {smt::FeatureKind::Blob};
  const auto white = smt::make_moving_feature_sequences(cfg, 8);
  cfg.whiten = false;
  const auto raw = smt::make_moving_feature_sequences(cfg, 8);
  ASSERT_TRUE(white.whitening.has_value());
  EXPECT_DOUBLE_EQ(white.whitening->r0, 6.0);
  for (Index t = 0; t < raw.batch.num_timepoints(); ++t) {
    const Vector expected = smt::whiten_patch(raw.batch.signals.col(t), *white.whitening);
    EXPECT_LE((Vector(white.batch.signals.col(t)) - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(MovingFeatures, KeepInsideBoundsTracks) {
  smt::MovingFeatureConfig cfg;
  cfg.patch = 16;
  cfg.num_sequences = 200;
  cfg.max_speed = 3.0;
  cfg.keep_inside = true;
  cfg.inside_margin = 2.0;
  cfg.whiten = false;
  const auto data = smt::make_moving_feature_sequences(cfg, 6);
  for (const auto& tr : data.tracks) {
    EXPECT_GE(tr.x, 2.0 - 1e-9);
    EXPECT_LE(tr.x, 13.0 + 1e-9);
    EXPECT_GE(tr.y, 2.0 - 1e-9);
    EXPECT_LE(tr.y, 13.0 + 1e-9);
  }
  cfg.inside_margin = 8.0;
  expect_error(ErrorKind::InvalidArgument, [&] { smt::make_moving_feature_sequences(cfg, 6); });
}

TEST(MovingFeatures, DeterministicAcrossThreads) {
  smt::MovingFeatureConfig cfg;
  cfg.patch = 12;
  cfg.num_sequences = 16;
  const auto a = smt::make_moving_feature_sequences(cfg, 2);
  cfg.threads = 4;
  const auto b = smt::make_moving_feature_sequences(cfg, 2);
  EXPECT_EQ(a.batch.signals, b.batch.signals);
  std::ostringstream sa, sb;
  smt::write_tracks_csv(sa, a.tracks);
  smt::write_tracks_csv(sb, b.tracks);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(sa.str().substr(0, 25), "sequence,frame,x,y,theta\n");
}

TEST(MovingFeatures, RenderedGaborCenter) {
  const Matrix g = smt::render_feature(21, smt::FeatureKind::Gabor, 10.0, 10.0, 0.0, 6.0, 2.0, 0.0);
  EXPECT_DOUBLE_EQ(g(10, 10), 1.0);
  EXPECT_NEAR(g(10, 13), std::exp(-9.0 / 8.0) * std::cos(3.14159265358979323846), 1e-12);
  EXPECT_NEAR(g(13, 10), std::exp(-9.0 / 8.0), 1e-12);  // along y the carrier is constant
}

TEST(FrameIo, PgmRoundTrip8And16) {
  Matrix f(3, 5);
  for (Index i = 0; i < f.size(); ++i) f.data()[i] = static_cast<double>(i) / 14.0;
  const auto path = temp_path("a.pgm").string();
  smt::write_pgm(path, f, 8);
  EXPECT_LE((smt::read_pgm(path) - f).cwiseAbs().maxCoeff(), 0.5 / 255 + 1e-12);
  smt::write_pgm(path, f, 16);
  const Matrix back = smt::read_pgm(path);
  EXPECT_EQ(back.rows(), 3);
  EXPECT_EQ(back.cols(), 5);
  EXPECT_LE((back - f).cwiseAbs().maxCoeff(), 0.5 / 65535 + 1e-12);
  std::filesystem::remove(path);
}

TEST(FrameIo, PgmHeaderWithComment) {
  const auto path = temp_path("c.pgm").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n# comment\n2 1\n255\n";
    out.put(static_cast<char>(0));
    out.put(static_cast<char>(255));
  }
  const Matrix f = smt::read_pgm(path);
  EXPECT_EQ(f(0, 0), 0.0);
  EXPECT_EQ(f(0, 1), 1.0);
  std::filesystem::remove(path);
}

TEST(FrameIo, SmtfRoundTripIsFloatExact) {
  std::vector<Matrix> frames(3, Matrix(4, 6));
  for (std::size_t k = 0; k < frames.size(); ++k)
    for (Index i = 0; i < frames[k].size(); ++i) frames[k].data()[i] = static_cast<float>(0.1 * i - 0.7 * k);
  const auto path = temp_path("f.smtf").string();
  smt::write_smtf(path, frames);
  const auto back = smt::read_smtf(path);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(back[k], frames[k]);
  std::filesystem::remove(path);
}

TEST(FrameIo, Errors) {
  const auto path = temp_path("bad.bin").string();
  expect_error(ErrorKind::Io, [] { smt::read_pgm("/nonexistent/dir/x.pgm"); });
  {
    std::ofstream out(path, std::ios::binary);
    out << "P2\n1 1\n255\n0";
  }
  expect_error(ErrorKind::BadMagic, [&] { smt::read_pgm(path); });
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n4 4\n255\n";
    out.put('x');
  }
  expect_error(ErrorKind::TruncatedFile, [&] { smt::read_pgm(path); });
  {
    std::ofstream out(path, std::ios::binary);
    out << "XXXX0000000000000000";
  }
  expect_error(ErrorKind::BadMagic, [&] { smt::read_smtf(path); });
  smt::write_smtf(path, {Matrix::Zero(2, 2), Matrix::Zero(2, 2)});
  std::filesystem::resize_file(path, 20);
  expect_error(ErrorKind::TruncatedFile, [&] { smt::read_smtf(path); });
  std::filesystem::resize_file(path, 10);
  expect_error(ErrorKind::TruncatedFile, [&] { smt::read_smtf(path); });
  std::filesystem::remove(path);
  expect_error(ErrorKind::SizeMismatch, [] { smt::write_smtf(temp_path("x").string(), {Matrix::Zero(2, 2), Matrix::Zero(3, 2)}); });
}

}  // namespace
