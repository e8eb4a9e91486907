#include "rim/model.hpp"
#include "rim/ops.hpp"
#include "rim/windowing.hpp"

#include <gtest/gtest.h>

#include <complex>
#include <random>

using namespace rim;

namespace {

using Signal = SignalMatrix<double>;

Signal random_signal(Index n, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Signal x(n, c);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  return x;
}

Signal ramp(Index n) {
  Signal x(n, 1);
  for (Index i = 0; i < n; ++i) x(i, 0) = static_cast<double>(i);
  return x;
}

}  // namespace

TEST(Windowing, DefaultConfigOn1024Samples) {
  const WindowConfig cfg;
  EXPECT_EQ(cfg.segment_len(), 32);
  EXPECT_EQ(cfg.frame_count(1024), 63);
  EXPECT_EQ(cfg.signal_len(63), 1024);
  EXPECT_EQ(split_windows(ramp(1024), cfg).segments.rows(), 63 * 32);
}

TEST(Windowing, RampSegmentsHoldConsecutiveSamples) {
  const WindowConfig cfg{8, 8};
  const auto s = split_windows(ramp(64), cfg);
  ASSERT_EQ(s.n_frames, 7);
  for (Index i = 0; i < 16; ++i) EXPECT_EQ(s.frame(1)(i, 0), 8.0 + static_cast<double>(i));
  for (Index k = 0; k < s.n_frames; ++k) EXPECT_EQ(s.frame(k)(0, 0), 8.0 * static_cast<double>(k));
}

TEST(Windowing, ZeroOverlapIsPlainConcatenation) {
  const WindowConfig cfg{16, 0};
  std::mt19937_64 rng(1);
  const Signal x = random_signal(64, 2, rng);
  const auto s = split_windows(x, cfg);
  EXPECT_EQ(s.n_frames, 4);
  EXPECT_EQ(s.segments, x);
  EXPECT_EQ(merge_windows(s), x);
}

TEST(Windowing, OverlapIsAveraged) {
  const WindowConfig cfg{4, 4};
  SegmentStack<double> s;
  s.config = cfg;
  s.n_frames = 2;
  s.segments = Signal::Zero(16, 1);
  s.segments.middleRows(0, 8).setConstant(2.0);
  s.segments.middleRows(8, 8).setConstant(4.0);
  const Signal y = merge_windows(s);
  ASSERT_EQ(y.rows(), 12);
  for (Index i = 0; i < 4; ++i) {
    EXPECT_EQ(y(i, 0), 2.0);
    EXPECT_EQ(y(4 + i, 0), 3.0);
    EXPECT_EQ(y(8 + i, 0), 4.0);
  }
}

TEST(Windowing, MergeMatchesLoopOracle) {
  std::mt19937_64 rng(2);
  for (const WindowConfig cfg : {WindowConfig{16, 16}, WindowConfig{8, 3}, WindowConfig{5, 0}}) {
    SegmentStack<double> s;
    s.config = cfg;
    s.n_frames = 6;
    s.segments = random_signal(6 * cfg.segment_len(), 2, rng);
    const Signal y = merge_windows(s);
    const Index L = cfg.slide, M = cfg.overlap;
    // Each sample averages every segment that covers it.
    for (Index t = 0; t < y.rows(); ++t)
      for (Index c = 0; c < 2; ++c) {
        double sum = 0;
        int hits = 0;
        for (Index k = 0; k < s.n_frames; ++k) {
          const Index i = t - k * L;
          if (i >= 0 && i < L + M) {
            sum += s.segments(k * (L + M) + i, c);
            ++hits;
          }
        }
        EXPECT_DOUBLE_EQ(y(t, c), sum / hits);
      }
  }
}

TEST(Windowing, RoundTripIsBitExact) {
  std::mt19937_64 rng(3);
  const std::vector<std::pair<WindowConfig, Index>> cases{
      {{16, 16}, 1024}, {{16, 16}, 256}, {{8, 8}, 64}, {{16, 0}, 512}, {{7, 3}, 73}, {{4, 4}, 20}};
  for (int trial = 0; trial < 100; ++trial) {
    const auto& [cfg, n] = cases[static_cast<std::size_t>(trial) % cases.size()];
    const Signal x = random_signal(n, 2, rng);
    const Signal y = merge_windows(split_windows(x, cfg));
    EXPECT_EQ(y, x) << "trial " << trial;
  }
}

TEST(Windowing, RoundTripComplex) {
  std::mt19937_64 rng(4);
  const Signal re = random_signal(1024, 1, rng), im = random_signal(1024, 1, rng);
  SignalMatrix<std::complex<double>> x(1024, 1);
  for (Index i = 0; i < 1024; ++i) x(i, 0) = {re(i, 0), im(i, 0)};
  EXPECT_EQ(merge_windows(split_windows(x, WindowConfig{})), x);
}

TEST(Windowing, SplitAndMergeAreLinear) {
  std::mt19937_64 rng(5);
  const WindowConfig cfg{8, 8};
  const Signal a = random_signal(64, 2, rng), b = random_signal(64, 2, rng);
  const auto sa = split_windows(a, cfg), sb = split_windows(b, cfg);
  const auto sab = split_windows((2.0 * a - 3.0 * b).eval(), cfg);
  EXPECT_LT((sab.segments - (2.0 * sa.segments - 3.0 * sb.segments)).cwiseAbs().maxCoeff(), 1e-14);
  SegmentStack<double> mix = sa;
  mix.segments = 2.0 * sa.segments - 3.0 * sb.segments;
  EXPECT_LT((merge_windows(mix) - (2.0 * a - 3.0 * b)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Windowing, AdjointsSatisfyInnerProductIdentity) {
  std::mt19937_64 rng(6);
  const WindowConfig cfg{8, 5};
  const Index frames = 6, n = cfg.signal_len(frames);
  const Signal x = random_signal(n, 2, rng);
  const Signal g = random_signal(frames * cfg.segment_len(), 2, rng);
  const Signal sx = split_windows(x, cfg).segments;
  EXPECT_NEAR((sx.array() * g.array()).sum(),
              (x.array() * split_windows_adjoint(g, cfg, frames).array()).sum(), 1e-12);
  SegmentStack<double> s;
  s.config = cfg;
  s.n_frames = frames;
  s.segments = g;
  EXPECT_NEAR((merge_windows(s).array() * x.array()).sum(),
              (g.array() * merge_windows_adjoint(x, cfg, frames).array()).sum(), 1e-12);
}

TEST(Windowing, DifferentiableWrappersMatchTemplates) {
  std::mt19937_64 rng(7);
  const WindowConfig cfg{8, 8};
  const Signal x = random_signal(64, 2, rng);
  const Tensor t(Shape{64, 2}, x);
  const Tensor s = split_frames(t, cfg);
  EXPECT_EQ(s.shape(), (Shape{7, 16, 2}));
  EXPECT_EQ(s.value(), split_windows(x, cfg).segments);
  EXPECT_EQ(merge_frames(s, cfg).value(), x);
}

TEST(Windowing, InvalidConfigurations) {
  EXPECT_THROW((WindowConfig{8, 9}).validate(64), std::invalid_argument);
  EXPECT_THROW((WindowConfig{0, 0}).validate(64), std::invalid_argument);
  EXPECT_THROW((WindowConfig{16, 16}).validate(1000), std::invalid_argument);
  EXPECT_THROW((WindowConfig{16, 16}).validate(16), std::invalid_argument);
  SegmentStack<double> s;
  s.config = {4, 4};
  s.n_frames = 2;
  s.segments = Signal::Zero(15, 1);
  EXPECT_THROW(merge_windows(s), std::invalid_argument);
}
