#pragma once

// Sliding-window decomposition of a [signal_len, C] signal into overlapping
// segments y_k = x[kL : (k+1)L + M], and the overlap-averaging merge that
// inverts it. Segments are stacked frame-major: row f * segment_len + s of
// SegmentStack::segments is sample s of frame f.

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace rim {

struct WindowConfig {
  Eigen::Index slide = 16;    // L
  Eigen::Index overlap = 16;  // M

  Eigen::Index segment_len() const { return slide + overlap; }

  /// Throws std::invalid_argument unless signal_len splits exactly.
  void validate(Eigen::Index signal_len) const {
    if (slide < 1 || overlap < 0) throw std::invalid_argument("window: need slide >= 1 and overlap >= 0");
    if (overlap > slide)
      throw std::invalid_argument("window: overlap larger than slide would average more than two segments");
    if (signal_len < segment_len())
      throw std::invalid_argument("window: signal shorter than one segment");
    if ((signal_len - overlap) % slide != 0)
      throw std::invalid_argument("window: (signal_len - overlap) = " + std::to_string(signal_len - overlap) +
                                  " not divisible by slide " + std::to_string(slide));
  }

  Eigen::Index frame_count(Eigen::Index signal_len) const {
    validate(signal_len);
    return (signal_len - overlap) / slide;
  }

  Eigen::Index signal_len(Eigen::Index frames) const { return frames * slide + overlap; }
};

template <typename Scalar>
using SignalMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct SegmentStack {
  SignalMatrix<Scalar> segments;  // [n_frames * segment_len, channels]
  Eigen::Index n_frames = 0;
  WindowConfig config;

  Eigen::Index channels() const { return segments.cols(); }
  Eigen::Index signal_len() const { return config.signal_len(n_frames); }
  auto frame(Eigen::Index f) const { return segments.middleRows(f * config.segment_len(), config.segment_len()); }
};

template <typename Derived>
auto split_windows(const Eigen::MatrixBase<Derived>& x, const WindowConfig& cfg) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index frames = cfg.frame_count(x.rows());
  const Eigen::Index seg = cfg.segment_len();
  SegmentStack<Scalar> out;
  out.config = cfg;
  out.n_frames = frames;
  out.segments.resize(frames * seg, x.cols());
  for (Eigen::Index k = 0; k < frames; ++k) out.segments.middleRows(k * seg, seg) = x.middleRows(k * cfg.slide, seg);
  return out;
}

/// Adjoint of split_windows: overlap-adds segment rows back onto the signal.
template <typename Derived>
auto split_windows_adjoint(const Eigen::MatrixBase<Derived>& segments, const WindowConfig& cfg, Eigen::Index frames) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index seg = cfg.segment_len();
  if (segments.rows() != frames * seg) throw std::invalid_argument("window: segment rows do not match frame count");
  SignalMatrix<Scalar> x = SignalMatrix<Scalar>::Zero(cfg.signal_len(frames), segments.cols());
  for (Eigen::Index k = 0; k < frames; ++k) x.middleRows(k * cfg.slide, seg) += segments.middleRows(k * seg, seg);
  return x;
}

/// Overlap-averaging reconstruction. Block k >= 1 is the mean of the previous
/// segment's tail and this segment's head, followed by y_k[M:L]; block 0 is
/// y_0[0:L]. The final M samples come verbatim from the last segment's tail.
template <typename Scalar>
SignalMatrix<Scalar> merge_windows(const SegmentStack<Scalar>& s) {
  const auto& cfg = s.config;
  const Eigen::Index L = cfg.slide, M = cfg.overlap, seg = cfg.segment_len(), n = s.n_frames;
  if (n < 1 || s.segments.rows() != n * seg) throw std::invalid_argument("merge_windows: inconsistent segment stack");
  if (M > L) throw std::invalid_argument("merge_windows: overlap larger than slide");
  SignalMatrix<Scalar> y(cfg.signal_len(n), s.segments.cols());
  auto row = [&](Eigen::Index k, Eigen::Index i) { return s.segments.row(k * seg + i); };
  for (Eigen::Index i = 0; i < L; ++i) y.row(i) = row(0, i);
  for (Eigen::Index k = 1; k < n; ++k) {
    for (Eigen::Index i = 0; i < M; ++i) y.row(k * L + i) = Scalar(0.5) * (row(k - 1, L + i) + row(k, i));
    for (Eigen::Index i = M; i < L; ++i) y.row(k * L + i) = row(k, i);
  }
  for (Eigen::Index i = 0; i < M; ++i) y.row(n * L + i) = row(n - 1, L + i);
  return y;
}

/// Adjoint (transpose) of merge_windows, used to backpropagate through it.
template <typename Derived>
auto merge_windows_adjoint(const Eigen::MatrixBase<Derived>& g, const WindowConfig& cfg, Eigen::Index frames) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index L = cfg.slide, M = cfg.overlap, seg = cfg.segment_len(), n = frames;
  if (g.rows() != cfg.signal_len(n)) throw std::invalid_argument("merge_windows_adjoint: length mismatch");
  SignalMatrix<Scalar> segs = SignalMatrix<Scalar>::Zero(n * seg, g.cols());
  for (Eigen::Index i = 0; i < L; ++i) segs.row(i) += g.row(i);
  for (Eigen::Index k = 1; k < n; ++k) {
    for (Eigen::Index i = 0; i < M; ++i) {
      segs.row((k - 1) * seg + L + i) += Scalar(0.5) * g.row(k * L + i);
      segs.row(k * seg + i) += Scalar(0.5) * g.row(k * L + i);
    }
    for (Eigen::Index i = M; i < L; ++i) segs.row(k * seg + i) += g.row(k * L + i);
  }
  for (Eigen::Index i = 0; i < M; ++i) segs.row((n - 1) * seg + L + i) += g.row(n * L + i);
  return segs;
}

}  // namespace rim
