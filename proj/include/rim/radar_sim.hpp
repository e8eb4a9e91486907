#pragma once

// FMCW chirp, echo, interference and noise synthesis.
//
// Dechirping multiplies the transmit chirp by the conjugate of the received
// signal, so a target at delay tau shows up at the positive beat frequency
// K * tau and a target approaching at speed v advances the chirp-to-chirp
// phase by +2 pi * 2 v T f0 / c.

#include <Eigen/Core>

#include <complex>
#include <cstdint>
#include <utility>
#include <vector>

namespace rim {

inline constexpr double kSpeedOfLight = 3e8;

struct ChirpParams {
  double start_freq = 76.5e9;     // f0, Hz
  double slope = 3e13;            // K, Hz/s (0.03 GHz/us)
  double bandwidth = 6e8;         // B, Hz
  double effective_duration = 20e-6;  // Tc, s
  double duration = 20e-6;        // T, s
  double tx_amplitude = 1.0;      // A_T

  /// Default victim radar: 76.5 GHz start, 0.03 GHz/us, 20 us chirp.
  static ChirpParams victim() { return {}; }
  /// Same start frequency and slope, shorter sweep; Tc = T and B = K * T.
  static ChirpParams with_duration(double duration);
  void validate() const;
};

struct SimConfig {
  double fs = 51.2e6;
  Eigen::Index n_samples = 1024;
  Eigen::Index n_chirps = 128;
  double lpf_cutoff = 0.45 * 51.2e6;

  /// fs = n_samples / T and f_lpf = 0.9 * fs / 2.
  static SimConfig for_chirp(const ChirpParams& p, Eigen::Index n_samples, Eigen::Index n_chirps = 128);
  void validate(const ChirpParams& p) const;
  double sample_time(Eigen::Index n) const { return static_cast<double>(n) / fs; }
};

struct TargetSpec {
  double range_m = 10.0;
  double speed_mps = 0.0;
  double amplitude = 1.0;
};

struct InterfererSpec {
  double start_freq = 76.5e9;  // frequency at t = time_offset, Hz
  double slope = 0.0;          // Hz/s, signed
  double amplitude = 10.0;
  double time_offset = 0.0;    // s, within the victim chirp
};

struct SceneSpec {
  std::vector<TargetSpec> targets;
  std::vector<InterfererSpec> interferers;
  double noise_std = 0.05;
  std::uint64_t seed = 0;
};

/// Sampling intervals for sample_scene. Defaults are the reference scene intervals;
/// the speed interval is signed.
struct SceneRanges {
  int min_targets = 1, max_targets = 3;
  double min_range = 3.0, max_range = 45.0;
  double min_speed = -45.0, max_speed = 45.0;
  double min_target_amplitude = 0.4, max_target_amplitude = 3.0;
  int min_interferers = 0, max_interferers = 5;
  double min_interferer_slope = -0.0675e15, max_interferer_slope = 0.0675e15;
  double min_interferer_freq = 76.2e9, max_interferer_freq = 76.8e9;
  double min_interferer_amplitude = 6.0, max_interferer_amplitude = 33.0;
  double noise_std = 0.05;
  /// Upper bound for interferer time offsets; the victim chirp duration.
  double chirp_duration = 20e-6;
};

struct ComplexSignal {
  Eigen::VectorXcd iq;
  double fs = 0.0;

  Eigen::Index size() const { return iq.size(); }
  /// [n, 2] rows of (I, Q). from_channels also takes a real [n, 1] column.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> as_channels() const;
  static ComplexSignal from_channels(const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                                             Eigen::RowMajor>>& iq, double fs);
};

/// Echo delay of a target at the start of chirp `chirp_index`.
double echo_delay(const TargetSpec& tgt, const ChirpParams& p, Eigen::Index chirp_index);
/// Beat-frequency bin round(K tau * n / fs) for a target at chirp 0.
Eigen::Index beat_bin(double range_m, const ChirpParams& p, const SimConfig& cfg);

ComplexSignal tx_chirp(const ChirpParams& p, const SimConfig& cfg);
/// Throws std::out_of_range when the delay reaches the chirp duration.
ComplexSignal target_echo(const ChirpParams& p, const TargetSpec& tgt, Eigen::Index chirp_index,
                          const SimConfig& cfg);
ComplexSignal interferer_signal(const InterfererSpec& intf, const SimConfig& cfg);
/// tx * conj(rx), then an ideal frequency-domain low-pass at cfg.lpf_cutoff.
ComplexSignal dechirp_lpf(const ComplexSignal& rx, const ComplexSignal& tx, const SimConfig& cfg);

/// Power-of-two factor r such that r * fs exceeds the largest beat frequency
/// of the interferer against the victim chirp plus the filter cutoff.
Eigen::Index analog_oversampling(const InterfererSpec& intf, const ChirpParams& p, const SimConfig& cfg);
/// Dechirped and low-passed interference sampled at cfg.fs. The mixer and
/// filter run at r * fs so beat tones far outside the passband are removed
/// before sampling instead of aliasing into it.
ComplexSignal dechirp_interferer(const InterfererSpec& intf, const ChirpParams& p, const SimConfig& cfg);

struct IfPair {
  ComplexSignal interfered;
  ComplexSignal clean;
};

IfPair synth_if_pair(const SceneSpec& scene, const ChirpParams& p, const SimConfig& cfg, Eigen::Index chirp_index = 0);

/// All chirps of one frame: rows are chirps, columns are fast-time samples.
struct Frame {
  Eigen::MatrixXcd interfered;
  Eigen::MatrixXcd clean;
};
Frame synth_frame(const SceneSpec& scene, const ChirpParams& p, const SimConfig& cfg);

SceneSpec sample_scene(std::uint64_t rng_seed, const SceneRanges& ranges = {});

/// y = x / scale with scale the largest |I| or |Q| component.
/// Throws DegenerateInput for an all-zero signal.
std::pair<ComplexSignal, double> normalize_signal(const ComplexSignal& x);

/// splitmix64 finalizer; derives independent per-sample seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace rim
