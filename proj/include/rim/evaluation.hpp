#pragma once

// Spectral analysis and interference-mitigation metrics.

#include "rim/dataset.hpp"
#include "rim/model.hpp"
#include "rim/radar_sim.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <vector>

namespace rim {

using PowerSpectrum = Eigen::VectorXd;

struct EvalSpec {
  std::vector<Index> target_bins;
  std::vector<Index> noise_bins;
  Index guard_halfwidth = 3;

  void validate(Index n_bins) const;
};

/// 10 log10 of mean target power over mean noise power.
double sinr(const PowerSpectrum& power, const EvalSpec& spec);

/// Targets at their chirp-0 beat bins, widened by +-target_halfwidth; noise is
/// every bin farther than guard_halfwidth from all target bins. With
/// `mirrored` set (real signals) each target also counts at its negative
/// frequency image. Throws DegenerateInput when no noise bin remains.
EvalSpec build_eval_spec(const SceneSpec& scene, const ChirpParams& p, const SimConfig& sim, Index guard_halfwidth = 3,
                         Index target_halfwidth = 1, bool mirrored = false);
/// Same, with the target layout taken from a dataset manifest.
EvalSpec build_eval_spec(const SceneSpec& scene, const DatasetManifest& manifest, Index guard_halfwidth = 3);
/// Chirp-0 beat bins of every target, plus their images for real data.
std::vector<Index> target_centres(const SceneSpec& scene, const DatasetManifest& manifest);

enum class WindowKind { rectangular, hann };
Eigen::VectorXd window_coefficients(WindowKind kind, Index n);

/// |FFT(w x)|^2.
PowerSpectrum power_spectrum(const Eigen::VectorXcd& x, WindowKind window = WindowKind::rectangular);
PowerSpectrum power_spectrum(const ComplexSignal& x, WindowKind window = WindowKind::rectangular);

/// 20 log10 |FFT(w x)| shifted so the largest bin is 0 dB.
Eigen::VectorXd range_profile(const ComplexSignal& x, WindowKind window = WindowKind::rectangular);

/// Range FFT along rows, Doppler FFT along columns, Doppler axis shifted so
/// zero velocity sits at row n_chirps / 2. Values are dB relative to the peak.
RowMatrix rd_map(const Eigen::MatrixXcd& frame, WindowKind range_window = WindowKind::rectangular,
                 WindowKind doppler_window = WindowKind::rectangular);
/// Signed Doppler bin of row `row` of an rd_map.
Index doppler_bin_of_row(Index row, Index n_chirps);
double doppler_velocity(Index doppler_bin, const ChirpParams& p, Index n_chirps);
double bin_range(double frequency_hz, const ChirpParams& p);

/// Magnitudes [win_len, n_frames]; each frame's FFT is divided by sqrt(win_len)
/// so a rectangular window with hop == win_len preserves energy.
RowMatrix stft(const ComplexSignal& x, Index win_len, Index hop, WindowKind window = WindowKind::hann);
Index stft_frame_count(Index len, Index win_len, Index hop);

struct CfarConfig {
  Index n_train = 16;
  Index n_guard = 4;
  double threshold_factor = 0.82;
  /// Report only cells that are also strict local maxima of the profile.
  bool peaks_only = true;

  void validate() const;
};

struct Detection {
  Index bin = 0;
  double value = 0;
  double threshold = 0;
};

/// Cell-averaging CFAR over a linear power profile. Near the ends the
/// training window keeps whatever cells exist on each side.
std::vector<Detection> ca_cfar(const PowerSpectrum& profile, const CfarConfig& cfg = {});
/// Threshold factor giving false-alarm probability `pfa` for exponential
/// noise averaged over `n_cells` training cells: n (pfa^(-1/n) - 1).
double cfar_factor_for_pfa(double pfa, Index n_cells);

struct SampleEval {
  std::string id;
  double mse = 0;
  double sinr_db = 0;
  double input_sinr_db = 0;
  double inference_ms = 0;
  Index detections = 0;
  Index targets_detected = 0;
  Index false_alarms = 0;
};

struct EvalReport {
  std::string mode;  // "model" or "passthrough"
  Index n_samples = 0;
  double mean_mse = 0;
  double mean_sinr_db = 0;
  double median_sinr_db = 0;
  double input_mean_sinr_db = 0;
  double input_median_sinr_db = 0;
  double mean_inference_ms = 0;
  bool cfar_enabled = false;
  CfarConfig cfar;
  Index total_detections = 0;
  Index total_targets = 0;
  Index targets_detected = 0;
  Index false_alarms = 0;
  std::vector<SampleEval> samples;

  /// Metrics only; wall-clock timing is left out.
  bool same_metrics(const EvalReport& other) const;
};

nlohmann::json report_to_json(const EvalReport& r);

struct EvalOptions {
  std::optional<CfarConfig> cfar;
  Index guard_halfwidth = 3;
};

/// Runs the model (or passes the input through when params is null) over
/// `pairs` and scores reconstructions against ground truth.
EvalReport evaluate_testset(const std::vector<LabeledPair>& pairs, const RimformerParams* params,
                            const DatasetManifest& manifest, const EvalOptions& options = {});

/// Median wall time of single-signal inference after warm-up runs.
double time_inference(const RimformerParams& params, const Tensor& input, int runs = 20, int warmup = 3);

double median(std::vector<double> values);

}  // namespace rim
