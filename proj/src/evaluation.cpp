#include "rim/evaluation.hpp"

#include "rim/errors.hpp"
#include "rim/fft.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

namespace rim {

using nlohmann::json;

void EvalSpec::validate(Index n_bins) const {
  if (target_bins.empty() || noise_bins.empty()) throw std::invalid_argument("sinr: target and noise sets must be non-empty");
  for (const auto* bins : {&target_bins, &noise_bins})
    for (Index b : *bins)
      if (b < 0 || b >= n_bins) throw std::invalid_argument("sinr: bin " + std::to_string(b) + " outside spectrum");
}

double sinr(const PowerSpectrum& power, const EvalSpec& spec) {
  spec.validate(power.size());
  double target = 0, noise = 0;
  for (Index b : spec.target_bins) target += power[b];
  for (Index b : spec.noise_bins) noise += power[b];
  target /= static_cast<double>(spec.target_bins.size());
  noise /= static_cast<double>(spec.noise_bins.size());
  return 10.0 * std::log10(target / noise);
}

EvalSpec build_eval_spec(const SceneSpec& scene, const ChirpParams& p, const SimConfig& sim, Index guard_halfwidth,
                         Index target_halfwidth, bool mirrored) {
  if (scene.targets.empty()) throw std::invalid_argument("build_eval_spec: scene has no targets");
  if (guard_halfwidth < target_halfwidth) throw std::invalid_argument("build_eval_spec: guard narrower than target band");
  const Index n = sim.n_samples;
  auto wrap = [n](Index b) { return ((b % n) + n) % n; };
  std::set<Index> targets;
  std::vector<bool> excluded(static_cast<std::size_t>(n), false);
  for (const auto& t : scene.targets) {
    const Index bin = beat_bin(t.range_m, p, sim);
    for (Index centre : mirrored ? std::vector<Index>{bin, -bin} : std::vector<Index>{bin}) {
      for (Index d = -target_halfwidth; d <= target_halfwidth; ++d) targets.insert(wrap(centre + d));
      for (Index d = -guard_halfwidth; d <= guard_halfwidth; ++d)
        excluded[static_cast<std::size_t>(wrap(centre + d))] = true;
    }
  }
  EvalSpec spec;
  spec.guard_halfwidth = guard_halfwidth;
  spec.target_bins.assign(targets.begin(), targets.end());
  for (Index b = 0; b < n; ++b)
    if (!excluded[static_cast<std::size_t>(b)]) spec.noise_bins.push_back(b);
  if (spec.noise_bins.empty()) throw DegenerateInput("build_eval_spec: targets leave no noise bins");
  return spec;
}

EvalSpec build_eval_spec(const SceneSpec& scene, const DatasetManifest& manifest, Index guard_halfwidth) {
  return build_eval_spec(scene, manifest.chirp, manifest.sim, guard_halfwidth, 1, manifest.channels == 1);
}

std::vector<Index> target_centres(const SceneSpec& scene, const DatasetManifest& manifest) {
  const Index n = manifest.sim.n_samples;
  std::vector<Index> centres;
  for (const auto& t : scene.targets) {
    const Index bin = beat_bin(t.range_m, manifest.chirp, manifest.sim);
    centres.push_back(((bin % n) + n) % n);
    if (manifest.channels == 1) centres.push_back(((-bin % n) + n) % n);
  }
  return centres;
}

Eigen::VectorXd window_coefficients(WindowKind kind, Index n) {
  if (kind == WindowKind::rectangular || n == 1) return Eigen::VectorXd::Ones(n);
  Eigen::VectorXd w(n);
  for (Index i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
  return w;
}

PowerSpectrum power_spectrum(const Eigen::VectorXcd& x, WindowKind window) {
  const Eigen::VectorXcd spec = fft(x.cwiseProduct(window_coefficients(window, x.size()).cast<std::complex<double>>()));
  return spec.cwiseAbs2();
}

PowerSpectrum power_spectrum(const ComplexSignal& x, WindowKind window) { return power_spectrum(x.iq, window); }

namespace {

// Floor for log of an exactly zero bin, far below any simulated level.
constexpr double kPowerFloor = 1e-300;

Eigen::VectorXd to_db_relative(const Eigen::VectorXd& power) {
  const double peak = std::max(power.maxCoeff(), kPowerFloor);
  return power.unaryExpr([peak](double p) { return 10.0 * std::log10(std::max(p, kPowerFloor) / peak); });
}

}  // namespace

Eigen::VectorXd range_profile(const ComplexSignal& x, WindowKind window) {
  if (x.size() == 0) throw std::invalid_argument("range_profile: empty signal");
  return to_db_relative(power_spectrum(x, window));
}

RowMatrix rd_map(const Eigen::MatrixXcd& frame, WindowKind range_window, WindowKind doppler_window) {
  const Index chirps = frame.rows(), samples = frame.cols();
  if (chirps == 0 || samples == 0) throw std::invalid_argument("rd_map: empty frame");
  const Eigen::VectorXcd wr = window_coefficients(range_window, samples).cast<std::complex<double>>();
  const Eigen::VectorXcd wd = window_coefficients(doppler_window, chirps).cast<std::complex<double>>();
  Eigen::MatrixXcd range(chirps, samples);
  for (Index c = 0; c < chirps; ++c) range.row(c) = fft(Eigen::VectorXcd(frame.row(c).transpose().cwiseProduct(wr))).transpose();
  RowMatrix power(chirps, samples);
  for (Index s = 0; s < samples; ++s) {
    const Eigen::VectorXcd dop = fft(Eigen::VectorXcd(range.col(s).cwiseProduct(wd)));
    for (Index row = 0; row < chirps; ++row) {
      const Index bin = doppler_bin_of_row(row, chirps);
      power(row, s) = std::norm(dop[(bin + chirps) % chirps]);
    }
  }
  const double peak = std::max(power.maxCoeff(), kPowerFloor);
  return power.unaryExpr([peak](double p) { return 10.0 * std::log10(std::max(p, kPowerFloor) / peak); });
}

Index doppler_bin_of_row(Index row, Index n_chirps) { return row - n_chirps / 2; }

double doppler_velocity(Index doppler_bin, const ChirpParams& p, Index n_chirps) {
  return static_cast<double>(doppler_bin) * kSpeedOfLight /
         (2.0 * p.start_freq * static_cast<double>(n_chirps) * p.duration);
}

double bin_range(double frequency_hz, const ChirpParams& p) { return frequency_hz * kSpeedOfLight / (2.0 * p.slope); }

Index stft_frame_count(Index len, Index win_len, Index hop) {
  if (win_len < 1 || hop < 1) throw std::invalid_argument("stft: window and hop must be positive");
  if (win_len > len) throw std::invalid_argument("stft: window longer than signal");
  return (len - win_len) / hop + 1;
}

RowMatrix stft(const ComplexSignal& x, Index win_len, Index hop, WindowKind window) {
  const Index frames = stft_frame_count(x.size(), win_len, hop);
  const Eigen::VectorXcd w = window_coefficients(window, win_len).cast<std::complex<double>>();
  const double norm = 1.0 / std::sqrt(static_cast<double>(win_len));
  RowMatrix out(win_len, frames);
  for (Index f = 0; f < frames; ++f) {
    const Eigen::VectorXcd seg = x.iq.segment(f * hop, win_len).cwiseProduct(w);
    out.col(f) = fft(seg).cwiseAbs() * norm;
  }
  return out;
}

void CfarConfig::validate() const {
  if (n_train < 1 || n_guard < 0) throw std::invalid_argument("cfar: need n_train >= 1 and n_guard >= 0");
  if (!(threshold_factor > 0)) throw std::invalid_argument("cfar: threshold factor must be positive");
}

std::vector<Detection> ca_cfar(const PowerSpectrum& p, const CfarConfig& cfg) {
  cfg.validate();
  const Index n = p.size();
  if (n <= 2 * (cfg.n_train + cfg.n_guard))
    throw std::invalid_argument("ca_cfar: profile of " + std::to_string(n) + " cells is too short for the window");
  // Prefix sums keep each window average O(1).
  Eigen::VectorXd prefix(n + 1);
  prefix[0] = 0;
  for (Index i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + p[i];
  auto window_sum = [&](Index lo, Index hi) { return prefix[hi] - prefix[lo]; };  // [lo, hi)

  std::vector<Detection> out;
  for (Index i = 0; i < n; ++i) {
    const Index left_lo = std::max<Index>(0, i - cfg.n_guard - cfg.n_train);
    const Index left_hi = std::max<Index>(0, i - cfg.n_guard);
    const Index right_lo = std::min<Index>(n, i + cfg.n_guard + 1);
    const Index right_hi = std::min<Index>(n, i + cfg.n_guard + cfg.n_train + 1);
    const Index cells = (left_hi - left_lo) + (right_hi - right_lo);
    if (cells == 0) continue;
    const double noise = (window_sum(left_lo, left_hi) + window_sum(right_lo, right_hi)) / static_cast<double>(cells);
    const double threshold = cfg.threshold_factor * noise;
    if (!(p[i] > threshold)) continue;
    if (cfg.peaks_only && ((i > 0 && !(p[i] > p[i - 1])) || (i + 1 < n && !(p[i] > p[i + 1])))) continue;
    out.push_back({i, p[i], threshold});
  }
  return out;
}

double cfar_factor_for_pfa(double pfa, Index n_cells) {
  if (!(pfa > 0 && pfa < 1) || n_cells < 1) throw std::invalid_argument("cfar_factor_for_pfa: need 0 < pfa < 1");
  const double n = static_cast<double>(n_cells);
  return n * (std::pow(pfa, -1.0 / n) - 1.0);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

bool EvalReport::same_metrics(const EvalReport& o) const {
  if (mode != o.mode || n_samples != o.n_samples || mean_mse != o.mean_mse || mean_sinr_db != o.mean_sinr_db ||
      median_sinr_db != o.median_sinr_db || input_mean_sinr_db != o.input_mean_sinr_db ||
      input_median_sinr_db != o.input_median_sinr_db || cfar_enabled != o.cfar_enabled ||
      total_detections != o.total_detections || targets_detected != o.targets_detected ||
      false_alarms != o.false_alarms || samples.size() != o.samples.size())
    return false;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& a = samples[i];
    const auto& b = o.samples[i];
    if (a.id != b.id || a.mse != b.mse || a.sinr_db != b.sinr_db || a.input_sinr_db != b.input_sinr_db ||
        a.detections != b.detections || a.targets_detected != b.targets_detected || a.false_alarms != b.false_alarms)
      return false;
  }
  return true;
}

json report_to_json(const EvalReport& r) {
  json samples = json::array();
  for (const auto& s : r.samples) {
    json j{{"id", s.id}, {"mse", s.mse}, {"sinr_db", s.sinr_db}, {"input_sinr_db", s.input_sinr_db},
           {"inference_ms", s.inference_ms}};
    if (r.cfar_enabled)
      j["cfar"] = {{"detections", s.detections}, {"targets_detected", s.targets_detected}, {"false_alarms", s.false_alarms}};
    samples.push_back(std::move(j));
  }
  json out{{"mode", r.mode},
           {"n_samples", r.n_samples},
           {"mse", r.mean_mse},
           {"avg_sinr_db", r.mean_sinr_db},
           {"median_sinr_db", r.median_sinr_db},
           {"input_avg_sinr_db", r.input_mean_sinr_db},
           {"input_median_sinr_db", r.input_median_sinr_db},
           {"timing", {{"mean_inference_ms", r.mean_inference_ms}}},
           {"samples", samples}};
  if (r.cfar_enabled)
    out["cfar"] = {{"n_train", r.cfar.n_train},
                   {"n_guard", r.cfar.n_guard},
                   {"threshold_factor", r.cfar.threshold_factor},
                   {"peaks_only", r.cfar.peaks_only},
                   {"detections", r.total_detections},
                   {"targets", r.total_targets},
                   {"targets_detected", r.targets_detected},
                   {"false_alarms", r.false_alarms}};
  return out;
}

namespace {

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

EvalReport evaluate_testset(const std::vector<LabeledPair>& pairs, const RimformerParams* params,
                            const DatasetManifest& manifest, const EvalOptions& options) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_testset: empty split");
  if (params && !params->all_finite()) throw InvalidState("evaluate_testset: parameters are not finite");
  EvalReport r;
  r.mode = params ? "model" : "passthrough";
  r.n_samples = static_cast<Index>(pairs.size());
  r.cfar_enabled = options.cfar.has_value();
  if (options.cfar) r.cfar = *options.cfar;
  const double fs = manifest.sim.fs;
  std::optional<RimformerParams> model;
  if (params) model = frozen(*params);

  std::vector<double> mse, out_sinr, in_sinr, times;
  for (const auto& pair : pairs) {
    SampleEval s;
    s.id = pair.id;
    RowMatrix pred;
    if (params) {
      const auto start = std::chrono::steady_clock::now();
      pred = rimformer_forward(pair.input.detach(), *model).value();
      s.inference_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    } else {
      pred = pair.input.value();
    }
    s.mse = (pred - pair.target.value()).squaredNorm() / static_cast<double>(pred.size());
    const EvalSpec spec = build_eval_spec(pair.scene, manifest, options.guard_halfwidth);
    const ComplexSignal recon = ComplexSignal::from_channels(pred * pair.scale, fs);
    const ComplexSignal input = ComplexSignal::from_channels(pair.input.value() * pair.scale, fs);
    const PowerSpectrum recon_power = power_spectrum(recon);
    s.sinr_db = sinr(recon_power, spec);
    s.input_sinr_db = sinr(power_spectrum(input), spec);
    if (options.cfar) {
      const auto dets = ca_cfar(recon_power, *options.cfar);
      s.detections = static_cast<Index>(dets.size());
      const std::vector<Index> centres = target_centres(pair.scene, manifest);
      for (Index c : centres) {
        const bool hit = std::any_of(dets.begin(), dets.end(), [c](const Detection& d) { return std::abs(d.bin - c) <= 1; });
        s.targets_detected += hit ? 1 : 0;
      }
      for (const auto& d : dets) {
        const bool near = std::any_of(centres.begin(), centres.end(), [&d](Index c) { return std::abs(d.bin - c) <= 1; });
        s.false_alarms += near ? 0 : 1;
      }
      r.total_detections += s.detections;
      r.total_targets += static_cast<Index>(centres.size());
      r.targets_detected += s.targets_detected;
      r.false_alarms += s.false_alarms;
    }
    mse.push_back(s.mse);
    out_sinr.push_back(s.sinr_db);
    in_sinr.push_back(s.input_sinr_db);
    times.push_back(s.inference_ms);
    r.samples.push_back(std::move(s));
  }
  r.mean_mse = mean(mse);
  r.mean_sinr_db = mean(out_sinr);
  r.median_sinr_db = median(out_sinr);
  r.input_mean_sinr_db = mean(in_sinr);
  r.input_median_sinr_db = median(in_sinr);
  r.mean_inference_ms = mean(times);
  return r;
}

double time_inference(const RimformerParams& params, const Tensor& input, int runs, int warmup) {
  if (runs < 1 || warmup < 0) throw std::invalid_argument("time_inference: need runs >= 1");
  const Tensor x = input.detach();
  const RimformerParams model = frozen(params);
  for (int i = 0; i < warmup; ++i) (void)rimformer_forward(x, model);
  std::vector<double> ms;
  for (int i = 0; i < runs; ++i) {
    const auto start = std::chrono::steady_clock::now();
    (void)rimformer_forward(x, model);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }
  return median(ms);
}

}  // namespace rim
