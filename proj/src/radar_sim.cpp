#include "rim/radar_sim.hpp"

#include "rim/errors.hpp"
#include "rim/fft.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace rim {

namespace {

using Complex = std::complex<double>;

// exp(j 2 pi cycles) with the integer part of `cycles` removed first; phases
// at 76 GHz run into millions of cycles per chirp.
Complex unit_phasor(double cycles) {
  const double frac = cycles - std::floor(cycles);
  return std::polar(1.0, 2.0 * std::numbers::pi * frac);
}

void require_finite(const ComplexSignal& s, const char* what) {
  if (!s.iq.allFinite()) throw std::domain_error(std::string(what) + ": non-finite samples");
}

}  // namespace

ChirpParams ChirpParams::with_duration(double duration) {
  ChirpParams p;
  p.duration = duration;
  p.effective_duration = duration;
  p.bandwidth = p.slope * duration;
  return p;
}

void ChirpParams::validate() const {
  if (!(effective_duration > 0) || effective_duration > duration)
    throw std::invalid_argument("chirp: need 0 < Tc <= T");
  if (std::abs(slope - bandwidth / effective_duration) > 1e-12 * std::abs(slope))
    throw std::invalid_argument("chirp: slope must equal bandwidth / effective duration");
  if (!(tx_amplitude > 0)) throw std::invalid_argument("chirp: transmit amplitude must be positive");
}

SimConfig SimConfig::for_chirp(const ChirpParams& p, Eigen::Index n_samples, Eigen::Index n_chirps) {
  SimConfig c;
  c.n_samples = n_samples;
  c.n_chirps = n_chirps;
  c.fs = static_cast<double>(n_samples) / p.duration;
  c.lpf_cutoff = 0.9 * c.fs / 2.0;
  return c;
}

void SimConfig::validate(const ChirpParams& p) const {
  p.validate();
  if (n_samples < 1 || n_chirps < 1) throw std::invalid_argument("sim: sample and chirp counts must be positive");
  if (n_samples != static_cast<Eigen::Index>(std::llround(fs * p.duration)))
    throw std::invalid_argument("sim: n_samples must equal round(fs * T)");
  if (!(lpf_cutoff > 0) || lpf_cutoff > fs / 2.0) throw std::invalid_argument("sim: need 0 < f_lpf <= fs / 2");
}

Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ComplexSignal::as_channels() const {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m(iq.size(), 2);
  m.col(0) = iq.real();
  m.col(1) = iq.imag();
  return m;
}

ComplexSignal ComplexSignal::from_channels(
    const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>& m, double fs) {
  if (m.cols() != 1 && m.cols() != 2) throw std::invalid_argument("signal: expected [n, 2] I/Q or [n, 1] real channels");
  ComplexSignal s;
  s.fs = fs;
  s.iq.resize(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) s.iq[i] = {m(i, 0), m.cols() == 2 ? m(i, 1) : 0.0};
  return s;
}

double echo_delay(const TargetSpec& tgt, const ChirpParams& p, Eigen::Index chirp_index) {
  const double range = tgt.range_m + tgt.speed_mps * static_cast<double>(chirp_index) * p.duration;
  return 2.0 * range / kSpeedOfLight;
}

Eigen::Index beat_bin(double range_m, const ChirpParams& p, const SimConfig& cfg) {
  const double fb = 2.0 * range_m * p.slope / kSpeedOfLight;
  return static_cast<Eigen::Index>(std::llround(fb * static_cast<double>(cfg.n_samples) / cfg.fs));
}

ComplexSignal tx_chirp(const ChirpParams& p, const SimConfig& cfg) {
  cfg.validate(p);
  ComplexSignal s;
  s.fs = cfg.fs;
  s.iq.resize(cfg.n_samples);
  for (Eigen::Index n = 0; n < cfg.n_samples; ++n) {
    const double t = cfg.sample_time(n);
    s.iq[n] = p.tx_amplitude * unit_phasor(p.start_freq * t + 0.5 * p.slope * t * t);
  }
  return s;
}

ComplexSignal target_echo(const ChirpParams& p, const TargetSpec& tgt, Eigen::Index chirp_index,
                          const SimConfig& cfg) {
  cfg.validate(p);
  if (!(tgt.range_m > 0) || !(tgt.amplitude > 0))
    throw std::invalid_argument("target: range and amplitude must be positive");
  const double tau = echo_delay(tgt, p, chirp_index);
  if (tau >= p.duration || tau < 0) throw std::out_of_range("target: echo delay outside the chirp");
  ComplexSignal s;
  s.fs = cfg.fs;
  s.iq = Eigen::VectorXcd::Zero(cfg.n_samples);
  for (Eigen::Index n = 0; n < cfg.n_samples; ++n) {
    const double t = cfg.sample_time(n) - tau;
    if (t < 0) continue;
    s.iq[n] = tgt.amplitude * unit_phasor(p.start_freq * t + 0.5 * p.slope * t * t);
  }
  return s;
}

ComplexSignal interferer_signal(const InterfererSpec& intf, const SimConfig& cfg) {
  if (!(intf.amplitude > 0)) throw std::invalid_argument("interferer: amplitude must be positive");
  ComplexSignal s;
  s.fs = cfg.fs;
  s.iq.resize(cfg.n_samples);
  for (Eigen::Index n = 0; n < cfg.n_samples; ++n) {
    const double t = cfg.sample_time(n) - intf.time_offset;
    s.iq[n] = intf.amplitude * unit_phasor(intf.start_freq * t + 0.5 * intf.slope * t * t);
  }
  return s;
}

ComplexSignal dechirp_lpf(const ComplexSignal& rx, const ComplexSignal& tx, const SimConfig& cfg) {
  if (rx.size() != tx.size()) throw std::invalid_argument("dechirp: length mismatch between rx and tx");
  if (rx.size() == 0) throw std::invalid_argument("dechirp: empty signal");
  const Eigen::VectorXcd mixed = tx.iq.cwiseProduct(rx.iq.conjugate());
  Eigen::VectorXcd spectrum = fft(mixed);
  const Eigen::Index n = spectrum.size();
  for (Eigen::Index k = 0; k < n; ++k)
    if (std::abs(bin_frequency(k, n, cfg.fs)) > cfg.lpf_cutoff) spectrum[k] = 0.0;
  ComplexSignal out;
  out.fs = cfg.fs;
  out.iq = ifft(spectrum);
  return out;
}

Eigen::Index analog_oversampling(const InterfererSpec& intf, const ChirpParams& p, const SimConfig& cfg) {
  // Beat frequency of tx * conj(int) is linear in t, so its extremes sit at
  // the chirp ends.
  auto beat = [&](double t) {
    return p.start_freq + p.slope * t - (intf.start_freq + intf.slope * (t - intf.time_offset));
  };
  const double t_end = cfg.sample_time(cfg.n_samples);
  const double worst = std::max(std::abs(beat(0.0)), std::abs(beat(t_end)));
  Eigen::Index r = 1;
  while (static_cast<double>(r) * cfg.fs < worst + cfg.lpf_cutoff) r *= 2;
  return r;
}

ComplexSignal dechirp_interferer(const InterfererSpec& intf, const ChirpParams& p, const SimConfig& cfg) {
  const Eigen::Index r = analog_oversampling(intf, p, cfg);
  SimConfig fine = cfg;
  fine.fs = cfg.fs * static_cast<double>(r);
  fine.n_samples = cfg.n_samples * r;
  ChirpParams fine_chirp = p;
  fine_chirp.duration = static_cast<double>(fine.n_samples) / fine.fs;
  fine_chirp.effective_duration = fine_chirp.duration;
  fine_chirp.bandwidth = p.slope * fine_chirp.duration;
  const ComplexSignal wide = dechirp_lpf(interferer_signal(intf, fine), tx_chirp(fine_chirp, fine), fine);
  ComplexSignal out;
  out.fs = cfg.fs;
  out.iq.resize(cfg.n_samples);
  for (Eigen::Index n = 0; n < cfg.n_samples; ++n) out.iq[n] = wide.iq[n * r];
  return out;
}

IfPair synth_if_pair(const SceneSpec& scene, const ChirpParams& p, const SimConfig& cfg, Eigen::Index chirp_index) {
  const ComplexSignal tx = tx_chirp(p, cfg);
  IfPair pair;
  pair.clean.fs = cfg.fs;
  pair.clean.iq = Eigen::VectorXcd::Zero(cfg.n_samples);
  for (const auto& tgt : scene.targets) pair.clean.iq += dechirp_lpf(target_echo(p, tgt, chirp_index, cfg), tx, cfg).iq;

  pair.interfered = pair.clean;
  for (const auto& intf : scene.interferers) pair.interfered.iq += dechirp_interferer(intf, p, cfg).iq;

  if (scene.noise_std > 0) {
    std::mt19937_64 rng(mix_seed(scene.seed, 0x6e6f697365ULL + static_cast<std::uint64_t>(chirp_index)));
    std::normal_distribution<double> normal(0.0, scene.noise_std / std::numbers::sqrt2);
    for (Eigen::Index n = 0; n < cfg.n_samples; ++n) {
      const double re = normal(rng);
      const double im = normal(rng);
      pair.interfered.iq[n] += Complex(re, im);
    }
  }
  require_finite(pair.interfered, "synth_if_pair");
  return pair;
}

Frame synth_frame(const SceneSpec& scene, const ChirpParams& p, const SimConfig& cfg) {
  Frame frame;
  frame.interfered.resize(cfg.n_chirps, cfg.n_samples);
  frame.clean.resize(cfg.n_chirps, cfg.n_samples);
  for (Eigen::Index m = 0; m < cfg.n_chirps; ++m) {
    const IfPair pair = synth_if_pair(scene, p, cfg, m);
    frame.interfered.row(m) = pair.interfered.iq.transpose();
    frame.clean.row(m) = pair.clean.iq.transpose();
  }
  return frame;
}

SceneSpec sample_scene(std::uint64_t rng_seed, const SceneRanges& r) {
  std::mt19937_64 rng(mix_seed(rng_seed, 0x7363656e65ULL));
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  SceneSpec scene;
  scene.seed = rng_seed;
  scene.noise_std = r.noise_std;
  const int n_targets = std::uniform_int_distribution<int>(r.min_targets, r.max_targets)(rng);
  for (int i = 0; i < n_targets; ++i) {
    TargetSpec t;
    t.range_m = uniform(r.min_range, r.max_range);
    t.speed_mps = uniform(r.min_speed, r.max_speed);
    t.amplitude = uniform(r.min_target_amplitude, r.max_target_amplitude);
    scene.targets.push_back(t);
  }
  const int n_interferers = std::uniform_int_distribution<int>(r.min_interferers, r.max_interferers)(rng);
  for (int i = 0; i < n_interferers; ++i) {
    InterfererSpec s;
    s.slope = uniform(r.min_interferer_slope, r.max_interferer_slope);
    s.start_freq = uniform(r.min_interferer_freq, r.max_interferer_freq);
    s.amplitude = uniform(r.min_interferer_amplitude, r.max_interferer_amplitude);
    s.time_offset = uniform(0.0, r.chirp_duration);
    scene.interferers.push_back(s);
  }
  return scene;
}

std::pair<ComplexSignal, double> normalize_signal(const ComplexSignal& x) {
  const double scale = std::max(x.iq.real().cwiseAbs().maxCoeff(), x.iq.imag().cwiseAbs().maxCoeff());
  if (!(scale > 0)) throw DegenerateInput("normalize_signal: all-zero input");
  ComplexSignal y = x;
  y.iq /= scale;
  return {y, scale};
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace rim
