#include "rim/dataset.hpp"

#include "rim/errors.hpp"
#include "rim/rimt.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace rim {

using nlohmann::json;
namespace fs = std::filesystem;

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + name + "'");
}

void SplitRatios::validate() const {
  if (!(train >= 0 && val >= 0 && test >= 0) || !(train + val + test > 0))
    throw std::invalid_argument("split ratios must be non-negative with a positive sum");
}

std::array<Index, 3> SplitRatios::counts(Index n) const {
  validate();
  if (n < 0) throw std::invalid_argument("split: negative sample count");
  const double total = train + val + test;
  const auto n_train = static_cast<Index>(std::floor(static_cast<double>(n) * train / total + 1e-9));
  const Index rest = n - n_train;
  Index n_val = 0;
  if (val + test > 0) n_val = static_cast<Index>(std::floor(static_cast<double>(rest) * val / (val + test) + 0.5));
  return {n_train, n_val, rest - n_val};
}

SplitRatios SplitRatios::parse(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw std::invalid_argument("split: cannot parse '" + text + "'");
    parts.push_back(v);
  }
  if (parts.size() != 3) throw std::invalid_argument("split: expected train:val:test, got '" + text + "'");
  SplitRatios r{parts[0], parts[1], parts[2]};
  r.validate();
  return r;
}

DatasetOptions dataset_options_for_length(Index n_samples) {
  if (n_samples < 1) throw std::invalid_argument("dataset: n_samples must be positive");
  const SimConfig defaults;
  DatasetOptions o;
  o.chirp = ChirpParams::with_duration(static_cast<double>(n_samples) / defaults.fs);
  o.sim = SimConfig::for_chirp(o.chirp, n_samples);
  o.ranges.chirp_duration = o.chirp.duration;
  return o;
}

SimulatedPair simulate_pair(std::uint64_t sample_seed, const DatasetOptions& options) {
  SimulatedPair out;
  out.scene = sample_scene(sample_seed, options.ranges);
  if (options.channels != 1 && options.channels != 2)
    throw std::invalid_argument("dataset: channels must be 1 (real) or 2 (I/Q)");
  auto pair = synth_if_pair(out.scene, options.chirp, options.sim, 0);
  if (options.channels == 1) {
    pair.interfered.iq = pair.interfered.iq.real().cast<std::complex<double>>();
    pair.clean.iq = pair.clean.iq.real().cast<std::complex<double>>();
  }
  auto [interfered, scale] = normalize_signal(pair.interfered);
  out.interfered = std::move(interfered);
  out.clean = pair.clean;
  out.clean.iq /= scale;
  out.scale = scale;
  return out;
}

namespace {

std::string sample_id(Index i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%06lld", static_cast<long long>(i));
  return buf;
}

fs::path sample_path(const fs::path& dir, const std::string& id, const char* kind) {
  return dir / "samples" / (id + "." + kind + ".rimt");
}

RimtArray channels_array(const ComplexSignal& s, Index channels) {
  RimtArray a;
  a.dtype = Dtype::f64;
  a.dims = {static_cast<std::uint64_t>(s.size()), static_cast<std::uint64_t>(channels)};
  a.values.reserve(static_cast<std::size_t>(channels * s.size()));
  for (Index i = 0; i < s.size(); ++i) {
    a.values.push_back(s.iq[i].real());
    if (channels == 2) a.values.push_back(s.iq[i].imag());
  }
  return a;
}

json chirp_json(const ChirpParams& p) {
  return {{"start_freq_hz", p.start_freq}, {"slope_hz_per_s", p.slope},   {"bandwidth_hz", p.bandwidth},
          {"effective_duration_s", p.effective_duration}, {"duration_s", p.duration}, {"tx_amplitude", p.tx_amplitude}};
}

ChirpParams chirp_from(const json& j) {
  ChirpParams p;
  p.start_freq = j.at("start_freq_hz").get<double>();
  p.slope = j.at("slope_hz_per_s").get<double>();
  p.bandwidth = j.at("bandwidth_hz").get<double>();
  p.effective_duration = j.at("effective_duration_s").get<double>();
  p.duration = j.at("duration_s").get<double>();
  p.tx_amplitude = j.at("tx_amplitude").get<double>();
  return p;
}

json sim_json(const SimConfig& c) {
  return {{"fs_hz", c.fs}, {"n_samples", c.n_samples}, {"n_chirps", c.n_chirps}, {"lpf_cutoff_hz", c.lpf_cutoff}};
}

SimConfig sim_from(const json& j) {
  SimConfig c;
  c.fs = j.at("fs_hz").get<double>();
  c.n_samples = j.at("n_samples").get<Index>();
  c.n_chirps = j.at("n_chirps").get<Index>();
  c.lpf_cutoff = j.at("lpf_cutoff_hz").get<double>();
  return c;
}

json ranges_json(const SceneRanges& r) {
  return {{"targets", {r.min_targets, r.max_targets}},
          {"range_m", {r.min_range, r.max_range}},
          {"speed_mps", {r.min_speed, r.max_speed}},
          {"target_amplitude", {r.min_target_amplitude, r.max_target_amplitude}},
          {"interferers", {r.min_interferers, r.max_interferers}},
          {"interferer_slope_hz_per_s", {r.min_interferer_slope, r.max_interferer_slope}},
          {"interferer_start_freq_hz", {r.min_interferer_freq, r.max_interferer_freq}},
          {"interferer_amplitude", {r.min_interferer_amplitude, r.max_interferer_amplitude}},
          {"noise_std", r.noise_std},
          {"chirp_duration_s", r.chirp_duration}};
}

SceneRanges ranges_from(const json& j) {
  SceneRanges r;
  auto pair = [&](const char* key, auto& lo, auto& hi) {
    const auto& v = j.at(key);
    lo = v.at(0).get<std::decay_t<decltype(lo)>>();
    hi = v.at(1).get<std::decay_t<decltype(hi)>>();
  };
  pair("targets", r.min_targets, r.max_targets);
  pair("range_m", r.min_range, r.max_range);
  pair("speed_mps", r.min_speed, r.max_speed);
  pair("target_amplitude", r.min_target_amplitude, r.max_target_amplitude);
  pair("interferers", r.min_interferers, r.max_interferers);
  pair("interferer_slope_hz_per_s", r.min_interferer_slope, r.max_interferer_slope);
  pair("interferer_start_freq_hz", r.min_interferer_freq, r.max_interferer_freq);
  pair("interferer_amplitude", r.min_interferer_amplitude, r.max_interferer_amplitude);
  r.noise_std = j.at("noise_std").get<double>();
  r.chirp_duration = j.at("chirp_duration_s").get<double>();
  return r;
}

json scene_json(const SceneSpec& s) {
  json targets = json::array();
  for (const auto& t : s.targets)
    targets.push_back({{"range_m", t.range_m}, {"speed_mps", t.speed_mps}, {"amplitude", t.amplitude}});
  json interferers = json::array();
  for (const auto& i : s.interferers)
    interferers.push_back({{"start_freq_hz", i.start_freq},
                           {"slope_hz_per_s", i.slope},
                           {"amplitude", i.amplitude},
                           {"time_offset_s", i.time_offset}});
  return {{"targets", targets}, {"interferers", interferers}, {"noise_std", s.noise_std}, {"seed", s.seed}};
}

SceneSpec scene_from(const json& j) {
  SceneSpec s;
  for (const auto& t : j.at("targets"))
    s.targets.push_back({t.at("range_m").get<double>(), t.at("speed_mps").get<double>(), t.at("amplitude").get<double>()});
  for (const auto& i : j.at("interferers"))
    s.interferers.push_back({i.at("start_freq_hz").get<double>(), i.at("slope_hz_per_s").get<double>(),
                             i.at("amplitude").get<double>(), i.at("time_offset_s").get<double>()});
  s.noise_std = j.at("noise_std").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

Tensor load_channels(const fs::path& path, Index n_samples, Index channels) {
  RimtArray a;
  try {
    a = load_rimt(path);
  } catch (const ArtifactError& e) {
    throw ArtifactError("dataset: " + std::string(e.what()));
  }
  if (a.dtype != Dtype::f64 || a.dims.size() != 2 || a.dims[0] != static_cast<std::uint64_t>(n_samples) ||
      a.dims[1] != static_cast<std::uint64_t>(channels))
    throw ArtifactError("dataset: " + path.string() + " is not a [" + std::to_string(n_samples) + ", " +
                        std::to_string(channels) + "] f64 tensor");
  return from_rimt(a);
}

}  // namespace

DatasetManifest generate_dataset(Index n_pairs, const fs::path& out_dir, const SplitRatios& ratios,
                                 std::uint64_t master_seed, const DatasetOptions& options) {
  if (n_pairs < 1) throw std::invalid_argument("generate_dataset: need at least one pair");
  options.sim.validate(options.chirp);
  if (options.channels != 1 && options.channels != 2)
    throw std::invalid_argument("dataset: channels must be 1 (real) or 2 (I/Q)");

  DatasetManifest m;
  m.master_seed = master_seed;
  m.chirp = options.chirp;
  m.sim = options.sim;
  m.ranges = options.ranges;
  m.ratios = ratios;
  m.channels = options.channels;
  m.counts = ratios.counts(n_pairs);

  std::vector<Index> order(static_cast<std::size_t>(n_pairs));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(mix_seed(master_seed, 0x73706c6974ULL));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Split> assignment(static_cast<std::size_t>(n_pairs));
  for (Index k = 0; k < n_pairs; ++k) {
    const Split s = k < m.counts[0] ? Split::train : (k < m.counts[0] + m.counts[1] ? Split::val : Split::test);
    assignment[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = s;
  }

  std::error_code ec;
  fs::create_directories(out_dir / "samples", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "samples").string() + ": " + ec.message());

  for (Index i = 0; i < n_pairs; ++i) {
    SampleRecord rec;
    rec.id = sample_id(i);
    rec.split = assignment[static_cast<std::size_t>(i)];
    rec.seed = mix_seed(master_seed, static_cast<std::uint64_t>(i));
    const auto pair = simulate_pair(rec.seed, options);
    rec.scale = pair.scale;
    rec.scene = pair.scene;
    save_rimt(sample_path(out_dir, rec.id, "interfered"), channels_array(pair.interfered, m.channels));
    save_rimt(sample_path(out_dir, rec.id, "clean"), channels_array(pair.clean, m.channels));
    m.samples.push_back(std::move(rec));
  }
  write_text_file(out_dir / "manifest.json", manifest_to_json(m).dump(2) + "\n");
  return m;
}

json manifest_to_json(const DatasetManifest& m) {
  json samples = json::array();
  for (const auto& s : m.samples)
    samples.push_back(
        {{"id", s.id}, {"split", split_name(s.split)}, {"seed", s.seed}, {"scale", s.scale}, {"scene", scene_json(s.scene)}});
  return {{"schema_version", m.schema_version},
          {"master_seed", m.master_seed},
          {"chirp", chirp_json(m.chirp)},
          {"sim", sim_json(m.sim)},
          {"scene_ranges", ranges_json(m.ranges)},
          {"split_ratios", {m.ratios.train, m.ratios.val, m.ratios.test}},
          {"channels", m.channels},
          {"counts", {{"train", m.counts[0]}, {"val", m.counts[1]}, {"test", m.counts[2]}}},
          {"samples", samples}};
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  try {
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kManifestSchema)
      throw ArtifactError("manifest: unsupported schema version " + std::to_string(m.schema_version));
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.chirp = chirp_from(j.at("chirp"));
    m.sim = sim_from(j.at("sim"));
    m.ranges = ranges_from(j.at("scene_ranges"));
    const auto& r = j.at("split_ratios");
    m.ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
    m.channels = j.at("channels").get<Index>();
    if (m.channels != 1 && m.channels != 2)
      throw ArtifactError("manifest: channels must be 1 or 2, got " + std::to_string(m.channels));
    const auto& c = j.at("counts");
    m.counts = {c.at("train").get<Index>(), c.at("val").get<Index>(), c.at("test").get<Index>()};
    for (const auto& s : j.at("samples")) {
      SampleRecord rec;
      rec.id = s.at("id").get<std::string>();
      rec.split = parse_split(s.at("split").get<std::string>());
      rec.seed = s.at("seed").get<std::uint64_t>();
      rec.scale = s.at("scale").get<double>();
      rec.scene = scene_from(s.at("scene"));
      m.samples.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw ArtifactError(std::string("manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ArtifactError(std::string("manifest: ") + e.what());
  }
  std::array<Index, 3> seen{0, 0, 0};
  for (const auto& s : m.samples) ++seen[static_cast<std::size_t>(s.split)];
  if (seen != m.counts) throw ArtifactError("manifest: split counts do not match the sample list");
  return m;
}

DatasetManifest load_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream is(path);
  if (!is) throw ArtifactError("dataset: missing manifest " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ArtifactError("manifest: " + std::string(e.what()));
  }
  return manifest_from_json(j);
}

const std::vector<LabeledPair>& LoadedDataset::split(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::val: return val;
    case Split::test: return test;
  }
  return train;
}

LoadedDataset load_dataset(const fs::path& dir) {
  LoadedDataset d;
  d.manifest = load_manifest(dir);
  const Index n = d.manifest.sim.n_samples;
  for (const auto& rec : d.manifest.samples) {
    LabeledPair p;
    p.id = rec.id;
    p.input = load_channels(sample_path(dir, rec.id, "interfered"), n, d.manifest.channels);
    p.target = load_channels(sample_path(dir, rec.id, "clean"), n, d.manifest.channels);
    p.scale = rec.scale;
    p.scene = rec.scene;
    switch (rec.split) {
      case Split::train: d.train.push_back(std::move(p)); break;
      case Split::val: d.val.push_back(std::move(p)); break;
      case Split::test: d.test.push_back(std::move(p)); break;
    }
  }
  return d;
}

}  // namespace rim
