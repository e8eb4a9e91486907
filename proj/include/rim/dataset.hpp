#pragma once

// Paired (interfered, clean) single-chirp datasets on disk.
//
//   <dir>/manifest.json
//   <dir>/samples/<id>.interfered.rimt   f64 [n_samples, channels], normalized
//   <dir>/samples/<id>.clean.rimt        f64 [n_samples, channels], same scale
//
// channels is 2 for I/Q data and 1 for a real IF signal, which keeps only the
// in-phase component.
//
// Both signals of a pair are divided by the peak |I| / |Q| component of the
// interfered signal, so the network input has unit peak and the target keeps
// its relation to the input. The scale is stored per sample.

#include "rim/radar_sim.hpp"
#include "rim/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rim {

inline constexpr int kManifestSchema = 1;

enum class Split { train, val, test };
std::string split_name(Split s);
Split parse_split(const std::string& name);

struct SplitRatios {
  double train = 8, val = 1, test = 1;

  void validate() const;
  /// train = floor(n * r_train); the remainder is shared between val and test
  /// in proportion, rounding half up in favour of val.
  std::array<Index, 3> counts(Index n) const;
  /// Parses "8:1:1" or "0.8:0.1:0.1".
  static SplitRatios parse(const std::string& text);
};

struct SampleRecord {
  std::string id;
  Split split = Split::train;
  std::uint64_t seed = 0;
  double scale = 1.0;
  SceneSpec scene;
};

struct DatasetManifest {
  int schema_version = kManifestSchema;
  std::uint64_t master_seed = 0;
  ChirpParams chirp;
  SimConfig sim;
  SceneRanges ranges;
  SplitRatios ratios;
  Index channels = 2;
  std::array<Index, 3> counts{0, 0, 0};
  std::vector<SampleRecord> samples;

  Index count(Split s) const { return counts[static_cast<std::size_t>(s)]; }
};

struct DatasetOptions {
  ChirpParams chirp = ChirpParams::victim();
  SimConfig sim;
  SceneRanges ranges;
  Index channels = 2;  // 1 for real-valued IF signals
};

/// Options for signals of `n_samples` at the default sampling rate and slope.
DatasetOptions dataset_options_for_length(Index n_samples);

DatasetManifest generate_dataset(Index n_pairs, const std::filesystem::path& out_dir, const SplitRatios& ratios,
                                 std::uint64_t master_seed, const DatasetOptions& options = {});

/// Scene of sample `index` and the simulated normalized pair.
struct SimulatedPair {
  SceneSpec scene;
  ComplexSignal interfered;  // normalized; imaginary part zero for real data
  ComplexSignal clean;       // normalized with the interfered scale
  double scale = 1.0;
};
SimulatedPair simulate_pair(std::uint64_t sample_seed, const DatasetOptions& options);

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);
/// Throws ArtifactError when the manifest is missing or malformed.
DatasetManifest load_manifest(const std::filesystem::path& dir);

/// One normalized training pair in network layout.
struct LabeledPair {
  std::string id;
  Tensor input;   // [n_samples, channels]
  Tensor target;  // [n_samples, channels]
  double scale = 1.0;
  SceneSpec scene;
};

struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<LabeledPair> train, val, test;

  const std::vector<LabeledPair>& split(Split s) const;
};

/// Throws ArtifactError on missing or corrupt sample files.
LoadedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace rim
