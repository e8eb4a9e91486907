#pragma once

// Single-file checkpoints: one line of UTF-8 JSON terminated by '\n', then
// the RIMT blobs of every parameter in index order. Blob offsets in the
// header count from the first byte after the newline.

#include "rim/model.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>

namespace rim {

inline constexpr int kCheckpointSchema = 1;

struct CheckpointMeta {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
};

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Written to a temporary sibling and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const RimformerParams& params, const CheckpointMeta& meta = {});

struct LoadedCheckpoint {
  RimformerParams params;
  CheckpointMeta meta;
};

/// Throws ArtifactError on a missing file, malformed header, wrong parameter
/// set or shape mismatch.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rim
