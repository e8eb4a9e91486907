#pragma once

// Mini-batch Adam training of the network on (interfered -> clean) pairs.

#include "rim/dataset.hpp"
#include "rim/loss.hpp"
#include "rim/model.hpp"
#include "rim/optimizer.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace rim {

struct TrainOptions {
  Index epochs = 500;
  Index batch_size = 16;
  std::uint64_t seed = 0;
  /// Directory for model.ckpt and train_log.csv; nothing is written when empty.
  std::filesystem::path out_dir;
  /// Checkpoint every this many epochs and after the last one.
  Index checkpoint_every = 10;
  /// Mean SINR on validation is computed every epoch when true.
  bool track_sinr = true;
  /// Called after each logged row.
  std::function<void(const struct EpochLog&)> on_epoch;
};

struct EpochLog {
  Index epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_mse = 0;
  double val_sinr_db = 0;
  double lr = 0;
};

struct SplitMetrics {
  double loss = 0;
  double mse = 0;
  double mean_sinr_db = 0;
};

struct TrainReport {
  RimformerParams params;
  SplitMetrics initial;
  std::vector<EpochLog> log;
  std::int64_t steps = 0;
};

/// MSE on normalized signals and mean SINR of the denormalized
/// reconstructions. A null params pointer scores the interfered input itself.
SplitMetrics evaluate_split(const std::vector<LabeledPair>& pairs, const RimformerParams* params,
                            const DatasetManifest& manifest, const LossConfig& loss_cfg = {}, bool with_sinr = true);

/// Throws std::invalid_argument for empty train or validation splits and
/// NumericalAbort when a loss turns non-finite.
TrainReport train(const LoadedDataset& data, const ModelConfig& model_cfg, const LossConfig& loss_cfg,
                  const ScheduleConfig& sched_cfg, const TrainOptions& options);

/// Same as above but continues from existing parameters.
TrainReport train_from(const LoadedDataset& data, RimformerParams params, const LossConfig& loss_cfg,
                       const ScheduleConfig& sched_cfg, const TrainOptions& options);

inline constexpr const char* kCheckpointName = "model.ckpt";
inline constexpr const char* kTrainLogName = "train_log.csv";

}  // namespace rim
