#include "rim/trainer.hpp"

#include "rim/checkpoint.hpp"
#include "rim/errors.hpp"
#include "rim/evaluation.hpp"
#include "rim/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace rim {

namespace fs = std::filesystem;

SplitMetrics evaluate_split(const std::vector<LabeledPair>& pairs, const RimformerParams* params,
                            const DatasetManifest& manifest, const LossConfig& loss_cfg, bool with_sinr) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_split: empty split");
  if (params && !params->all_finite()) throw InvalidState("evaluate_split: parameters are not finite");
  std::optional<RimformerParams> model;
  if (params) model = frozen(*params);
  SplitMetrics m;
  for (const auto& pair : pairs) {
    const Tensor pred = model ? rimformer_forward(pair.input.detach(), *model) : pair.input.detach();
    m.loss += hybrid_loss(pred, pair.target.detach(), loss_cfg).item();
    m.mse += (pred.value() - pair.target.value()).squaredNorm() / static_cast<double>(pred.numel());
    if (with_sinr) {
      const auto spec = build_eval_spec(pair.scene, manifest);
      const auto recon = ComplexSignal::from_channels(pred.value() * pair.scale, manifest.sim.fs);
      m.mean_sinr_db += sinr(power_spectrum(recon), spec);
    }
  }
  const double n = static_cast<double>(pairs.size());
  m.loss /= n;
  m.mse /= n;
  m.mean_sinr_db /= n;
  return m;
}

namespace {

class CsvLog {
 public:
  explicit CsvLog(const fs::path& path) {
    if (path.empty()) return;
    os_.open(path, std::ios::trunc);
    if (!os_) throw IoError("training log: cannot open " + path.string());
    os_ << "epoch,train_loss,val_loss,val_mse,val_sinr_db,lr\n";
    os_.flush();
  }

  void append(const EpochLog& r) {
    if (!os_.is_open()) return;
    char line[256];
    std::snprintf(line, sizeof line, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(r.epoch),
                  r.train_loss, r.val_loss, r.val_mse, r.val_sinr_db, r.lr);
    os_ << line;
    if (!os_.flush()) throw IoError("training log: write failed");
  }

 private:
  std::ofstream os_;
};

void require_finite_loss(double loss, Index epoch, const std::string& id) {
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "non-finite training loss (" << loss << ") at epoch " << epoch << ", sample " << id;
    throw NumericalAbort(msg.str());
  }
}

}  // namespace

TrainReport train_from(const LoadedDataset& data, RimformerParams params, const LossConfig& loss_cfg,
                       const ScheduleConfig& sched_cfg, const TrainOptions& opt) {
  if (data.train.empty()) throw std::invalid_argument("train: empty training split");
  if (data.val.empty()) throw std::invalid_argument("train: empty validation split");
  if (opt.epochs < 0 || opt.batch_size < 1) throw std::invalid_argument("train: need epochs >= 0 and batch_size >= 1");
  loss_cfg.validate();
  sched_cfg.validate();
  if (params.config.signal_len != data.manifest.sim.n_samples)
    throw std::invalid_argument("train: model signal length " + std::to_string(params.config.signal_len) +
                                " does not match dataset length " + std::to_string(data.manifest.sim.n_samples));

  if (!opt.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(opt.out_dir, ec);
    if (ec) throw IoError("train: cannot create " + opt.out_dir.string() + ": " + ec.message());
  }
  const fs::path ckpt = opt.out_dir.empty() ? fs::path{} : opt.out_dir / kCheckpointName;
  CsvLog log(opt.out_dir.empty() ? fs::path{} : opt.out_dir / kTrainLogName);

  TrainReport report;
  report.initial = evaluate_split(data.val, &params, data.manifest, loss_cfg, opt.track_sinr);
  auto emit = [&](const EpochLog& row) {
    report.log.push_back(row);
    log.append(row);
    if (opt.on_epoch) opt.on_epoch(row);
  };

  if (opt.epochs == 0) {
    const SplitMetrics train0 = evaluate_split(data.train, &params, data.manifest, loss_cfg, false);
    emit({0, train0.loss, report.initial.loss, report.initial.mse, report.initial.mean_sinr_db,
          lr_schedule(0, sched_cfg)});
    if (!ckpt.empty()) save_checkpoint(ckpt, params, {0, 0});
    report.params = std::move(params);
    return report;
  }

  std::vector<Tensor> tensors = params.tensors();
  OptimizerState state = OptimizerState::for_params(tensors, sched_cfg.lr_max);
  std::vector<std::size_t> order(data.train.size());
  for (Index epoch = 1; epoch <= opt.epochs; ++epoch) {
    const double lr = lr_schedule(epoch - 1, sched_cfg);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(opt.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
      const double weight = 1.0 / static_cast<double>(stop - start);
      for (auto& t : tensors) t.zero_grad();
      for (std::size_t k = start; k < stop; ++k) {
        const auto& pair = data.train[order[k]];
        const Tensor loss = hybrid_loss(rimformer_forward(pair.input, params), pair.target, loss_cfg);
        require_finite_loss(loss.item(), epoch, pair.id);
        loss_sum += loss.item();
        backward(loss * weight);
      }
      adam_step(tensors, state, lr);
      if (!params.all_finite()) throw NumericalAbort("non-finite parameters after step " + std::to_string(state.step));
    }

    const SplitMetrics val = evaluate_split(data.val, &params, data.manifest, loss_cfg, opt.track_sinr);
    require_finite_loss(val.loss, epoch, "validation");
    emit({epoch, loss_sum / static_cast<double>(order.size()), val.loss, val.mse, val.mean_sinr_db, lr});
    if (!ckpt.empty() && (epoch % std::max<Index>(1, opt.checkpoint_every) == 0 || epoch == opt.epochs))
      save_checkpoint(ckpt, params, {state.step, epoch});
  }
  for (auto& t : tensors) t.zero_grad();
  report.steps = state.step;
  report.params = std::move(params);
  return report;
}

TrainReport train(const LoadedDataset& data, const ModelConfig& model_cfg, const LossConfig& loss_cfg,
                  const ScheduleConfig& sched_cfg, const TrainOptions& options) {
  return train_from(data, init_params(model_cfg, options.seed), loss_cfg, sched_cfg, options);
}

}  // namespace rim
