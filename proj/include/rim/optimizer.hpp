#pragma once

#include "rim/tensor.hpp"

#include <cstdint>
#include <vector>

namespace rim {

/// Zero-mean normal entries with variance 2 / fan_in.
Tensor kaiming_init(Shape shape, Index fan_in, std::uint64_t seed, bool requires_grad = true);

struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double base_lr = 1e-4;
  std::int64_t step = 0;
  std::vector<RowMatrix> m, v;

  /// Zero moments shaped like `params`.
  static OptimizerState for_params(const std::vector<Tensor>& params, double base_lr = 1e-4);
};

/// One bias-corrected Adam update using the gradients stored on `params`.
/// Throws InvalidState when any parameter has no gradient.
void adam_step(std::vector<Tensor>& params, OptimizerState& state, double lr);
/// Same update with explicit gradients.
void adam_step(std::vector<Tensor>& params, const std::vector<RowMatrix>& grads, OptimizerState& state, double lr);

struct ScheduleConfig {
  double lr_max = 1e-4;
  double lr_min = 1e-6;
  Index t0 = 50;
  Index t_mult = 2;

  void validate() const;
};

/// Position of `epoch` inside its restart period.
struct SchedulePhase {
  Index t_cur = 0;
  Index period = 1;
};

SchedulePhase schedule_phase(Index epoch, const ScheduleConfig& cfg);
/// lr_min + (lr_max - lr_min) (1 + cos(pi t_cur / T_i)) / 2.
double cosine_lr(double t_cur, double period, const ScheduleConfig& cfg);
double lr_schedule(Index epoch, const ScheduleConfig& cfg);

}  // namespace rim
