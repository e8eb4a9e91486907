#include "rim/optimizer.hpp"

#include "rim/errors.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace rim {

Tensor kaiming_init(Shape shape, Index fan_in, std::uint64_t seed, bool requires_grad) {
  if (fan_in < 1) throw std::invalid_argument("kaiming_init: fan_in must be at least 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  RowMatrix m(layout_rows(shape), layout_cols(shape));
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return Tensor(std::move(shape), std::move(m), requires_grad);
}

OptimizerState OptimizerState::for_params(const std::vector<Tensor>& params, double base_lr) {
  OptimizerState s;
  s.base_lr = base_lr;
  for (const auto& p : params) {
    s.m.push_back(RowMatrix::Zero(p.value().rows(), p.value().cols()));
    s.v.push_back(RowMatrix::Zero(p.value().rows(), p.value().cols()));
  }
  return s;
}

void adam_step(std::vector<Tensor>& params, const std::vector<RowMatrix>& grads, OptimizerState& state, double lr) {
  if (grads.size() != params.size()) throw InvalidState("adam_step: gradient count does not match parameters");
  if (state.m.empty() && state.v.empty()) {
    for (const auto& p : params) {
      state.m.push_back(RowMatrix::Zero(p.value().rows(), p.value().cols()));
      state.v.push_back(RowMatrix::Zero(p.value().rows(), p.value().cols()));
    }
  }
  if (state.m.size() != params.size()) throw InvalidState("adam_step: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (grads[i].rows() != params[i].value().rows() || grads[i].cols() != params[i].value().cols())
      throw InvalidState("adam_step: gradient shape mismatch for parameter " + std::to_string(i));

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[i].cwiseAbs2();
    params[i].mutable_value().array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  }
}

void adam_step(std::vector<Tensor>& params, OptimizerState& state, double lr) {
  std::vector<RowMatrix> grads;
  grads.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) throw InvalidState("adam_step: parameter " + std::to_string(i) + " has no gradient");
    grads.push_back(params[i].grad());
  }
  adam_step(params, grads, state, lr);
}

void ScheduleConfig::validate() const {
  if (!(lr_min < lr_max)) throw std::invalid_argument("schedule: lr_min must be below lr_max");
  if (lr_min < 0.0) throw std::invalid_argument("schedule: lr_min must be non-negative");
  if (t0 < 1 || t_mult < 1) throw std::invalid_argument("schedule: T0 and T_mult must be at least 1");
}

SchedulePhase schedule_phase(Index epoch, const ScheduleConfig& cfg) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: epoch must be non-negative");
  cfg.validate();
  Index period = cfg.t0;
  Index t = epoch;
  while (t >= period) {
    t -= period;
    period *= cfg.t_mult;
  }
  return {t, period};
}

double cosine_lr(double t_cur, double period, const ScheduleConfig& cfg) {
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * t_cur / period));
}

double lr_schedule(Index epoch, const ScheduleConfig& cfg) {
  const auto phase = schedule_phase(epoch, cfg);
  return cosine_lr(static_cast<double>(phase.t_cur), static_cast<double>(phase.period), cfg);
}

}  // namespace rim
