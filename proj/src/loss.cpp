#include "rim/loss.hpp"

#include "rim/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace rim {

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("loss: lambda must lie in [0, 1]");
}

LossTerms hybrid_loss_terms(const Tensor& pred, const Tensor& target, const LossConfig& cfg) {
  cfg.validate();
  if (pred.shape() != target.shape())
    throw std::invalid_argument("hybrid_loss: shape mismatch " + shape_string(pred.shape()) + " vs " +
                                shape_string(target.shape()));
  const bool channels = pred.rank() == 2 && (pred.dim(1) == 1 || pred.dim(1) == 2);
  if (!channels && pred.rank() != 1) throw std::invalid_argument("hybrid_loss: expected [N], [N, 1] or [N, 2] signals");
  const Index n = pred.dim(0);
  if (n < 1) throw std::invalid_argument("hybrid_loss: empty signal");
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));

  LossTerms terms;
  terms.time = l2_norm(pred - target) * inv_sqrt_n;
  const Tensor fp = dft(pred);
  const Tensor ft = dft(target);
  if (cfg.spectrum_mode == SpectrumMode::magnitude)
    terms.frequency = l2_norm(complex_abs(fp) - complex_abs(ft)) * inv_sqrt_n;
  else
    terms.frequency = l2_norm(fp - ft) * inv_sqrt_n;
  terms.total = terms.time * (1.0 - cfg.lambda) + terms.frequency * cfg.lambda;
  return terms;
}

Tensor hybrid_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg) {
  return hybrid_loss_terms(pred, target, cfg).total;
}

}  // namespace rim
