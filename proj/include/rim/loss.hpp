#pragma once

// Hybrid time-frequency reconstruction loss.
//
//   L = (1 - lambda) / sqrt(N) * ||Y - Y~||  +  lambda / sqrt(N) * ||S(Y) - S(Y~)||
//
// N is the sequence length and S is either the magnitude spectrum |F(.)| or the
// complex spectrum F(.) of the I/Q sequence. With the complex spectrum the
// second norm is sqrt(N) * ||Y - Y~|| by Parseval, so that mode only rescales
// the time term.

#include "rim/tensor.hpp"

namespace rim {

enum class SpectrumMode { magnitude, complex };

struct LossConfig {
  double lambda = 0.3;
  SpectrumMode spectrum_mode = SpectrumMode::magnitude;

  void validate() const;
};

struct LossTerms {
  Tensor time;       // ||Y - Y~|| / sqrt(N)
  Tensor frequency;  // ||S(Y) - S(Y~)|| / sqrt(N)
  Tensor total;
};

/// pred and target are [N, 2] (I, Q), or [N] / [N, 1] real sequences.
LossTerms hybrid_loss_terms(const Tensor& pred, const Tensor& target, const LossConfig& cfg = {});
Tensor hybrid_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg = {});

}  // namespace rim
