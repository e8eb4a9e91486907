#pragma once

// Differentiable operations on Tensor. Every function here records its
// backward rule when any input requires a gradient.

#include "rim/tensor.hpp"

namespace rim {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

/// x[..., C] + b[C] broadcast over leading axes.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// x[..., K] * w[K, N] -> [..., N].
Tensor matmul(const Tensor& x, const Tensor& w);
/// Same data, new shape of equal element count.
Tensor reshape(const Tensor& x, Shape shape);

Tensor sigmoid(const Tensor& x);
/// x * sigmoid(x).
Tensor swish(const Tensor& x);
Tensor square(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Euclidean norm of all entries. The gradient at the origin is taken as 0.
Tensor l2_norm(const Tensor& x);

/// Softmax along the last axis, stabilized by subtracting the row maximum.
/// Throws std::invalid_argument on NaN input.
Tensor softmax_rows(const Tensor& x);

/// Normalizes every position over the last axis, then applies gain and shift.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps = 1e-5);

enum class Padding { same, valid };

/// Cross-correlation along the sample axis.
///   x:      [len, C_in] or [batch, len, C_in] (batch items padded independently)
///   kernel: [k, C_in / groups, C_out]
///   bias:   [C_out] or undefined
///   out[t, o] = bias[o] + sum_j sum_c x[t + j - pad, g(o) * C_in/groups + c] * kernel[j, c, o]
Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Index groups = 1,
              Padding padding = Padding::same);

/// Unnormalized DFT of a real [N] / [N, 1] or complex [N, 2] (re, im) tensor; the
/// result is always [N, 2].
Tensor dft(const Tensor& x);
/// |z| for a complex [N, 2] tensor -> [N]. Gradient at |z| = 0 is taken as 0.
Tensor complex_abs(const Tensor& z);

}  // namespace rim
