#pragma once

// Encoder-decoder transformer for interference mitigation on windowed IF
// signals.
//
// Data layout: a signal [signal_len, 2] is split into [n_frames, segment_len, C]
// segments. Attention runs along two axes of that stack: within each frame
// (intra, over segment_len) and across frames at a fixed sample index
// (inter, over n_frames). Both paths see pre-normalized input and are summed
// onto a single residual. Convolution blocks work on the flattened
// n_frames * segment_len time axis so their kernels span neighbouring
// segments. Decoders take the same embedded segments as queries and the last
// encoder output as keys and values.

#include "rim/tensor.hpp"
#include "rim/windowing.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace rim {

struct ModelConfig {
  Index n_layers = 7;  // N encoders and N decoders
  Index d_model = 64;
  Index n_heads = 4;
  Index d_k = 16;
  Index d_v = 16;
  Index ff_expansion = 4;
  Index conv_kernel = 15;
  Index embed_kernel = 1;
  Index in_channels = 2;
  WindowConfig window;
  Index signal_len = 1024;

  Index segment_len() const { return window.segment_len(); }
  Index n_frames() const { return window.frame_count(signal_len); }
  void validate() const;

  static ModelConfig full(Index signal_len = 1024);
  /// d_model 16, two heads, two encoders and two decoders.
  static ModelConfig tiny(Index signal_len = 1024);

  bool operator==(const ModelConfig&) const;
};

struct NormParams {
  Tensor gain, shift;
};

/// Projections of one attention path plus its learnable relative-position
/// table: rel[h, j - i + len - 1] is added to the score of query i, key j.
struct AttentionParams {
  Tensor w_q, w_k, w_v;  // [d_model, h * d_k | h * d_v]
  Tensor w_o;            // [h * d_v, d_model]
  Tensor rel;            // [h, 2 * len - 1]
};

struct DualAttentionParams {
  NormParams norm;
  AttentionParams intra, inter;
};

struct ConvBlockParams {
  Tensor pw1_w, pw1_b;                 // d -> 2d
  Tensor glu_w, glu_b, glu_v, glu_c;   // 2d -> d
  Tensor dw_w, dw_b;                   // depthwise [k, 1, d]
  Tensor pw2_w, pw2_b;                 // d -> d
};

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;
};

struct LayerParams {
  DualAttentionParams attn;
  NormParams conv_norm;
  ConvBlockParams conv;
  NormParams ff_norm;
  FeedForwardParams ff;
};

struct RimformerParams {
  ModelConfig config;
  Tensor embed_w, embed_b;  // [embed_kernel, in_channels, d_model]
  std::vector<LayerParams> encoders, decoders;
  Tensor out_w, out_b;      // [1, d_model, in_channels]

  /// Visits every parameter in a fixed order with its dotted name.
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  std::vector<Tensor> tensors() const;
  Index count() const;
  bool all_finite() const;
};

/// Copy with gradients switched off, for inference without a tape.
RimformerParams frozen(const RimformerParams& p);

/// Closed form:
///   embed  = k_e * C * d + d,  output = d * C + C
///   layer  = 6d (three norms)
///          + 2 * (2 d h d_k + 2 d h d_v) + h (2 S - 1) + h (2 F - 1)
///          + (2d^2 + 2d) + 2 (2d^2 + d) + (k d + d) + (d^2 + d)
///          + 2 e d^2 + e d + d
///   total  = embed + output + 2 N * layer
Index parameter_count(const ModelConfig& cfg);

/// Kaiming-normal weights (variance 2 / fan_in), zero biases and relative
/// tables, unit norm gains. Deterministic in `seed`.
RimformerParams init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Collects every attention weight matrix produced during a forward pass.
struct AttentionProbe {
  std::vector<RowMatrix> weights;
};

/// Row layout of one attention axis inside a [rows, channels] matrix:
/// element i of group g sits at row g * group_stride + i * elem_stride.
struct AxisLayout {
  Index groups = 1;
  Index length = 1;
  Index group_stride = 0;
  Index elem_stride = 1;

  static AxisLayout sequence(Index length) { return {1, length, 0, 1}; }
  static AxisLayout intra(Index frames, Index seg) { return {frames, seg, seg, 1}; }
  static AxisLayout inter(Index frames, Index seg) { return {seg, frames, 1, seg}; }
};

/// Batched scaled dot-product attention with relative scores:
/// per group and head, softmax((Q K^T + S_rel) / sqrt(d_k)) V, heads
/// concatenated along channels. q, k, v are already projected.
Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& rel, Index heads,
                      const AxisLayout& q_layout, const AxisLayout& kv_layout, AttentionProbe* probe = nullptr);

/// Materialized Toeplitz matrix S_rel[i, j] = rel[head, j - i + q_len - 1].
RowMatrix relative_scores(const Tensor& rel, Index head, Index q_len, Index kv_len);

/// Multi-head attention of x_q [n, d] over x_kv [m, d].
Tensor relative_attention(const Tensor& x_q, const Tensor& x_kv, const AttentionParams& p, Index heads,
                          AttentionProbe* probe = nullptr);

/// Differentiable split_windows / merge_windows on [signal_len, C] tensors.
Tensor split_frames(const Tensor& x, const WindowConfig& cfg);
Tensor merge_frames(const Tensor& segments, const WindowConfig& cfg);

Tensor embed_channels(const Tensor& segments, const RimformerParams& p);

/// x + intra(norm(x)) + inter(norm(x)); keys and values come from norm(kv)
/// when kv is defined.
Tensor dual_attention_block(const Tensor& x, const Tensor& kv, const DualAttentionParams& p, Index heads,
                            AttentionProbe* probe = nullptr);

/// (x W + b) * sigmoid(x V + c).
Tensor glu(const Tensor& x, const Tensor& w, const Tensor& b, const Tensor& v, const Tensor& c);

/// pointwise -> GLU -> depthwise (same padding) -> swish -> pointwise over the
/// flattened time axis. No residual.
Tensor conv_block(const Tensor& x, const ConvBlockParams& p);

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p);

Tensor encoder_layer(const Tensor& x, const LayerParams& p, Index heads, AttentionProbe* probe = nullptr);
Tensor decoder_layer(const Tensor& x, const Tensor& enc_out, const LayerParams& p, Index heads,
                     AttentionProbe* probe = nullptr);

/// [signal_len, in_channels] -> same shape.
Tensor rimformer_forward(const Tensor& x, const RimformerParams& p, AttentionProbe* probe = nullptr);

}  // namespace rim
