#include "rim/model.hpp"

#include "rim/errors.hpp"
#include "rim/ops.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace rim {

void ModelConfig::validate() const {
  if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_k < 1 || d_v < 1 || ff_expansion < 1 || in_channels < 1)
    throw std::invalid_argument("model config: sizes must be positive");
  if (n_heads * d_k != d_model || n_heads * d_v != d_model)
    throw std::invalid_argument("model config: n_heads * d_k and n_heads * d_v must equal d_model");
  if (conv_kernel % 2 == 0 || embed_kernel % 2 == 0 || conv_kernel < 1 || embed_kernel < 1)
    throw std::invalid_argument("model config: kernel sizes must be odd");
  window.validate(signal_len);
}

ModelConfig ModelConfig::full(Index signal_len) {
  ModelConfig c;
  c.signal_len = signal_len;
  return c;
}

ModelConfig ModelConfig::tiny(Index signal_len) {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_k = 8;
  c.d_v = 8;
  c.signal_len = signal_len;
  return c;
}

bool ModelConfig::operator==(const ModelConfig& o) const {
  return n_layers == o.n_layers && d_model == o.d_model && n_heads == o.n_heads && d_k == o.d_k && d_v == o.d_v &&
         ff_expansion == o.ff_expansion && conv_kernel == o.conv_kernel && embed_kernel == o.embed_kernel &&
         in_channels == o.in_channels && window.slide == o.window.slide && window.overlap == o.window.overlap &&
         signal_len == o.signal_len;
}

namespace {

template <typename P, typename Fn>
void visit_layer(const std::string& prefix, P& l, Fn&& fn) {
  fn(prefix + ".attn.norm.gain", l.attn.norm.gain);
  fn(prefix + ".attn.norm.shift", l.attn.norm.shift);
  for (auto [name, a] : {std::pair{"intra", &l.attn.intra}, std::pair{"inter", &l.attn.inter}}) {
    const std::string base = prefix + ".attn." + name;
    fn(base + ".w_q", a->w_q);
    fn(base + ".w_k", a->w_k);
    fn(base + ".w_v", a->w_v);
    fn(base + ".w_o", a->w_o);
    fn(base + ".rel", a->rel);
  }
  fn(prefix + ".conv.norm.gain", l.conv_norm.gain);
  fn(prefix + ".conv.norm.shift", l.conv_norm.shift);
  fn(prefix + ".conv.pw1.weight", l.conv.pw1_w);
  fn(prefix + ".conv.pw1.bias", l.conv.pw1_b);
  fn(prefix + ".conv.glu.w", l.conv.glu_w);
  fn(prefix + ".conv.glu.b", l.conv.glu_b);
  fn(prefix + ".conv.glu.v", l.conv.glu_v);
  fn(prefix + ".conv.glu.c", l.conv.glu_c);
  fn(prefix + ".conv.dw.weight", l.conv.dw_w);
  fn(prefix + ".conv.dw.bias", l.conv.dw_b);
  fn(prefix + ".conv.pw2.weight", l.conv.pw2_w);
  fn(prefix + ".conv.pw2.bias", l.conv.pw2_b);
  fn(prefix + ".ff.norm.gain", l.ff_norm.gain);
  fn(prefix + ".ff.norm.shift", l.ff_norm.shift);
  fn(prefix + ".ff.w1", l.ff.w1);
  fn(prefix + ".ff.b1", l.ff.b1);
  fn(prefix + ".ff.w2", l.ff.w2);
  fn(prefix + ".ff.b2", l.ff.b2);
}

template <typename P, typename Fn>
void visit_params(P& p, Fn&& fn) {
  fn(std::string("embed.weight"), p.embed_w);
  fn(std::string("embed.bias"), p.embed_b);
  for (std::size_t i = 0; i < p.encoders.size(); ++i) visit_layer("encoder." + std::to_string(i), p.encoders[i], fn);
  for (std::size_t i = 0; i < p.decoders.size(); ++i) visit_layer("decoder." + std::to_string(i), p.decoders[i], fn);
  fn(std::string("output.weight"), p.out_w);
  fn(std::string("output.bias"), p.out_b);
}

}  // namespace

void RimformerParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) { visit_params(*this, fn); }

void RimformerParams::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  visit_params(*this, fn);
}

std::vector<Tensor> RimformerParams::tensors() const {
  std::vector<Tensor> out;
  for_each([&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

Index RimformerParams::count() const {
  Index n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.numel(); });
  return n;
}

bool RimformerParams::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const Tensor& t) { ok = ok && t.value().allFinite(); });
  return ok;
}

RimformerParams frozen(const RimformerParams& p) {
  RimformerParams out = p;
  out.for_each([](const std::string&, Tensor& t) { t = t.detach(); });
  return out;
}

Index parameter_count(const ModelConfig& c) {
  const Index d = c.d_model, h = c.n_heads, S = c.segment_len(), F = c.n_frames(), e = c.ff_expansion;
  const Index embed = c.embed_kernel * c.in_channels * d + d;
  const Index output = d * c.in_channels + c.in_channels;
  const Index norms = 6 * d;
  const Index attention = 2 * (2 * d * h * c.d_k + 2 * d * h * c.d_v) + h * (2 * S - 1) + h * (2 * F - 1);
  const Index conv = (2 * d * d + 2 * d) + 2 * (2 * d * d + d) + (c.conv_kernel * d + d) + (d * d + d);
  const Index ff = 2 * e * d * d + e * d + d;
  return embed + output + 2 * c.n_layers * (norms + attention + conv + ff);
}

namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor kaiming(Shape shape, Index fan_in) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    RowMatrix m(layout_rows(shape), layout_cols(shape));
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng_);
    return Tensor(std::move(shape), std::move(m), true);
  }

 private:
  std::mt19937_64 rng_;
};

Tensor zeros(Shape shape) { return Tensor(std::move(shape), true); }

Tensor ones(Shape shape) {
  RowMatrix m = RowMatrix::Ones(layout_rows(shape), layout_cols(shape));
  return Tensor(std::move(shape), std::move(m), true);
}

NormParams make_norm(Index d) { return {ones({d}), zeros({d})}; }

AttentionParams make_attention(Initializer& init, const ModelConfig& c, Index axis_len) {
  const Index h = c.n_heads;
  AttentionParams a;
  a.w_q = init.kaiming({c.d_model, h * c.d_k}, c.d_model);
  a.w_k = init.kaiming({c.d_model, h * c.d_k}, c.d_model);
  a.w_v = init.kaiming({c.d_model, h * c.d_v}, c.d_model);
  a.w_o = init.kaiming({h * c.d_v, c.d_model}, h * c.d_v);
  a.rel = zeros({h, 2 * axis_len - 1});
  return a;
}

LayerParams make_layer(Initializer& init, const ModelConfig& c) {
  const Index d = c.d_model;
  LayerParams l;
  l.attn.norm = make_norm(d);
  l.attn.intra = make_attention(init, c, c.segment_len());
  l.attn.inter = make_attention(init, c, c.n_frames());
  l.conv_norm = make_norm(d);
  l.conv.pw1_w = init.kaiming({d, 2 * d}, d);
  l.conv.pw1_b = zeros({2 * d});
  l.conv.glu_w = init.kaiming({2 * d, d}, 2 * d);
  l.conv.glu_b = zeros({d});
  l.conv.glu_v = init.kaiming({2 * d, d}, 2 * d);
  l.conv.glu_c = zeros({d});
  l.conv.dw_w = init.kaiming({c.conv_kernel, 1, d}, c.conv_kernel);
  l.conv.dw_b = zeros({d});
  l.conv.pw2_w = init.kaiming({d, d}, d);
  l.conv.pw2_b = zeros({d});
  l.ff_norm = make_norm(d);
  l.ff.w1 = init.kaiming({d, c.ff_expansion * d}, d);
  l.ff.b1 = zeros({c.ff_expansion * d});
  l.ff.w2 = init.kaiming({c.ff_expansion * d, d}, c.ff_expansion * d);
  l.ff.b2 = zeros({d});
  return l;
}

}  // namespace

RimformerParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Initializer init(seed);
  RimformerParams p;
  p.config = cfg;
  p.embed_w = init.kaiming({cfg.embed_kernel, cfg.in_channels, cfg.d_model}, cfg.embed_kernel * cfg.in_channels);
  p.embed_b = zeros({cfg.d_model});
  for (Index i = 0; i < cfg.n_layers; ++i) p.encoders.push_back(make_layer(init, cfg));
  for (Index i = 0; i < cfg.n_layers; ++i) p.decoders.push_back(make_layer(init, cfg));
  p.out_w = init.kaiming({1, cfg.d_model, cfg.in_channels}, cfg.d_model);
  p.out_b = zeros({cfg.in_channels});
  return p;
}

Tensor split_frames(const Tensor& x, const WindowConfig& cfg) {
  if (x.rank() != 2) throw std::invalid_argument("split_frames: expected [signal_len, C]");
  const Index frames = cfg.frame_count(x.dim(0));
  auto stack = split_windows(x.value(), cfg);
  return make_result({frames, cfg.segment_len(), x.dim(1)}, std::move(stack.segments), {x},
                     [cfg, frames](detail::Node& self) {
                       self.inputs[0]->accumulate(split_windows_adjoint(self.grad, cfg, frames));
                     });
}

Tensor merge_frames(const Tensor& segments, const WindowConfig& cfg) {
  if (segments.rank() != 3 || segments.dim(1) != cfg.segment_len())
    throw std::invalid_argument("merge_frames: expected [n_frames, segment_len, C], got " +
                                shape_string(segments.shape()));
  SegmentStack<double> stack;
  stack.config = cfg;
  stack.n_frames = segments.dim(0);
  stack.segments = segments.value();
  RowMatrix merged = merge_windows(stack);
  const Index len = merged.rows(), channels = merged.cols(), frames = stack.n_frames;
  return make_result({len, channels}, std::move(merged), {segments}, [cfg, frames](detail::Node& self) {
    self.inputs[0]->accumulate(merge_windows_adjoint(self.grad, cfg, frames));
  });
}

Tensor embed_channels(const Tensor& segments, const RimformerParams& p) {
  const auto& c = p.config;
  if (segments.rank() != 3 || segments.dim(2) != c.in_channels)
    throw std::invalid_argument("embed_channels: expected [n_frames, segment_len, " + std::to_string(c.in_channels) +
                                "], got " + shape_string(segments.shape()));
  return conv1d(segments, p.embed_w, p.embed_b, 1, Padding::same);
}

namespace {

Tensor axis_attention(const Tensor& xq, const Tensor& xkv, const AttentionParams& p, Index heads,
                      const AxisLayout& layout, AttentionProbe* probe) {
  const Tensor q = matmul(xq, p.w_q);
  const Tensor k = matmul(xkv, p.w_k);
  const Tensor v = matmul(xkv, p.w_v);
  return matmul(attention_core(q, k, v, p.rel, heads, layout, layout, probe), p.w_o);
}

void require_finite(const AttentionParams& p) {
  for (const Tensor* t : {&p.w_q, &p.w_k, &p.w_v, &p.w_o, &p.rel})
    if (!t->value().allFinite()) throw InvalidState("attention: non-finite parameters");
}

}  // namespace

Tensor dual_attention_block(const Tensor& x, const Tensor& kv, const DualAttentionParams& p, Index heads,
                            AttentionProbe* probe) {
  if (x.rank() != 3) throw std::invalid_argument("dual_attention_block: expected [n_frames, segment_len, d]");
  if (kv.defined() && kv.shape() != x.shape())
    throw std::invalid_argument("dual_attention_block: key/value stream shape " + shape_string(kv.shape()) +
                                " differs from " + shape_string(x.shape()));
  require_finite(p.intra);
  require_finite(p.inter);
  const Index frames = x.dim(0), seg = x.dim(1);
  const Tensor xn = layer_norm(x, p.norm.gain, p.norm.shift);
  const Tensor kvn = kv.defined() ? layer_norm(kv, p.norm.gain, p.norm.shift) : xn;
  const Tensor intra = axis_attention(xn, kvn, p.intra, heads, AxisLayout::intra(frames, seg), probe);
  const Tensor inter = axis_attention(xn, kvn, p.inter, heads, AxisLayout::inter(frames, seg), probe);
  return x + intra + inter;
}

Tensor glu(const Tensor& x, const Tensor& w, const Tensor& b, const Tensor& v, const Tensor& c) {
  return mul(add_bias(matmul(x, w), b), sigmoid(add_bias(matmul(x, v), c)));
}

Tensor conv_block(const Tensor& x, const ConvBlockParams& p) {
  if (x.rank() != 3) throw std::invalid_argument("conv_block: expected [n_frames, segment_len, d]");
  const Index d = x.dim(2);
  if (p.dw_w.rank() != 3 || p.dw_w.dim(2) != d) throw std::invalid_argument("conv_block: depthwise kernel mismatch");
  const Tensor flat = reshape(x, {x.dim(0) * x.dim(1), d});
  const Tensor expanded = add_bias(matmul(flat, p.pw1_w), p.pw1_b);
  const Tensor gated = glu(expanded, p.glu_w, p.glu_b, p.glu_v, p.glu_c);
  const Tensor local = swish(conv1d(gated, p.dw_w, p.dw_b, d, Padding::same));
  const Tensor projected = add_bias(matmul(local, p.pw2_w), p.pw2_b);
  return reshape(projected, x.shape());
}

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p) {
  return add_bias(matmul(swish(add_bias(matmul(x, p.w1), p.b1)), p.w2), p.b2);
}

namespace {

Tensor layer_tail(const Tensor& x1, const LayerParams& p) {
  const Tensor x2 = x1 + conv_block(layer_norm(x1, p.conv_norm.gain, p.conv_norm.shift), p.conv);
  return x2 + feed_forward(layer_norm(x2, p.ff_norm.gain, p.ff_norm.shift), p.ff);
}

}  // namespace

Tensor encoder_layer(const Tensor& x, const LayerParams& p, Index heads, AttentionProbe* probe) {
  return layer_tail(dual_attention_block(x, Tensor{}, p.attn, heads, probe), p);
}

Tensor decoder_layer(const Tensor& x, const Tensor& enc_out, const LayerParams& p, Index heads,
                     AttentionProbe* probe) {
  if (!enc_out.defined()) throw std::invalid_argument("decoder_layer: encoder output required");
  return layer_tail(dual_attention_block(x, enc_out, p.attn, heads, probe), p);
}

Tensor rimformer_forward(const Tensor& x, const RimformerParams& p, AttentionProbe* probe) {
  const auto& c = p.config;
  if (x.rank() != 2 || x.dim(0) != c.signal_len || x.dim(1) != c.in_channels)
    throw std::invalid_argument("rimformer_forward: expected [" + std::to_string(c.signal_len) + ", " +
                                std::to_string(c.in_channels) + "], got " + shape_string(x.shape()));
  const Tensor embedded = embed_channels(split_frames(x, c.window), p);
  Tensor enc = embedded;
  for (const auto& layer : p.encoders) enc = encoder_layer(enc, layer, c.n_heads, probe);
  Tensor dec = embedded;
  for (const auto& layer : p.decoders) dec = decoder_layer(dec, enc, layer, c.n_heads, probe);
  return merge_frames(conv1d(dec, p.out_w, p.out_b, 1, Padding::same), c.window);
}

}  // namespace rim
