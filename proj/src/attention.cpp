#include "rim/errors.hpp"
#include "rim/model.hpp"
#include "rim/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace rim {

namespace {

using Strided = Eigen::OuterStride<>;
using ConstView = Eigen::Map<const RowMatrix, 0, Strided>;
using View = Eigen::Map<RowMatrix, 0, Strided>;

// Rows of one group restricted to the channel block [col, col + width).
ConstView group_view(const RowMatrix& m, const AxisLayout& l, Index g, Index col, Index width) {
  return ConstView(m.data() + (g * l.group_stride) * m.cols() + col, l.length, width, Strided(l.elem_stride * m.cols()));
}

View group_view(RowMatrix& m, const AxisLayout& l, Index g, Index col, Index width) {
  return View(m.data() + (g * l.group_stride) * m.cols() + col, l.length, width, Strided(l.elem_stride * m.cols()));
}

void check_layout(const Tensor& t, const AxisLayout& l, const char* what) {
  const Index rows = layout_rows(t.shape());
  const Index last = (l.groups - 1) * l.group_stride + (l.length - 1) * l.elem_stride;
  if (l.groups < 1 || l.length < 1 || last >= rows)
    throw std::invalid_argument(std::string("attention: layout does not fit ") + what + " " + shape_string(t.shape()));
}

void add_relative(RowMatrix& scores, const RowMatrix& rel, Index head, Index q_len, Index kv_len) {
  for (Index i = 0; i < q_len; ++i)
    for (Index j = 0; j < kv_len; ++j) scores(i, j) += rel(head, j - i + q_len - 1);
}

void softmax_inplace(RowMatrix& s) {
  s = (s.colwise() - s.rowwise().maxCoeff()).array().exp().matrix();
  s.array().colwise() /= s.rowwise().sum().array();
}

}  // namespace

RowMatrix relative_scores(const Tensor& rel, Index head, Index q_len, Index kv_len) {
  if (rel.rank() != 2 || rel.dim(1) != q_len + kv_len - 1 || head < 0 || head >= rel.dim(0))
    throw std::invalid_argument("relative_scores: table " + shape_string(rel.shape()) + " does not cover lengths");
  RowMatrix s = RowMatrix::Zero(q_len, kv_len);
  add_relative(s, rel.value(), head, q_len, kv_len);
  return s;
}

Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& rel, Index heads,
                      const AxisLayout& ql, const AxisLayout& kl, AttentionProbe* probe) {
  if (heads < 1) throw std::invalid_argument("attention: need at least one head");
  const Index qk_width = layout_cols(q.shape());
  const Index v_width = layout_cols(v.shape());
  if (layout_cols(k.shape()) != qk_width || qk_width % heads != 0 || v_width % heads != 0)
    throw std::invalid_argument("attention: projection widths do not split into heads");
  if (layout_rows(k.shape()) != layout_rows(v.shape())) throw std::invalid_argument("attention: key/value row mismatch");
  if (ql.groups != kl.groups) throw std::invalid_argument("attention: query and key layouts have different groups");
  check_layout(q, ql, "queries");
  check_layout(k, kl, "keys");
  if (rel.rank() != 2 || rel.dim(0) != heads || rel.dim(1) != ql.length + kl.length - 1)
    throw std::invalid_argument("attention: relative table must be [" + std::to_string(heads) + ", " +
                                std::to_string(ql.length + kl.length - 1) + "], got " + shape_string(rel.shape()));

  const Index dk = qk_width / heads;
  const Index dv = v_width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const RowMatrix& qv = q.value();
  const RowMatrix& kv = k.value();
  const RowMatrix& vv = v.value();
  const RowMatrix& rv = rel.value();

  Shape out_shape = q.shape();
  out_shape.back() = v_width;
  RowMatrix out = RowMatrix::Zero(layout_rows(q.shape()), v_width);
  std::vector<RowMatrix> weights(static_cast<std::size_t>(ql.groups * heads));
  for (Index g = 0; g < ql.groups; ++g) {
    for (Index h = 0; h < heads; ++h) {
      RowMatrix s = group_view(qv, ql, g, h * dk, dk) * group_view(kv, kl, g, h * dk, dk).transpose();
      add_relative(s, rv, h, ql.length, kl.length);
      s *= inv_sqrt;
      softmax_inplace(s);
      group_view(out, ql, g, h * dv, dv).noalias() = s * group_view(vv, kl, g, h * dv, dv);
      weights[static_cast<std::size_t>(g * heads + h)] = std::move(s);
    }
  }
  if (probe)
    for (const auto& w : weights) probe->weights.push_back(w);

  return make_result(
      std::move(out_shape), std::move(out), {q, k, v, rel},
      [weights = std::move(weights), heads, dk, dv, inv_sqrt, ql, kl](detail::Node& self) {
        const RowMatrix& qv = self.inputs[0]->value;
        const RowMatrix& kv = self.inputs[1]->value;
        const RowMatrix& vv = self.inputs[2]->value;
        RowMatrix dq = RowMatrix::Zero(qv.rows(), qv.cols());
        RowMatrix dkm = RowMatrix::Zero(kv.rows(), kv.cols());
        RowMatrix dvm = RowMatrix::Zero(vv.rows(), vv.cols());
        RowMatrix drel = RowMatrix::Zero(heads, ql.length + kl.length - 1);
        for (Index g = 0; g < ql.groups; ++g) {
          for (Index h = 0; h < heads; ++h) {
            const RowMatrix& a = weights[static_cast<std::size_t>(g * heads + h)];
            const auto go = group_view(self.grad, ql, g, h * dv, dv);
            group_view(dvm, kl, g, h * dv, dv).noalias() += a.transpose() * go;
            RowMatrix da = go * group_view(vv, kl, g, h * dv, dv).transpose();
            const Eigen::VectorXd dot = da.cwiseProduct(a).rowwise().sum();
            RowMatrix ds = a.cwiseProduct(da.colwise() - dot) * inv_sqrt;
            group_view(dq, ql, g, h * dk, dk).noalias() += ds * group_view(kv, kl, g, h * dk, dk);
            group_view(dkm, kl, g, h * dk, dk).noalias() += ds.transpose() * group_view(qv, ql, g, h * dk, dk);
            for (Index i = 0; i < ql.length; ++i)
              for (Index j = 0; j < kl.length; ++j) drel(h, j - i + ql.length - 1) += ds(i, j);
          }
        }
        self.inputs[0]->accumulate(dq);
        self.inputs[1]->accumulate(dkm);
        self.inputs[2]->accumulate(dvm);
        self.inputs[3]->accumulate(drel);
      });
}

Tensor relative_attention(const Tensor& x_q, const Tensor& x_kv, const AttentionParams& p, Index heads,
                          AttentionProbe* probe) {
  if (x_q.rank() != 2 || x_kv.rank() != 2 || x_q.dim(1) != x_kv.dim(1))
    throw std::invalid_argument("relative_attention: expected [n, d] and [m, d] inputs");
  for (const Tensor* t : {&p.w_q, &p.w_k, &p.w_v, &p.w_o, &p.rel})
    if (!t->value().allFinite()) throw InvalidState("relative_attention: non-finite parameters");
  const Tensor q = matmul(x_q, p.w_q);
  const Tensor k = matmul(x_kv, p.w_k);
  const Tensor v = matmul(x_kv, p.w_v);
  const Tensor heads_out = attention_core(q, k, v, p.rel, heads, AxisLayout::sequence(x_q.dim(0)),
                                          AxisLayout::sequence(x_kv.dim(0)), probe);
  return matmul(heads_out, p.w_o);
}

}  // namespace rim
