#include "rim/ops.hpp"

#include "rim/fft.hpp"

#include <cmath>
#include <stdexcept>

namespace rim {

namespace {

using Node = detail::Node;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
}

const RowMatrix& in_value(const Node& n, std::size_t i) { return n.inputs[i]->value; }

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& x, Forward f, Derivative df) {
  RowMatrix y = x.value().unaryExpr(f);
  return make_result(x.shape(), std::move(y), {x}, [df](Node& self) {
    const RowMatrix& xv = in_value(self, 0);
    RowMatrix g = self.grad.cwiseProduct(xv.unaryExpr(df));
    self.inputs[0]->accumulate(g);
  });
}

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return make_result(a.shape(), a.value() + b.value(), {a, b}, [](Node& self) {
    self.inputs[0]->accumulate(self.grad);
    self.inputs[1]->accumulate(self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return make_result(a.shape(), a.value() - b.value(), {a, b}, [](Node& self) {
    self.inputs[0]->accumulate(self.grad);
    self.inputs[1]->accumulate(-self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return make_result(a.shape(), a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    self.inputs[0]->accumulate(self.grad.cwiseProduct(in_value(self, 1)));
    self.inputs[1]->accumulate(self.grad.cwiseProduct(in_value(self, 0)));
  });
}

Tensor scale(const Tensor& a, double s) {
  return make_result(a.shape(), a.value() * s, {a}, [s](Node& self) { self.inputs[0]->accumulate(self.grad * s); });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || bias.dim(0) != layout_cols(x.shape()))
    throw std::invalid_argument("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                                shape_string(x.shape()));
  RowMatrix y = x.value().rowwise() + bias.value().row(0);
  return make_result(x.shape(), std::move(y), {x, bias}, [](Node& self) {
    self.inputs[0]->accumulate(self.grad);
    self.inputs[1]->accumulate(self.grad.colwise().sum());
  });
}

Tensor matmul(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2 || x.rank() < 1 || layout_cols(x.shape()) != w.dim(0))
    throw std::invalid_argument("matmul: cannot multiply " + shape_string(x.shape()) + " by " +
                                shape_string(w.shape()));
  Shape out_shape = x.shape();
  out_shape.back() = w.dim(1);
  RowMatrix y = x.value() * w.value();
  return make_result(std::move(out_shape), std::move(y), {x, w}, [](Node& self) {
    const RowMatrix& xv = in_value(self, 0);
    const RowMatrix& wv = in_value(self, 1);
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad * wv.transpose());
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(xv.transpose() * self.grad);
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw std::invalid_argument("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  const Index rows = layout_rows(shape), cols = layout_cols(shape);
  RowMatrix y = Eigen::Map<const RowMatrix>(x.value().data(), rows, cols);
  return make_result(std::move(shape), std::move(y), {x}, [](Node& self) {
    const auto& in = self.inputs[0]->value;
    self.inputs[0]->accumulate(Eigen::Map<const RowMatrix>(self.grad.data(), in.rows(), in.cols()));
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, logistic, [](double z) {
    const double s = logistic(z);
    return s * (1.0 - s);
  });
}

Tensor swish(const Tensor& x) {
  return unary(x, [](double z) { return z * logistic(z); },
               [](double z) {
                 const double s = logistic(z);
                 return s + z * s * (1.0 - s);
               });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double z) { return z * z; }, [](double z) { return 2.0 * z; });
}

Tensor sum(const Tensor& x) {
  RowMatrix y(1, 1);
  y(0, 0) = x.value().sum();
  return make_result({}, std::move(y), {x}, [](Node& self) {
    const auto& in = self.inputs[0]->value;
    self.inputs[0]->accumulate(RowMatrix::Constant(in.rows(), in.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor l2_norm(const Tensor& x) {
  const double norm = x.value().norm();
  RowMatrix y(1, 1);
  y(0, 0) = norm;
  return make_result({}, std::move(y), {x}, [norm](Node& self) {
    const auto& in = self.inputs[0]->value;
    if (norm == 0.0) {
      self.inputs[0]->accumulate(RowMatrix::Zero(in.rows(), in.cols()));
      return;
    }
    self.inputs[0]->accumulate(in * (self.grad(0, 0) / norm));
  });
}

Tensor softmax_rows(const Tensor& x) {
  const RowMatrix& v = x.value();
  if (v.hasNaN()) throw std::invalid_argument("softmax_rows: NaN input");
  RowMatrix y = (v.colwise() - v.rowwise().maxCoeff()).array().exp().matrix();
  y.array().colwise() /= y.rowwise().sum().array();
  RowMatrix saved = y;
  return make_result(x.shape(), std::move(y), {x}, [saved = std::move(saved)](Node& self) {
    const Eigen::VectorXd dot = self.grad.cwiseProduct(saved).rowwise().sum();
    RowMatrix g = saved.cwiseProduct(self.grad.colwise() - dot);
    self.inputs[0]->accumulate(g);
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
  const Index channels = layout_cols(x.shape());
  if (gain.rank() != 1 || shift.rank() != 1 || gain.dim(0) != channels || shift.dim(0) != channels)
    throw std::invalid_argument("layer_norm: gain/shift must be [" + std::to_string(channels) + "]");
  if (!(eps > 0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const RowMatrix& v = x.value();
  const Eigen::VectorXd mu = v.rowwise().mean();
  RowMatrix centered = v.colwise() - mu;
  const Eigen::VectorXd inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<double>(channels)) + eps).rsqrt();
  RowMatrix normalized = centered.array().colwise() * inv_std.array();
  RowMatrix y = (normalized.array().rowwise() * gain.value().row(0).array()).rowwise() +
                shift.value().row(0).array();
  return make_result(x.shape(), std::move(y), {x, gain, shift},
                     [normalized = std::move(normalized), inv_std](Node& self) {
                       const RowMatrix& g = self.grad;
                       const auto& gain_row = self.inputs[1]->value;
                       if (self.inputs[0]->requires_grad) {
                         RowMatrix dn = g.array().rowwise() * gain_row.row(0).array();
                         const Eigen::VectorXd mean_dn = dn.rowwise().mean();
                         const Eigen::VectorXd mean_dn_n = dn.cwiseProduct(normalized).rowwise().mean();
                         RowMatrix dx = dn.colwise() - mean_dn;
                         dx -= (normalized.array().colwise() * mean_dn_n.array()).matrix();
                         dx.array().colwise() *= inv_std.array();
                         self.inputs[0]->accumulate(dx);
                       }
                       self.inputs[1]->accumulate(g.cwiseProduct(normalized).colwise().sum());
                       self.inputs[2]->accumulate(g.colwise().sum());
                     });
}

Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias, Index groups, Padding padding) {
  if (x.rank() != 2 && x.rank() != 3) throw std::invalid_argument("conv1d: input must be [len, C] or [B, len, C]");
  if (kernel.rank() != 3) throw std::invalid_argument("conv1d: kernel must be [k, C_in/groups, C_out]");
  const Index batch = x.rank() == 3 ? x.dim(0) : 1;
  const Index len = x.dim(-2);
  const Index c_in = x.dim(-1);
  const Index k = kernel.dim(0);
  const Index c_out = kernel.dim(2);
  if (groups < 1 || c_in % groups != 0 || c_out % groups != 0)
    throw std::invalid_argument("conv1d: channels not divisible by groups");
  const Index cin_g = c_in / groups;
  const Index cout_g = c_out / groups;
  if (kernel.dim(1) != cin_g)
    throw std::invalid_argument("conv1d: kernel " + shape_string(kernel.shape()) + " does not match input " +
                                shape_string(x.shape()));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c_out))
    throw std::invalid_argument("conv1d: bias must be [C_out]");
  if (padding == Padding::same && k % 2 == 0) throw std::invalid_argument("conv1d: same padding needs odd k");
  const Index pad = padding == Padding::same ? (k - 1) / 2 : 0;
  const Index out_len = padding == Padding::same ? len : len - k + 1;
  if (out_len < 1) throw std::invalid_argument("conv1d: kernel longer than input");

  const RowMatrix& xv = x.value();
  const RowMatrix& kv = kernel.value();  // rows = k * cin_g, tap j occupies rows [j*cin_g, (j+1)*cin_g)
  const bool depthwise = cin_g == 1 && cout_g == 1;

  // Valid output range for tap j: t with 0 <= t + j - pad < len.
  auto tap_range = [pad, len, out_len](Index j, Index& t0, Index& t1) {
    t0 = std::max<Index>(0, pad - j);
    t1 = std::min<Index>(out_len, len + pad - j);
  };

  RowMatrix y = RowMatrix::Zero(batch * out_len, c_out);
  for (Index b = 0; b < batch; ++b) {
    for (Index j = 0; j < k; ++j) {
      Index t0, t1;
      tap_range(j, t0, t1);
      if (t1 <= t0) continue;
      const Index n = t1 - t0;
      const Index src = b * len + t0 + j - pad;
      auto out_rows = y.middleRows(b * out_len + t0, n);
      const auto tap = kv.middleRows(j * cin_g, cin_g);
      if (groups == 1) {
        out_rows.noalias() += xv.middleRows(src, n) * tap;
      } else if (depthwise) {
        out_rows.array() += xv.middleRows(src, n).array().rowwise() * tap.row(0).array();
      } else {
        for (Index g = 0; g < groups; ++g)
          out_rows.middleCols(g * cout_g, cout_g).noalias() +=
              xv.block(src, g * cin_g, n, cin_g) * tap.middleCols(g * cout_g, cout_g);
      }
    }
  }
  if (bias.defined()) y.rowwise() += bias.value().row(0);

  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = out_len;
  out_shape.back() = c_out;
  std::vector<Tensor> inputs{x, kernel};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(out_shape), std::move(y), std::move(inputs),
                     [=](Node& self) {
                       const RowMatrix& g = self.grad;
                       const RowMatrix& xin = self.inputs[0]->value;
                       const RowMatrix& kin = self.inputs[1]->value;
                       const bool want_x = self.inputs[0]->requires_grad;
                       const bool want_k = self.inputs[1]->requires_grad;
                       RowMatrix dx, dk;
                       if (want_x) dx = RowMatrix::Zero(xin.rows(), xin.cols());
                       if (want_k) dk = RowMatrix::Zero(kin.rows(), kin.cols());
                       for (Index b = 0; b < batch; ++b) {
                         for (Index j = 0; j < k; ++j) {
                           Index t0, t1;
                           tap_range(j, t0, t1);
                           if (t1 <= t0) continue;
                           const Index n = t1 - t0;
                           const Index src = b * len + t0 + j - pad;
                           const auto g_rows = g.middleRows(b * out_len + t0, n);
                           const auto tap = kin.middleRows(j * cin_g, cin_g);
                           if (groups == 1) {
                             if (want_x) dx.middleRows(src, n).noalias() += g_rows * tap.transpose();
                             if (want_k) dk.middleRows(j * cin_g, cin_g).noalias() += xin.middleRows(src, n).transpose() * g_rows;
                           } else if (depthwise) {
                             if (want_x) dx.middleRows(src, n).array() += g_rows.array().rowwise() * tap.row(0).array();
                             if (want_k) dk.row(j) += xin.middleRows(src, n).cwiseProduct(g_rows).colwise().sum();
                           } else {
                             for (Index gi = 0; gi < groups; ++gi) {
                               const auto gg = g_rows.middleCols(gi * cout_g, cout_g);
                               if (want_x)
                                 dx.block(src, gi * cin_g, n, cin_g).noalias() +=
                                     gg * tap.middleCols(gi * cout_g, cout_g).transpose();
                               if (want_k)
                                 dk.block(j * cin_g, gi * cout_g, cin_g, cout_g).noalias() +=
                                     xin.block(src, gi * cin_g, n, cin_g).transpose() * gg;
                             }
                           }
                         }
                       }
                       if (want_x) self.inputs[0]->accumulate(dx);
                       if (want_k) self.inputs[1]->accumulate(dk);
                       if (self.inputs.size() > 2) self.inputs[2]->accumulate(g.colwise().sum());
                     });
}

Tensor dft(const Tensor& x) {
  const bool complex_input = x.rank() == 2 && x.dim(1) == 2;
  const bool column = x.rank() == 2 && x.dim(1) == 1;
  if (!complex_input && !column && x.rank() != 1)
    throw std::invalid_argument("dft: expected [N] or [N, 1] real or [N, 2] complex input");
  const Index n = x.dim(0);
  ComplexVector<double> signal(n);
  // Real [N] values are stored as one row, [N, 1] as one column.
  const Eigen::Map<const Eigen::VectorXd> flat(x.value().data(), n * (complex_input ? 2 : 1));
  for (Index i = 0; i < n; ++i)
    signal[i] = complex_input ? std::complex<double>(flat[2 * i], flat[2 * i + 1]) : std::complex<double>(flat[i], 0.0);
  const ComplexVector<double> spectrum = fft(signal);
  RowMatrix y(n, 2);
  y.col(0) = spectrum.real();
  y.col(1) = spectrum.imag();
  return make_result({n, 2}, std::move(y), {x}, [n, complex_input, column](Node& self) {
    // The transform is linear with matrix F; its adjoint is conj(F)^T, i.e.
    // an unnormalized inverse transform of the incoming gradient.
    ComplexVector<double> g(n);
    for (Index i = 0; i < n; ++i) g[i] = {self.grad(i, 0), self.grad(i, 1)};
    const ComplexVector<double> back = ifft(g) * static_cast<double>(n);
    if (complex_input) {
      RowMatrix dx(n, 2);
      dx.col(0) = back.real();
      dx.col(1) = back.imag();
      self.inputs[0]->accumulate(dx);
    } else if (column) {
      RowMatrix dx = back.real();
      self.inputs[0]->accumulate(dx);
    } else {
      RowMatrix dx = back.real().transpose();
      self.inputs[0]->accumulate(dx);
    }
  });
}

Tensor complex_abs(const Tensor& z) {
  if (z.rank() != 2 || z.dim(1) != 2) throw std::invalid_argument("complex_abs: expected [N, 2]");
  const Index n = z.dim(0);
  RowMatrix y = z.value().rowwise().norm().transpose();
  return make_result({n}, std::move(y), {z}, [n](Node& self) {
    const RowMatrix& zv = self.inputs[0]->value;
    RowMatrix dz = RowMatrix::Zero(n, 2);
    for (Index i = 0; i < n; ++i) {
      const double m = std::hypot(zv(i, 0), zv(i, 1));
      if (m == 0.0) continue;
      dz(i, 0) = self.grad(0, i) * zv(i, 0) / m;
      dz(i, 1) = self.grad(0, i) * zv(i, 1) / m;
    }
    self.inputs[0]->accumulate(dz);
  });
}

}  // namespace rim
