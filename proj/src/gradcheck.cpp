#include "rim/gradcheck.hpp"

#include <algorithm>
#include <stdexcept>

namespace rim {

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0)) throw std::invalid_argument("finite_diff_gradient: h must be positive");
  RowMatrix base = x.value();
  RowMatrix out(base.rows(), base.cols());
  for (Index i = 0; i < base.size(); ++i) {
    RowMatrix probe = base;
    probe.data()[i] = base.data()[i] + h;
    const double up = f(Tensor(x.shape(), probe));
    probe.data()[i] = base.data()[i] - h;
    const double down = f(Tensor(x.shape(), probe));
    out.data()[i] = (up - down) / (2.0 * h);
  }
  return Tensor(x.shape(), std::move(out));
}

double relative_error(const RowMatrix& a, const RowMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("relative_error: shape mismatch");
  const double diff = (a - b).cwiseAbs().maxCoeff();
  const double ref = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  if (ref == 0.0) return diff;
  return diff / ref;
}

}  // namespace rim
