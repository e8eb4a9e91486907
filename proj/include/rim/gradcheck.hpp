#pragma once

#include "rim/tensor.hpp"

#include <functional>

namespace rim {

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every element
/// of x. `f` receives a fresh tensor of x's shape on each call.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

/// Largest elementwise deviation relative to the larger of the two tensors'
/// maximum magnitudes. Zero when both are identically zero.
double relative_error(const RowMatrix& a, const RowMatrix& b);

}  // namespace rim
