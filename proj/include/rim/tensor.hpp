#pragma once

// Dense 64-bit tensors with define-by-run reverse-mode differentiation.
//
// A tensor of shape [d0, ..., d(r-1)] is stored row-major and viewed as a
// matrix of rows = d0 * ... * d(r-2) and cols = d(r-1). Scalars are 1x1 and
// rank-1 tensors are a single row. Every differentiable op builds its result
// node holding references to its inputs plus a closure that pushes the
// output gradient back into them; backward() walks that DAG in reverse
// topological order.

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rim {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Index numel(const Shape& shape);
Index layout_rows(const Shape& shape);
Index layout_cols(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  RowMatrix value;
  RowMatrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void accumulate(const Eigen::Ref<const RowMatrix>& g);
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor.
  explicit Tensor(Shape shape, bool requires_grad = false);
  /// Takes ownership of `value`, which must already have the layout of `shape`.
  Tensor(Shape shape, RowMatrix value, bool requires_grad = false);

  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::span<const double> data, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  Index rank() const { return static_cast<Index>(shape().size()); }
  Index dim(Index axis) const;
  Index numel() const;

  const RowMatrix& value() const;
  /// Mutable storage of a leaf. Used by optimizers and tests; never call it on
  /// an intermediate result that a live graph still references.
  RowMatrix& mutable_value();
  std::span<const double> data() const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  /// Gradient with the layout of value(); zeros if nothing has flowed in.
  RowMatrix grad() const;
  void zero_grad();

  /// Same values, no history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Builds an op result. If no input requires a gradient the backward closure
/// and input references are dropped.
Tensor make_result(Shape shape, RowMatrix value, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward);

/// Topologically ordered record of the differentiable nodes that reach a root.
class Graph {
 public:
  static Graph trace(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  /// Node i appears after every one of its inputs.
  const std::vector<std::shared_ptr<detail::Node>>& nodes() const { return order_; }

 private:
  std::vector<std::shared_ptr<detail::Node>> order_;
};

/// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every tensor on
/// the graph that requires one. Gradients add up across calls until
/// zero_grad() is called on the leaves.
void backward(const Tensor& loss);
void backward(const Tensor& loss, const Graph& graph);

}  // namespace rim
