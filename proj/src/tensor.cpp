#include "rim/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace rim {

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

Index layout_cols(const Shape& shape) { return shape.empty() ? 1 : shape.back(); }

Index layout_rows(const Shape& shape) {
  Index n = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) n *= shape[i];
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  for (Index d : shape)
    if (d < 1) throw std::invalid_argument("tensor: non-positive dimension in " + shape_string(shape));
}

}  // namespace

void detail::Node::accumulate(const Eigen::Ref<const RowMatrix>& g) {
  if (!requires_grad) return;
  if (grad.size() == 0)
    grad = g;
  else
    grad += g;
}

Tensor::Tensor(Shape shape, bool requires_grad) {
  check_shape(shape);
  node_ = std::make_shared<detail::Node>();
  node_->value = RowMatrix::Zero(layout_rows(shape), layout_cols(shape));
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, RowMatrix value, bool requires_grad) {
  check_shape(shape);
  if (value.rows() != layout_rows(shape) || value.cols() != layout_cols(shape))
    throw std::invalid_argument("tensor: value layout does not match shape " + shape_string(shape));
  node_ = std::make_shared<detail::Node>();
  node_->value = std::move(value);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  RowMatrix m(1, 1);
  m(0, 0) = v;
  return Tensor({}, std::move(m), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::span<const double> data, bool requires_grad) {
  if (static_cast<Index>(data.size()) != rim::numel(shape))
    throw std::invalid_argument("tensor: data length does not match shape " + shape_string(shape));
  RowMatrix m = Eigen::Map<const RowMatrix>(data.data(), layout_rows(shape), layout_cols(shape));
  return Tensor(std::move(shape), std::move(m), requires_grad);
}

Tensor Tensor::wrap(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("tensor: undefined");
  return node_->shape;
}

Index Tensor::dim(Index axis) const {
  const auto& s = shape();
  if (axis < 0) axis += static_cast<Index>(s.size());
  if (axis < 0 || axis >= static_cast<Index>(s.size())) throw std::out_of_range("tensor: axis out of range");
  return s[static_cast<std::size_t>(axis)];
}

Index Tensor::numel() const { return rim::numel(shape()); }

const RowMatrix& Tensor::value() const {
  if (!node_) throw std::logic_error("tensor: undefined");
  return node_->value;
}

RowMatrix& Tensor::mutable_value() {
  if (!node_) throw std::logic_error("tensor: undefined");
  return node_->value;
}

std::span<const double> Tensor::data() const {
  const auto& v = value();
  return {v.data(), static_cast<std::size_t>(v.size())};
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("tensor: item() on non-scalar " + shape_string(shape()));
  return value()(0, 0);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node_) throw std::logic_error("tensor: undefined");
  node_->requires_grad = on;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() != 0; }

RowMatrix Tensor::grad() const {
  const auto& v = value();
  if (node_->grad.size() == 0) return RowMatrix::Zero(v.rows(), v.cols());
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.resize(0, 0);
}

Tensor Tensor::detach() const { return Tensor(shape(), value(), false); }

Tensor make_result(Shape shape, RowMatrix value, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward) {
  Tensor out(std::move(shape), std::move(value), false);
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    auto& node = *out.node();
    node.requires_grad = true;
    node.inputs.reserve(inputs.size());
    for (auto& t : inputs) node.inputs.push_back(t.node());
    node.backward = std::move(backward);
  }
  return out;
}

Graph Graph::trace(const Tensor& root) {
  Graph g;
  if (!root.requires_grad()) return g;
  std::unordered_set<const detail::Node*> seen;
  // Iterative post-order DFS; a node is emitted once all inputs are emitted.
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (child && child->requires_grad && seen.insert(child.get()).second) stack.emplace_back(std::move(child), 0);
    } else {
      g.order_.push_back(node);
      stack.pop_back();
    }
  }
  return g;
}

void backward(const Tensor& loss) { backward(loss, Graph::trace(loss)); }

void backward(const Tensor& loss, const Graph& graph) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar tensor");
  if (!loss.requires_grad()) return;
  const auto& order = graph.nodes();
  if (order.empty() || order.back() != loss.node())
    throw std::invalid_argument("backward: graph was not traced from this loss");
  for (const auto& node : order)
    if (node->backward) node->grad.resize(0, 0);
  loss.node()->accumulate(RowMatrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto& node = **it;
    if (node.backward && node.grad.size() != 0) node.backward(node);
  }
}

}  // namespace rim
