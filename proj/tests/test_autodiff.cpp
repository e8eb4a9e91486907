#include "rim/gradcheck.hpp"
#include "rim/ops.hpp"
#include "rim/tensor.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace rim;

namespace {

Tensor uniform(Shape shape, unsigned seed, bool grad = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(std::move(shape), grad);
  for (Index i = 0; i < t.value().size(); ++i) t.mutable_value().data()[i] = u(rng);
  return t;
}

// Compares backward() against central differences for f evaluated at x.
void expect_gradient_matches(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double tol = 1e-4) {
  Tensor leaf(x.shape(), x.value(), true);
  backward(f(leaf));
  const Tensor numeric =
      finite_diff_gradient([&](const Tensor& probe) { return f(probe).item(); }, x.detach(), 1e-5);
  EXPECT_LT(relative_error(leaf.grad(), numeric.value()), tol);
}

// Weighted sum so every output element gets a distinct upstream gradient.
Tensor project(const Tensor& y, unsigned seed = 99) {
  const Tensor w = uniform(y.shape(), seed, false);
  return sum(mul(y, w));
}

}  // namespace

TEST(Tensor, ShapeAndDataAgree) {
  Tensor t(Shape{2, 3, 4});
  EXPECT_EQ(t.numel(), 24);
  EXPECT_EQ(static_cast<Index>(t.data().size()), 24);
  EXPECT_EQ(t.value().rows(), 6);
  EXPECT_EQ(t.value().cols(), 4);
  EXPECT_EQ(t.dim(-1), 4);
  EXPECT_THROW(Tensor::from_data({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST(Tensor, GradHasValueShape) {
  Tensor x = uniform({3, 5}, 1);
  backward(sum(square(x)));
  ASSERT_TRUE(x.has_grad());
  EXPECT_EQ(x.grad().rows(), 3);
  EXPECT_EQ(x.grad().cols(), 5);
}

TEST(Backward, SumGivesOnes) {
  Tensor x = uniform({4, 3}, 2);
  backward(sum(x));
  EXPECT_TRUE(x.grad().isOnes(0));
}

TEST(Backward, ConstantLossGivesZeroGradient) {
  Tensor x = uniform({4}, 3);
  Tensor c = Tensor::scalar(2.0);
  backward(c);
  EXPECT_TRUE(x.grad().isZero(0));
}

TEST(Backward, NonScalarLossThrows) {
  Tensor x = uniform({4}, 4);
  EXPECT_THROW(backward(square(x)), std::invalid_argument);
}

TEST(Backward, FanOutAccumulatesBranchGradients) {
  const Tensor x0 = uniform({3, 3}, 5);
  auto branch_a = [](const Tensor& x) { return sum(square(x)); };
  auto branch_b = [](const Tensor& x) { return sum(sigmoid(x)); };

  Tensor xa(x0.shape(), x0.value(), true);
  backward(branch_a(xa));
  Tensor xb(x0.shape(), x0.value(), true);
  backward(branch_b(xb));
  Tensor both(x0.shape(), x0.value(), true);
  backward(branch_a(both) + branch_b(both));

  EXPECT_LT((both.grad() - (xa.grad() + xb.grad())).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Backward, RepeatedBackwardAccumulatesIntoLeaves) {
  Tensor x = uniform({2, 2}, 6);
  backward(sum(x));
  backward(sum(x));
  EXPECT_TRUE(x.grad().isConstant(2.0, 0));
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Graph, TopologicalOrder) {
  Tensor x = uniform({3}, 7);
  Tensor y = square(x);
  Tensor z = sum(y + sigmoid(y));
  const Graph g = Graph::trace(z);
  const auto& nodes = g.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (const auto& in : nodes[i]->inputs) {
      const auto pos = std::find(nodes.begin(), nodes.end(), in) - nodes.begin();
      EXPECT_LT(static_cast<std::size_t>(pos), i);
    }
  EXPECT_EQ(nodes.back(), z.node());
}

TEST(FiniteDiff, SumOfSquares) {
  const Tensor x = Tensor::from_data({2}, std::vector<double>{1, 2});
  const Tensor g = finite_diff_gradient([](const Tensor& t) { return t.value().squaredNorm(); }, x, 1e-5);
  EXPECT_NEAR(g.value()(0, 0), 2.0, 1e-6);
  EXPECT_NEAR(g.value()(0, 1), 4.0, 1e-6);
}

TEST(FiniteDiff, ConstantFunction) {
  const Tensor g = finite_diff_gradient([](const Tensor&) { return 3.0; }, uniform({5}, 8, false));
  EXPECT_TRUE(g.value().isZero(0));
}

TEST(FiniteDiff, SoftmaxDotAgreesWithBackward) {
  const Tensor w = Tensor::from_data({4}, std::vector<double>{0.3, -1.2, 0.7, 2.0});
  expect_gradient_matches([&](const Tensor& x) { return sum(mul(softmax_rows(x), w)); }, uniform({4}, 9));
}

// One gradient check per differentiable operation, inputs uniform in [-1, 1].
TEST(GradCheck, Elementwise) {
  const Tensor b = uniform({3, 4}, 10, false);
  expect_gradient_matches([&](const Tensor& x) { return project(x + b); }, uniform({3, 4}, 11));
  expect_gradient_matches([&](const Tensor& x) { return project(b - x); }, uniform({3, 4}, 12));
  expect_gradient_matches([&](const Tensor& x) { return project(mul(x, x)); }, uniform({3, 4}, 13));
  expect_gradient_matches([&](const Tensor& x) { return project(x * 1.7); }, uniform({3, 4}, 14));
  expect_gradient_matches([&](const Tensor& x) { return project(sigmoid(x)); }, uniform({3, 4}, 15));
  expect_gradient_matches([&](const Tensor& x) { return project(swish(x)); }, uniform({3, 4}, 16));
  expect_gradient_matches([&](const Tensor& x) { return project(square(x)); }, uniform({3, 4}, 17));
  expect_gradient_matches([&](const Tensor& x) { return mean(x * 3.0); }, uniform({3, 4}, 18));
  expect_gradient_matches([&](const Tensor& x) { return l2_norm(x); }, uniform({3, 4}, 19));
}

TEST(GradCheck, BiasMatmulReshape) {
  const Tensor x0 = uniform({2, 3, 4}, 20, false);
  const Tensor w0 = uniform({4, 5}, 21, false);
  const Tensor b0 = uniform({5}, 22, false);
  expect_gradient_matches([&](const Tensor& x) { return project(add_bias(matmul(x, w0), b0)); }, x0);
  expect_gradient_matches([&](const Tensor& w) { return project(matmul(x0, w)); }, w0);
  expect_gradient_matches([&](const Tensor& b) { return project(add_bias(matmul(x0, w0), b)); }, b0);
  expect_gradient_matches([&](const Tensor& x) { return project(reshape(x, {6, 4})); }, x0);
}

TEST(GradCheck, SoftmaxAndLayerNorm) {
  expect_gradient_matches([](const Tensor& x) { return project(softmax_rows(x)); }, uniform({3, 5}, 23));
  const Tensor x0 = uniform({4, 6}, 24, false);
  const Tensor g0 = uniform({6}, 25, false);
  const Tensor s0 = uniform({6}, 26, false);
  expect_gradient_matches([&](const Tensor& x) { return project(layer_norm(x, g0, s0)); }, x0);
  expect_gradient_matches([&](const Tensor& g) { return project(layer_norm(x0, g, s0)); }, g0);
  expect_gradient_matches([&](const Tensor& s) { return project(layer_norm(x0, g0, s)); }, s0);
}

TEST(GradCheck, Conv1dAllOperandsAndGroupings) {
  struct Case {
    Shape x, k;
    Index groups;
    Padding pad;
  };
  const std::vector<Case> cases{
      {{9, 4}, {3, 4, 6}, 1, Padding::same},  {{9, 4}, {5, 2, 6}, 2, Padding::valid},
      {{8, 3}, {3, 1, 3}, 3, Padding::same},  {{2, 7, 4}, {3, 4, 2}, 1, Padding::same},
      {{2, 7, 3}, {5, 1, 3}, 3, Padding::same},
  };
  unsigned seed = 30;
  for (const auto& c : cases) {
    const Tensor x0 = uniform(c.x, seed++, false);
    const Tensor k0 = uniform(c.k, seed++, false);
    const Tensor b0 = uniform({c.k.back()}, seed++, false);
    expect_gradient_matches([&](const Tensor& x) { return project(conv1d(x, k0, b0, c.groups, c.pad)); }, x0);
    expect_gradient_matches([&](const Tensor& k) { return project(conv1d(x0, k, b0, c.groups, c.pad)); }, k0);
    expect_gradient_matches([&](const Tensor& b) { return project(conv1d(x0, k0, b, c.groups, c.pad)); }, b0);
  }
}

TEST(GradCheck, DftAndMagnitude) {
  expect_gradient_matches([](const Tensor& x) { return project(dft(x)); }, uniform({8, 2}, 40));
  expect_gradient_matches([](const Tensor& x) { return project(dft(x)); }, uniform({6}, 41));
  expect_gradient_matches([](const Tensor& x) { return project(dft(x)); }, uniform({6, 1}, 43));
  // A real column transforms like the same values laid out as [N].
  const Tensor col = uniform({6, 1}, 44);
  EXPECT_EQ(dft(col).value(), dft(Tensor::from_data({6}, col.data())).value());
  expect_gradient_matches([](const Tensor& x) { return project(complex_abs(dft(x))); }, uniform({16, 2}, 42));
}
