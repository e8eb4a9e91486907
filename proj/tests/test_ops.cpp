#include "rim/ops.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace rim;

namespace {

Tensor uniform(Shape shape, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.value().size(); ++i) t.mutable_value().data()[i] = u(rng);
  return t;
}

// out[t, o] = b[o] + sum_j sum_c x[t + j - pad, g(o) * cg + c] * k[j, c, o]
RowMatrix conv_oracle(const RowMatrix& x, const Tensor& k, const RowMatrix& b, Index groups, bool same) {
  const Index len = x.rows(), cin = x.cols(), taps = k.dim(0), cg = k.dim(1), cout = k.dim(2);
  const Index pad = same ? (taps - 1) / 2 : 0;
  const Index out_len = same ? len : len - taps + 1;
  const Index per_group_out = cout / groups;
  RowMatrix out(out_len, cout);
  for (Index t = 0; t < out_len; ++t)
    for (Index o = 0; o < cout; ++o) {
      double acc = b(0, o);
      const Index g = o / per_group_out;
      for (Index j = 0; j < taps; ++j) {
        const Index src = t + j - pad;
        if (src < 0 || src >= len) continue;
        for (Index c = 0; c < cg; ++c) acc += x(src, g * cg + c) * k.value()(j * cg + c, o);
      }
      out(t, o) = acc;
    }
  (void)cin;
  return out;
}

}  // namespace

TEST(Softmax, UniformOnEqualInputs) {
  const Tensor y = softmax_rows(Tensor::from_data({3}, std::vector<double>{0, 0, 0}));
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(y.value()(0, i), 1.0 / 3.0, 1e-15);
}

TEST(Softmax, SaturatesWithoutOverflow) {
  const Tensor y = softmax_rows(Tensor::from_data({2}, std::vector<double>{1000, 0}));
  EXPECT_NEAR(y.value()(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(y.value()(0, 1), 0.0, 1e-12);
}

TEST(Softmax, MatchesExtendedPrecisionOracle) {
  const Tensor y = softmax_rows(Tensor::from_data({3}, std::vector<double>{1, 2, 3}));
  long double denom = 0;
  for (int i = 1; i <= 3; ++i) denom += std::exp(static_cast<long double>(i));
  for (int i = 1; i <= 3; ++i)
    EXPECT_NEAR(y.value()(0, i - 1), static_cast<double>(std::exp(static_cast<long double>(i)) / denom), 1e-15);
}

TEST(Softmax, RowsSumToOneAndArePositive) {
  const Tensor x = uniform({20, 7}, 1) * 30.0;
  const RowMatrix y = softmax_rows(x).value();
  for (Index r = 0; r < y.rows(); ++r) EXPECT_NEAR(y.row(r).sum(), 1.0, 1e-12);
  EXPECT_GT(y.minCoeff(), 0.0);
}

TEST(Softmax, MonotoneInInputs) {
  Tensor x = Tensor::from_data({4}, std::vector<double>{0.1, 0.5, -0.3, 0.2});
  const double before = softmax_rows(x).value()(0, 1);
  x.mutable_value()(0, 1) += 0.1;
  EXPECT_GT(softmax_rows(x).value()(0, 1), before);
}

TEST(Softmax, NanThrows) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(softmax_rows(Tensor::from_data({2}, std::vector<double>{0, nan})), std::invalid_argument);
}

TEST(Conv1d, IdentityKernel) {
  const Tensor x = uniform({10, 3}, 2);
  Tensor k(Shape{1, 3, 3});
  for (Index c = 0; c < 3; ++c) k.mutable_value()(c, c) = 1.0;
  const Tensor y = conv1d(x, k, Tensor(Shape{3}), 1, Padding::same);
  EXPECT_EQ(y.value(), x.value());
}

TEST(Conv1d, AveragingValid) {
  const Tensor x = Tensor::from_data({4, 1}, std::vector<double>{1, 2, 3, 4});
  const Tensor k = Tensor::from_data({3, 1, 1}, std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3});
  const Tensor y = conv1d(x, k, Tensor(), 1, Padding::valid);
  ASSERT_EQ(y.shape(), (Shape{2, 1}));
  EXPECT_NEAR(y.value()(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(y.value()(1, 0), 3.0, 1e-15);
}

TEST(Conv1d, GroupedMatchesLoopOracleExactly) {
  const Tensor x = uniform({8, 2}, 3);
  const Tensor k = uniform({3, 1, 4}, 4);
  const Tensor b = uniform({4}, 5);
  for (auto pad : {Padding::same, Padding::valid}) {
    const RowMatrix got = conv1d(x, k, b, 2, pad).value();
    const RowMatrix want = conv_oracle(x.value(), k, b.value(), 2, pad == Padding::same);
    ASSERT_EQ(got.rows(), want.rows());
    EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Conv1d, DenseAndDepthwiseMatchOracle) {
  const Tensor x = uniform({12, 4}, 6);
  const Tensor dense = uniform({5, 4, 3}, 7);
  EXPECT_LT((conv1d(x, dense, Tensor(Shape{3}), 1).value() -
             conv_oracle(x.value(), dense, RowMatrix::Zero(1, 3), 1, true))
                .cwiseAbs()
                .maxCoeff(),
            1e-14);
  const Tensor depth = uniform({15, 1, 4}, 8);
  EXPECT_LT((conv1d(x, depth, Tensor(Shape{4}), 4).value() -
             conv_oracle(x.value(), depth, RowMatrix::Zero(1, 4), 4, true))
                .cwiseAbs()
                .maxCoeff(),
            1e-14);
}

TEST(Conv1d, BatchItemsArePaddedIndependently) {
  const Tensor x = uniform({3, 6, 2}, 9);
  const Tensor k = uniform({3, 2, 2}, 10);
  const RowMatrix batched = conv1d(x, k, Tensor()).value();
  for (Index b = 0; b < 3; ++b) {
    const Tensor item(Shape{6, 2}, x.value().middleRows(b * 6, 6));
    EXPECT_LT((batched.middleRows(b * 6, 6) - conv1d(item, k, Tensor()).value()).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Conv1d, ShapeErrors) {
  const Tensor x = uniform({8, 3}, 11);
  EXPECT_THROW(conv1d(x, uniform({3, 2, 2}, 12), Tensor()), std::invalid_argument);
  EXPECT_THROW(conv1d(x, uniform({3, 1, 3}, 13), Tensor(), 2), std::invalid_argument);
  EXPECT_THROW(conv1d(x, uniform({4, 3, 3}, 14), Tensor(), 1, Padding::same), std::invalid_argument);
  EXPECT_THROW(conv1d(x, uniform({3, 3, 3}, 15), Tensor(Shape{2})), std::invalid_argument);
}

TEST(LayerNorm, ConstantRowGivesZeros) {
  const Tensor x = Tensor::from_data({1, 4}, std::vector<double>{3, 3, 3, 3});
  Tensor gain(Shape{4}, RowMatrix::Ones(1, 4));
  const Tensor y = layer_norm(x, gain, Tensor(Shape{4}));
  EXPECT_TRUE(y.value().isZero(0));
}

TEST(LayerNorm, ZeroGainGivesShift) {
  const Tensor x = uniform({5, 4}, 16);
  const Tensor shift = uniform({4}, 17);
  const Tensor y = layer_norm(x, Tensor(Shape{4}), shift);
  for (Index r = 0; r < 5; ++r) EXPECT_EQ(y.value().row(r), shift.value().row(0));
}

TEST(LayerNorm, NormalizedStatistics) {
  const Tensor x = uniform({1, 4}, 18);
  Tensor gain(Shape{4}, RowMatrix::Ones(1, 4));
  const RowMatrix y = layer_norm(x, gain, Tensor(Shape{4})).value();
  const double var_x = (x.value().array() - x.value().mean()).square().mean();
  EXPECT_LT(std::abs(y.mean()), 1e-12);
  const double var_y = (y.array() - y.mean()).square().mean();
  // The eps term shrinks the variance by var / (var + eps).
  EXPECT_NEAR(var_y, var_x / (var_x + 1e-5), 1e-9);
}

TEST(Reductions, L2NormAndMean) {
  const Tensor x = Tensor::from_data({2, 2}, std::vector<double>{3, 0, 0, 4});
  EXPECT_DOUBLE_EQ(l2_norm(x).item(), 5.0);
  EXPECT_DOUBLE_EQ(mean(x).item(), 1.75);
  Tensor zero(Shape{3}, true);
  backward(l2_norm(zero));
  EXPECT_TRUE(zero.grad().isZero(0));
}

TEST(Broadcast, ShapeMismatchThrows) {
  EXPECT_THROW(add(uniform({2, 3}, 1), uniform({3, 2}, 2)), std::invalid_argument);
  EXPECT_THROW(add_bias(uniform({2, 3}, 1), uniform({2}, 2)), std::invalid_argument);
  EXPECT_THROW(matmul(uniform({2, 3}, 1), uniform({2, 3}, 2)), std::invalid_argument);
  EXPECT_THROW(reshape(uniform({2, 3}, 1), {4}), std::invalid_argument);
}
