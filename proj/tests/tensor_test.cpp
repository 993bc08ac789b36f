// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "entroprune/tensor.hpp"
#include "test_support.hpp"

namespace entroprune {
namespace {

using testing::gradient_check;
using testing::random_tensor;
using testing::weighted_sum;
using TD = Tensor<double>;
using Inputs = std::vector<TD>;

constexpr double kOpGradTol = 1e-4;

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  Rng rng(1);
  TD eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto x = random_tensor({3, 3}, rng, 1.0, false);
  auto y = matmul(eye, x);
  for (int i = 0; i < 9; ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Matmul, HandArithmetic) {
  TD a({2, 2}, {1, 2, 3, 4});
  TD b({2, 1}, {0, 1});
  auto c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c.data()[0], 2);
  EXPECT_EQ(c.data()[1], 4);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  Inputs in{random_tensor({5, 7}, rng), random_tensor({7, 3}, rng)};
  EXPECT_LT(gradient_check(in, [](const Inputs& t) { return weighted_sum(matmul(t[0], t[1])); }), kOpGradTol);
}

TEST(Matmul, InnerExtentMismatchThrows) {
  EXPECT_THROW(matmul(TD::zeros({2, 3}), TD::zeros({2, 3})), DimensionError);
}

TEST(Softmax, UniformInputGivesUniformOutput) {
  auto y = softmax(TD({3}, {0, 0, 0}), 0);
  for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  auto y = softmax(TD({2}, {1000, 1000}), 0);
  EXPECT_EQ(y.data()[0], 0.5);
  EXPECT_EQ(y.data()[1], 0.5);
}

TEST(Softmax, MatchesDirectFormula) {
  auto y = softmax(TD({3}, {1, 2, 3}), 0);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y.data()[i], std::exp(i + 1.0) / z, 1e-12);
}

TEST(Softmax, RowsSumToOneOnEveryAxis) {
  Rng rng(3);
  auto x = random_tensor({4, 5, 6}, rng, 3.0, false);
  for (int axis = 0; axis < 3; ++axis) {
    auto y = softmax(x, axis);
    auto s = reduce_mean(y, axis);
    const double len = static_cast<double>(x.dim(axis));
    for (double v : s.data()) EXPECT_NEAR(v * len, 1.0, 1e-6);
    for (double v : y.data()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Softmax, GradientOnInnerAndOuterAxes) {
  Rng rng(4);
  for (int axis : {0, 1, -1}) {
    Inputs in{random_tensor({3, 4, 2}, rng)};
    EXPECT_LT(gradient_check(in, [axis](const Inputs& t) { return weighted_sum(softmax(t[0], axis)); }), kOpGradTol)
        << "axis " << axis;
  }
}

TEST(LayerNorm, ConstantRowNormalisesToZero) {
  auto y = layer_norm(TD::full({2, 4}, 3.5), TD::full({4}, 1.0), TD::zeros({4}), 1e-6);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, ScaleInvariant) {
  Rng rng(5);
  auto x = random_tensor({6, 8}, rng, 1.0, false);
  auto g = random_tensor({8}, rng, 1.0, false);
  auto b = random_tensor({8}, rng, 1.0, false);
  auto y1 = layer_norm(x, g, b, 1e-12);
  auto y2 = layer_norm(scale(x, 2.0), g, b, 1e-12);
  for (std::size_t i = 0; i < y1.data().size(); ++i) {
    EXPECT_LT(std::abs(y1.data()[i] - y2.data()[i]), 1e-6 * std::max(1.0, std::abs(y1.data()[i])));
  }
}

TEST(LayerNorm, PerPositionMomentsBeforeAffine) {
  Rng rng(6);
  auto x = random_tensor({5, 16}, rng, 4.0, false);
  auto y = layer_norm(x, TD::full({16}, 1.0), TD::zeros({16}), 1e-12);
  auto mean = reduce_mean(y, -1);
  auto var = reduce_var(y, -1);
  for (double m : mean.data()) EXPECT_LT(std::abs(m), 1e-6);
  for (double v : var.data()) EXPECT_NEAR(v, 1.0, 1e-4);
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  Inputs in{random_tensor({3, 6}, rng), random_tensor({6}, rng), random_tensor({6}, rng)};
  EXPECT_LT(gradient_check(in, [](const Inputs& t) { return weighted_sum(layer_norm(t[0], t[1], t[2], 1e-6)); }),
            kOpGradTol);
}

TEST(Gelu, ZeroMapsToZero) { EXPECT_EQ(gelu(TD::scalar(0.0)).item(), 0.0); }

TEST(Gelu, TanhApproximationValue) {
  // 0.5 * x * (1 + tanh(sqrt(2/pi) * (x + 0.044715 x^3))) at x = 1
  const double expected = 0.5 * (1.0 + std::tanh(std::sqrt(2.0 / std::numbers::pi) * 1.044715));
  EXPECT_NEAR(gelu(TD::scalar(1.0)).item(), expected, 1e-15);
}

TEST(CrossEntropy, ConfidentCorrectLogitsGiveNearZeroLoss) {
  TD logits({2, 3}, {50, 0, 0, 0, 0, 50});
  const int labels[] = {0, 2};
  EXPECT_LT(cross_entropy(logits, labels).item(), 1e-12);
}

TEST(CrossEntropy, UniformLogitsGiveLogClassCount) {
  TD logits = TD::zeros({4, 7});
  const int labels[] = {0, 3, 6, 2};
  EXPECT_NEAR(cross_entropy(logits, labels).item(), std::log(7.0), 1e-12);
}

TEST(CrossEntropy, LabelOutOfRangeThrows) {
  const int labels[] = {5};
  EXPECT_THROW(cross_entropy(TD::zeros({1, 3}), labels), DimensionError);
}

TEST(Backward, SquareHasAnalyticGradient) {
  TD x({1}, {3.0}, true);
  backward(sum(mul(x, x)));
  ASSERT_TRUE(x.has_grad());
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Backward, DetachedInputReceivesNoGradient) {
  TD x({2}, {1.0, 2.0}, true);
  TD c({2}, {3.0, 4.0}, false);
  backward(sum(mul(x, c)));
  EXPECT_TRUE(x.has_grad());
  EXPECT_FALSE(c.has_grad());
  auto d = x.detach();
  EXPECT_FALSE(d.requires_grad());
}

TEST(Backward, NonScalarLossThrows) {
  TD x({2}, {1.0, 2.0}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), DimensionError);
}

TEST(Backward, NoGradGuardStopsRecording) {
  TD x({2}, {1.0, 2.0}, true);
  NoGradGuard guard;
  auto y = sum(x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_THROW(backward(y), std::invalid_argument);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  TD x({1}, {2.0}, true);
  auto y = mul(x, x);
  backward(sum(add(y, y)));  // 2 x^2 -> 4x
  EXPECT_EQ(x.grad()[0], 8.0);
}

TEST(Tape, ExecutionOrderIsTopological) {
  Rng rng(8);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  auto loss = sum(gelu(add_bias(matmul(a, b), random_tensor({2}, rng))));
  const auto entries = Tape<double>::record(loss).entries();
  ASSERT_EQ(entries.size(), 4u);
  EXPECT_EQ(entries.front().op, "matmul");
  EXPECT_EQ(entries.back().op, "sum");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i) EXPECT_LT(entries[i - 1].seq, entries[i].seq);
    for (auto in : entries[i].input_seqs) EXPECT_LT(in, entries[i].seq);
  }
}

TEST(Determinism, IdenticalInputsGiveBitIdenticalOutputs) {
  auto run = [] {
    Rng rng(9);
    auto a = random_tensor({7, 5}, rng);
    auto b = random_tensor({5, 9}, rng);
    return softmax(matmul(a, b), -1);
  };
  auto y1 = run();
  auto y2 = run();
  for (std::size_t i = 0; i < y1.data().size(); ++i) EXPECT_EQ(y1.data()[i], y2.data()[i]);
}

// Every remaining differentiable op against central differences.
TEST(GradientSuite, ElementwiseOps) {
  Rng rng(10);
  Inputs in{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)};
  EXPECT_LT(gradient_check(in, [](const Inputs& t) { return weighted_sum(add(t[0], t[1])); }), kOpGradTol);
  EXPECT_LT(gradient_check(in, [](const Inputs& t) { return weighted_sum(sub(t[0], t[1])); }), kOpGradTol);
  EXPECT_LT(gradient_check(in, [](const Inputs& t) { return weighted_sum(mul(t[0], t[1])); }), kOpGradTol);
  EXPECT_LT(gradient_check(in, [](const Inputs& t) { return weighted_sum(scale(t[0], -1.7)); }), kOpGradTol);
  EXPECT_LT(gradient_check(in, [](const Inputs& t) { return weighted_sum(gelu(t[0])); }), kOpGradTol);
}

TEST(GradientSuite, BroadcastAndReductions) {
  Rng rng(11);
  Inputs in{random_tensor({2, 3, 4}, rng), random_tensor({3, 4}, rng)};
  EXPECT_LT(gradient_check(in, [](const Inputs& t) { return weighted_sum(add_bias(t[0], t[1])); }), kOpGradTol);
  for (int axis : {0, 1, 2}) {
    Inputs x{random_tensor({2, 3, 4}, rng)};
    EXPECT_LT(gradient_check(x, [axis](const Inputs& t) { return weighted_sum(reduce_mean(t[0], axis)); }),
              kOpGradTol);
    EXPECT_LT(gradient_check(x, [axis](const Inputs& t) { return weighted_sum(reduce_var(t[0], axis)); }),
              kOpGradTol);
  }
}

TEST(GradientSuite, LayoutOps) {
  Rng rng(12);
  Inputs x{random_tensor({2, 3, 4}, rng)};
  EXPECT_LT(gradient_check(x, [](const Inputs& t) { return weighted_sum(transpose(t[0], 0, 2)); }), kOpGradTol);
  EXPECT_LT(gradient_check(x, [](const Inputs& t) { return weighted_sum(transpose(t[0], 1, 2)); }), kOpGradTol);
  EXPECT_LT(gradient_check(x, [](const Inputs& t) { return weighted_sum(reshape(t[0], {6, 4})); }), kOpGradTol);
  EXPECT_LT(gradient_check(x, [](const Inputs& t) { return weighted_sum(slice(t[0], 1, 1, 2)); }), kOpGradTol);
  EXPECT_LT(gradient_check(x, [](const Inputs& t) { return weighted_sum(expand_leading(t[0], 3)); }), kOpGradTol);
  Inputs pair{random_tensor({2, 1, 4}, rng), random_tensor({2, 3, 4}, rng)};
  EXPECT_LT(gradient_check(pair, [](const Inputs& t) { return weighted_sum(concat<double>({t[0], t[1]}, 1)); }),
            kOpGradTol);
}

TEST(GradientSuite, BatchedMatmulAndLoss) {
  Rng rng(13);
  Inputs in{random_tensor({2, 3, 4, 5}, rng), random_tensor({2, 3, 5, 2}, rng)};
  EXPECT_LT(gradient_check(in, [](const Inputs& t) { return weighted_sum(bmm(t[0], t[1])); }), kOpGradTol);
  Inputs logits{random_tensor({4, 5}, rng)};
  const std::vector<int> labels{0, 4, 2, 2};
  EXPECT_LT(gradient_check(logits, [&](const Inputs& t) { return cross_entropy(t[0], labels); }), kOpGradTol);
}

TEST(Layout, TransposeMovesElements) {
  TD x({2, 3}, {0, 1, 2, 3, 4, 5});
  auto y = transpose(x, 0, 1);
  EXPECT_EQ(y.shape(), (Shape{3, 2}));
  const std::vector<double> expected{0, 3, 1, 4, 2, 5};
  for (int i = 0; i < 6; ++i) EXPECT_EQ(y.data()[i], expected[i]);
}

TEST(Layout, ReshapeRejectsWrongElementCount) {
  EXPECT_THROW(reshape(TD::zeros({2, 3}), {4, 2}), DimensionError);
}

TEST(Layout, AddBiasRejectsNonSuffixShape) {
  EXPECT_THROW(add_bias(TD::zeros({2, 3}), TD::zeros({2})), DimensionError);
}

}  // namespace
}  // namespace entroprune
