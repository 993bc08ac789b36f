// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "entroprune/dataset.hpp"
#include "entroprune/errors.hpp"
#include "entroprune/train.hpp"

namespace entroprune {
namespace {

ViTConfig small_config() {
  ViTConfig c;
  c.image_h = c.image_w = 8;
  c.embed_dim = 16;
  c.depth = 2;
  c.heads = 2;
  c.num_classes = 4;
  c.seed = 5;
  return c;
}

LabeledDataset small_data(std::uint64_t seed = 1) {
  SynthSpec s;
  s.num_classes = 4;
  s.samples_per_class = 16;
  s.image_h = s.image_w = 8;
  s.noise = 0.1;
  s.seed = seed;
  return synthesize(s, "train");
}

TEST(Schedule, WarmupThenCosineToFloor) {
  AdamWConfig c;
  c.learning_rate = 1.0;
  c.min_learning_rate = 0.1;
  c.warmup_steps = 4;
  EXPECT_DOUBLE_EQ(cosine_learning_rate(c, 0, 14), 0.25);
  EXPECT_DOUBLE_EQ(cosine_learning_rate(c, 3, 14), 1.0);
  EXPECT_DOUBLE_EQ(cosine_learning_rate(c, 4, 14), 1.0);
  EXPECT_NEAR(cosine_learning_rate(c, 9, 14), 0.55, 1e-12);
  EXPECT_DOUBLE_EQ(cosine_learning_rate(c, 14, 14), 0.1);
  EXPECT_DOUBLE_EQ(cosine_learning_rate(c, 100, 14), 0.1);
}

// Two steps worked out by hand from the Adam recurrences.
TEST(AdamW, MatchesHandComputedSteps) {
  Tensor<double> w({2, 1}, {1.0, -2.0}, true);
  Tensor<double> b({1}, {0.5}, true);
  AdamWConfig c;
  c.weight_decay = 0.1;
  c.epsilon = 0.0;
  AdamW<double> opt({{"w", w}, {"b", b}}, c);
  const double lr = 0.01;
  w.mutable_grad()[0] = 2.0;
  w.mutable_grad()[1] = -1.0;
  b.mutable_grad()[0] = 3.0;
  opt.step(lr);
  // Step 1: m_hat = g, v_hat = g^2, so the Adam term is lr * sign(g).
  EXPECT_NEAR(w.data()[0], 1.0 - lr * 0.1 * 1.0 - lr, 1e-15);
  EXPECT_NEAR(w.data()[1], -2.0 - lr * 0.1 * -2.0 + lr, 1e-15);
  EXPECT_NEAR(b.data()[0], 0.5 - lr, 1e-15);  // vectors are not decayed
  const double w0 = w.data()[0];
  w.mutable_grad()[0] = -1.0;
  opt.step(lr);
  const double m = 0.9 * 0.1 * 2.0 + 0.1 * -1.0, v = 0.999 * 0.001 * 4.0 + 0.001 * 1.0;
  const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(w.data()[0], w0 - lr * 0.1 * w0 - lr * m_hat / std::sqrt(v_hat), 1e-14);
}

TEST(Training, LossFallsAndRunsAreReproducible) {
  const auto data = small_data();
  TrainConfig tc;
  tc.epochs = 6;
  tc.batch_size = 16;
  tc.optimizer.learning_rate = 3e-3;
  ViTModel<double> a(small_config()), b(small_config());
  const auto la = train_model(a, tc, data);
  const auto lb = train_model(b, tc, data);
  ASSERT_EQ(la.steps.size(), 24u);
  double first = 0, last = 0;
  for (int i = 0; i < 4; ++i) {
    first += la.steps[static_cast<std::size_t>(i)].loss;
    last += la.steps[la.steps.size() - 1 - static_cast<std::size_t>(i)].loss;
  }
  EXPECT_LT(last, first);
  const auto pa = a.named_parameters(), pb = b.named_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    ASSERT_EQ(pa[i].name, pb[i].name);
    EXPECT_TRUE(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin()))
        << pa[i].name;
  }
  for (std::size_t i = 0; i < la.steps.size(); ++i) EXPECT_EQ(la.steps[i].loss, lb.steps[i].loss);
}

TEST(Training, LogRoundTripsThroughCsv) {
  TrainLog log;
  log.steps.push_back({0, 2.302585092994046, 1.0, 0.125, 3.5, 1e-3});
  log.steps.push_back({1, 1.0 / 3.0, 0.5, 0.0, 2.0 / 7.0, 9.99e-4});
  const auto back = TrainLog::from_csv(log.to_csv());
  ASSERT_EQ(back.steps.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.steps[i].step, log.steps[i].step);
    EXPECT_EQ(back.steps[i].loss, log.steps[i].loss);
    EXPECT_EQ(back.steps[i].mask, log.steps[i].mask);
    EXPECT_EQ(back.steps[i].grad_norm_attn, log.steps[i].grad_norm_attn);
    EXPECT_EQ(back.steps[i].grad_norm_other, log.steps[i].grad_norm_other);
    EXPECT_EQ(back.steps[i].lr, log.steps[i].lr);
  }
  EXPECT_THROW(TrainLog::from_csv("step,loss\n"), DataError);
}

TEST(Training, NonFiniteLossAborts) {
  ViTModel<double> model(small_config());
  model.named_parameters()[0].tensor.mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 64;
  EXPECT_THROW(train_model(model, tc, small_data()), NumericError);
}

TEST(Training, RejectsBadConfigAndShapes) {
  ViTModel<double> model(small_config());
  TrainConfig tc;
  tc.batch_size = 0;
  EXPECT_THROW(train_model(model, tc, small_data()), ConfigError);
  tc = {};
  tc.optimizer.learning_rate = 0.0;
  EXPECT_THROW(train_model(model, tc, small_data()), ConfigError);
  SynthSpec s;
  s.num_classes = 4;
  s.samples_per_class = 2;
  s.image_h = s.image_w = 12;
  EXPECT_THROW(train_model(model, TrainConfig{}, synthesize(s, "x")), DimensionError);
}

TEST(Evaluate, TopKTiesFavourLowerClass) {
  Tensor<double> logits({2, 3}, {1.0, 1.0, 0.0, 0.0, 2.0, 2.0});
  EXPECT_EQ(topk_hits(logits, {0, 1}, 1), 2);
  EXPECT_EQ(topk_hits(logits, {1, 2}, 1), 0);
  EXPECT_EQ(topk_hits(logits, {2, 0}, 2), 0);
  EXPECT_EQ(topk_hits(logits, {2, 0}, 3), 2);
}

TEST(Evaluate, TopFiveDominatesTopOneAndIsDeterministic) {
  const auto data = small_data(9);
  ViTModel<float> model(small_config());
  const auto a = evaluate(model, data, 7);
  const auto b = evaluate(model, data, 64);
  EXPECT_GE(a.top5, a.top1);
  EXPECT_EQ(a.top1, b.top1);
  EXPECT_EQ(a.top5, b.top5);
  EXPECT_EQ(a.samples, 64);
  EXPECT_EQ(a.top5, 1.0);  // 4 classes
}

}  // namespace
}  // namespace entroprune
