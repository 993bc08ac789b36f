// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "entroprune/entropy.hpp"
#include "entroprune/errors.hpp"
#include "entroprune/nose.hpp"
#include "entroprune/train.hpp"

namespace entroprune {
namespace {

namespace fs = std::filesystem;

ViTConfig toy(int depth, std::uint64_t seed = 31) {
  ViTConfig c;
  c.image_h = c.image_w = 8;
  c.embed_dim = 12;
  c.depth = depth;
  c.heads = 2;
  c.num_classes = 4;
  c.seed = seed;
  return c;
}

LabeledDataset data(int per_class = 12, std::uint64_t seed = 2) {
  SynthSpec s;
  s.num_classes = 4;
  s.samples_per_class = per_class;
  s.image_h = s.image_w = 8;
  s.seed = seed;
  return synthesize(s, "probe");
}

// Independent straight-line H_sigma of the last block's f_mlp with `masked`
// attention layers replaced by identity.
double direct_target_entropy(const ViTModel<double>& model, const LabeledDataset& d, const Probe& probe,
                             const std::set<int>& masked) {
  const LayerId target{model.depth() - 1, LayerKind::kMlp};
  NoGradGuard guard;
  const auto r = model.forward(d.images_at<double>(probe.indices), {{target}, masked});
  const auto& f = r.captures.at(target);
  const std::int64_t ch = f.dim(2), n = f.numel() / ch;
  double h = 0.0;
  for (std::int64_t j = 0; j < ch; ++j) {
    double mean = 0.0, ss = 0.0;
    for (std::int64_t i = 0; i < n; ++i) mean += f.data()[static_cast<std::size_t>(i * ch + j)];
    mean /= static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) ss += std::pow(f.data()[static_cast<std::size_t>(i * ch + j)] - mean, 2);
    h += std::log(std::max(std::sqrt(ss / static_cast<double>(n)), kEntropyEps));
  }
  return h;
}

// Exhaustive greedy scan written without the library's selector.
std::vector<int> exhaustive_greedy(const ViTModel<double>& model, const LabeledDataset& d, const Probe& probe, int n) {
  const double base = direct_target_entropy(model, d, probe, {});
  std::set<int> chosen;
  std::vector<int> order;
  for (int step = 0; step < n; ++step) {
    int best = -1;
    double best_te = 0.0;
    for (int i = 0; i < model.depth(); ++i) {
      if (chosen.count(i)) continue;
      auto s = chosen;
      s.insert(i);
      const double te = std::abs(base - direct_target_entropy(model, d, probe, s));
      if (best < 0 || te < best_te) {
        best = i;
        best_te = te;
      }
    }
    chosen.insert(best);
    order.push_back(best);
  }
  return order;
}

TEST(TransferEntropy, EmptySetIsExactlyZero) {
  const ViTModel<double> model(toy(3));
  const auto d = data();
  const auto probe = make_probe(d, 20, 8, 1);
  EXPECT_EQ(transfer_entropy(model, {}, d, probe).te, 0.0);
  EXPECT_EQ(transfer_entropy(model, {}, d, probe, TeTarget::kLogits).te, 0.0);
}

TEST(TransferEntropy, SilentAttentionBranchTransfersNothing) {
  ViTModel<double> model(toy(3));
  auto& attn = *model.block(1).attention;
  for (auto& v : attn.proj_weight.mutable_data()) v = 0.0;
  for (auto& v : attn.proj_bias.mutable_data()) v = 0.0;
  const auto d = data();
  const auto probe = make_probe(d, 20, 8, 1);
  const auto m = transfer_entropy(model, {1}, d, probe);
  EXPECT_LT(m.te, 1e-6);
  EXPECT_GT(transfer_entropy(model, {0}, d, probe).te, 1e-6);
}

TEST(TransferEntropy, SingletonsMatchDumpOracle) {
  const ViTModel<double> model(toy(3));
  const auto d = data();
  const auto probe = make_probe(d, 24, 5, 1);
  const auto path = fs::temp_directory_path() / ("te_dump_" + std::to_string(::getpid()) + ".eact");
  const LayerId target{2, LayerKind::kMlp};
  auto dumped_entropy = [&](const std::set<int>& masked) {
    dump_activations(model, d, probe, {target}, path, masked);
    return layer_entropy(channel_std(load_activations<double>(path).features.at(target)));
  };
  const double base = dumped_entropy({});
  for (int i = 0; i < 3; ++i) {
    const auto m = transfer_entropy(model, {i}, d, probe);
    EXPECT_NEAR(m.te, std::abs(base - dumped_entropy({i})), 1e-8) << "layer " << i;
    EXPECT_NEAR(m.baseline, base, 1e-8);
  }
  fs::remove(path);
}

TEST(Nose, MatchesExhaustiveReimplementationAtDepthFour) {
  const ViTModel<double> model(toy(4, 77));
  const auto d = data(16, 5);
  const auto probe = make_probe(d, 40, 16, 3);
  const auto s = nose_select(model, 4, d, probe);
  EXPECT_EQ(s.selected, exhaustive_greedy(model, d, probe, 4));
}

TEST(Nose, TraceIsStepLocallyOptimalAndSetsPartition) {
  const ViTModel<double> model(toy(5));
  const auto d = data();
  const auto s = nose_select(model, 3, d, make_probe(d, 30, 10, 2));
  ASSERT_EQ(s.trace.size(), 3u);
  std::set<int> so_far;
  for (std::size_t k = 0; k < s.trace.size(); ++k) {
    const auto& step = s.trace[k];
    EXPECT_EQ(step.te.size(), 5 - k);
    for (int prior : so_far) EXPECT_FALSE(step.te.count(prior));
    for (const auto& [i, v] : step.te) {
      EXPECT_LE(step.te.at(step.chosen), v);
      if (v == step.te.at(step.chosen)) EXPECT_LE(step.chosen, i);
      EXPECT_GE(v, 0.0);
    }
    so_far.insert(step.chosen);
  }
  EXPECT_EQ(s.selected_set(), so_far);
  for (int i : s.candidates) EXPECT_FALSE(so_far.count(i));
  EXPECT_EQ(s.candidates.size() + s.selected.size(), 5u);
}

TEST(Nose, FullDepthIsAPermutationAndTooManyThrows) {
  const ViTModel<double> model(toy(3));
  const auto d = data();
  const auto probe = make_probe(d, 12, 12, 2);
  auto s = nose_select(model, 3, d, probe);
  std::sort(s.selected.begin(), s.selected.end());
  EXPECT_EQ(s.selected, (std::vector<int>{0, 1, 2}));
  EXPECT_THROW(nose_select(model, 4, d, probe), std::invalid_argument);
}

TEST(Nose, LeavesModelUntouched) {
  const ViTModel<double> model(toy(3));
  const ViTModel<double> before = model;
  const auto d = data();
  nose_select(model, 2, d, make_probe(d, 12, 6, 2));
  const auto a = model.named_parameters(), b = before.named_parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin()));
  }
}

TEST(Nose, SelectionReportRoundTrips) {
  const ViTModel<double> model(toy(3));
  const auto d = data();
  const auto s = nose_select(model, 2, d, make_probe(d, 12, 6, 2));
  const auto back = SelectionState::from_json(s.to_json());
  EXPECT_EQ(back.method, "nose");
  EXPECT_EQ(back.selected, s.selected);
  EXPECT_EQ(back.candidates, s.candidates);
  EXPECT_EQ(back.baseline, s.baseline);
  EXPECT_EQ(back.probe.indices, s.probe.indices);
  ASSERT_EQ(back.trace.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(back.trace[k].chosen, s.trace[k].chosen);
    EXPECT_EQ(back.trace[k].te, s.trace[k].te);
  }
  EXPECT_THROW(SelectionState::from_json("{\"selected\": 3}"), DataError);
}

TEST(Baselines, FirstNAndRemovalCount) {
  EXPECT_EQ(first_n_select(3, 12), (std::vector<int>{0, 1, 2}));
  EXPECT_THROW(first_n_select(13, 12), std::invalid_argument);
  EXPECT_EQ(removal_count(0.4, 12), 5);
  EXPECT_EQ(removal_count(0.5, 12), 6);
  EXPECT_EQ(removal_count(0.4, 6), 2);
  EXPECT_THROW(removal_count(0.0, 12), ConfigError);
  EXPECT_THROW(removal_count(1.5, 12), ConfigError);
}

TEST(Baselines, RandomIsSeededAndUniform) {
  EXPECT_EQ(random_select(12, 5, 4), random_select(12, 5, 4));
  const int draws = 10000, depth = 12, n = 5;
  std::vector<int> hits(depth, 0);
  for (int k = 0; k < draws; ++k) {
    const auto s = random_select(depth, n, static_cast<std::uint64_t>(k));
    ASSERT_EQ(std::set<int>(s.begin(), s.end()).size(), 5u);
    for (int i : s) ++hits[i];
  }
  const double p = static_cast<double>(n) / depth, sd = std::sqrt(draws * p * (1 - p));
  for (int i = 0; i < depth; ++i) EXPECT_NEAR(hits[i], draws * p, 3 * sd) << "index " << i;
}

TEST(RemainedPerformance, EmptyMaskEqualsEvaluation) {
  const ViTModel<float> model(toy(3));
  const auto d = data(25, 7);
  EXPECT_EQ(remained_performance(model, {}, d), evaluate(model, d).top1);
}

TEST(RemainedPerformance, UntrainedModelSitsNearChance) {
  ViTConfig c = toy(3);
  c.num_classes = 10;
  SynthSpec s;
  s.samples_per_class = 100;
  s.image_h = s.image_w = 8;
  const auto d = synthesize(s, "eval");
  const ViTModel<float> model(c);
  const double sd = std::sqrt(0.1 * 0.9 / 1000.0);
  for (const std::set<int>& m : {std::set<int>{}, std::set<int>{0, 2}}) {
    EXPECT_NEAR(remained_performance(model, m, d), 0.1, 3 * sd);
  }
}

TEST(RemainedPerformance, MatchesDumpedLogits) {
  const ViTModel<double> model(toy(3));
  const auto d = data(10, 3);
  const auto probe = make_probe(d, d.size(), 9, 0);
  const auto path = fs::temp_directory_path() / ("rp_dump_" + std::to_string(::getpid()) + ".eact");
  dump_activations(model, d, probe, {}, path, {1});
  const auto logits = load_activations<double>(path).logits;
  fs::remove(path);
  const auto hits = topk_hits(logits, d.labels_at(probe.indices), 1);
  EXPECT_DOUBLE_EQ(remained_performance(model, {1}, d), static_cast<double>(hits) / d.size());
}

TEST(MaskingStudy, DeterministicWithEmptyCountRow) {
  const ViTModel<float> model(toy(4));
  const auto d = data();
  const auto probe = make_probe(d, 16, 8, 1);
  const auto a = masking_study(model, {0, 1, 2}, 3, 9, d, d, probe);
  const auto b = masking_study(model, {0, 1, 2}, 3, 9, d, d, probe);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].accuracy_mean, b[i].accuracy_mean);
    EXPECT_EQ(a[i].te_mean, b[i].te_mean);
  }
  EXPECT_EQ(a[0].accuracy_var, 0.0);
  EXPECT_EQ(a[0].te_mean, 0.0);
  EXPECT_EQ(a[0].te_var, 0.0);
  EXPECT_THROW(masking_study(model, {1}, 1, 9, d, d, probe), std::invalid_argument);
  const auto csv = masking_table_csv(a);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "count,repeats,accuracy_mean,accuracy_var,te_mean,te_var");
}

TEST(Spearman, RanksWithTies) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
  // Ranks x = (1, 2.5, 2.5, 4), y = (1, 2, 3, 4): Pearson of the ranks.
  EXPECT_NEAR(spearman({1, 2, 2, 5}, {1, 2, 3, 4}), 4.5 / std::sqrt(4.5 * 5.0), 1e-12);
  EXPECT_THROW(spearman({1}, {1}), std::invalid_argument);
}

}  // namespace
}  // namespace entroprune
