// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <cstring>
#include <fstream>

#include "entroprune/errors.hpp"
#include "entroprune/serialization.hpp"
#include "entroprune/vit.hpp"
#include "test_support.hpp"

namespace entroprune {
namespace {

using testing::random_tensor;

ViTConfig tiny_config() {
  ViTConfig c;
  c.image_h = c.image_w = 8;
  c.patch_h = c.patch_w = 4;
  c.channels = 2;
  c.embed_dim = 8;
  c.heads = 2;
  c.depth = 3;
  c.mlp_ratio = 2.0;
  c.num_classes = 5;
  c.seed = 11;
  return c;
}

Tensor<double> random_images(const ViTConfig& c, int batch, std::uint64_t seed) {
  Rng rng(seed);
  return random_tensor({batch, c.image_h, c.image_w, c.channels}, rng, 1.0, false);
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// Direct loop evaluation of Attn(LN1(x)) for one block.
std::vector<double> naive_attention(const ViTModel<double>& model, const Tensor<double>& x, int b) {
  const auto& w = *model.block(b).attention;
  const int batch = static_cast<int>(x.dim(0)), tokens = static_cast<int>(x.dim(1));
  const int d = model.config().embed_dim, heads = model.config().heads, hd = d / heads;
  auto at = [](const Tensor<double>& t, std::int64_t i) { return t.data()[static_cast<std::size_t>(i)]; };
  std::vector<double> out(static_cast<std::size_t>(batch * tokens * d), 0.0);
  for (int n = 0; n < batch; ++n) {
    std::vector<std::vector<double>> h(tokens, std::vector<double>(d));
    for (int t = 0; t < tokens; ++t) {
      double mean = 0, var = 0;
      for (int j = 0; j < d; ++j) mean += at(x, (n * tokens + t) * d + j);
      mean /= d;
      for (int j = 0; j < d; ++j) var += std::pow(at(x, (n * tokens + t) * d + j) - mean, 2);
      var /= d;
      for (int j = 0; j < d; ++j) {
        h[t][j] = (at(x, (n * tokens + t) * d + j) - mean) / std::sqrt(var + norm_eps<double>()) *
                      at(w.norm_weight, j) + at(w.norm_bias, j);
      }
    }
    std::vector<std::vector<double>> q(tokens, std::vector<double>(3 * d));
    for (int t = 0; t < tokens; ++t) {
      for (int o = 0; o < 3 * d; ++o) {
        double s = at(w.qkv_bias, o);
        for (int j = 0; j < d; ++j) s += h[t][j] * at(w.qkv_weight, j * 3 * d + o);
        q[t][o] = s;
      }
    }
    std::vector<std::vector<double>> ctx(tokens, std::vector<double>(d, 0.0));
    for (int hh = 0; hh < heads; ++hh) {
      for (int t = 0; t < tokens; ++t) {
        std::vector<double> logits(tokens);
        double mx = -1e300;
        for (int u = 0; u < tokens; ++u) {
          double s = 0;
          for (int k = 0; k < hd; ++k) s += q[t][hh * hd + k] * q[u][d + hh * hd + k];
          logits[u] = s / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, logits[u]);
        }
        double z = 0;
        for (auto& l : logits) z += (l = std::exp(l - mx));
        for (int u = 0; u < tokens; ++u) {
          for (int k = 0; k < hd; ++k) ctx[t][hh * hd + k] += logits[u] / z * q[u][2 * d + hh * hd + k];
        }
      }
    }
    for (int t = 0; t < tokens; ++t) {
      for (int o = 0; o < d; ++o) {
        double s = at(w.proj_bias, o);
        for (int j = 0; j < d; ++j) s += ctx[t][j] * at(w.proj_weight, j * d + o);
        out[static_cast<std::size_t>((n * tokens + t) * d + o)] = s;
      }
    }
  }
  return out;
}

TEST(PatchEmbed, ToyImageGivesSeventeenTokens) {
  ViTConfig c;
  ViTModel<float> model(c);
  Tensor<float> images = Tensor<float>::zeros({2, 16, 16, 3});
  auto tokens = model.patch_embed(images);
  EXPECT_EQ(tokens.shape(), (Shape{2, 17, c.embed_dim}));
}

TEST(PatchEmbed, DeitGeometryGives197Tokens) {
  ViTConfig c;
  c.image_h = c.image_w = 224;
  c.patch_h = c.patch_w = 16;
  c.embed_dim = 8;
  c.heads = 2;
  c.depth = 1;
  ViTModel<float> model(c);
  auto tokens = model.patch_embed(Tensor<float>::zeros({1, 224, 224, 3}));
  EXPECT_EQ(tokens.shape(), (Shape{1, 197, 8}));
}

TEST(PatchEmbed, NonDividingPatchThrows) {
  ViTConfig c;
  c.image_h = c.image_w = 30;
  c.patch_h = c.patch_w = 8;
  EXPECT_THROW(c.validate(), DimensionError);
  EXPECT_THROW(ViTModel<float>{c}, DimensionError);
}

TEST(PatchEmbed, HeadsMustDivideWidth) {
  ViTConfig c;
  c.embed_dim = 30;
  c.heads = 4;
  EXPECT_THROW(c.validate(), DimensionError);
}

TEST(PatchEmbed, WrongImageShapeThrows) {
  ViTModel<float> model(ViTConfig{});
  EXPECT_THROW(model.patch_embed(Tensor<float>::zeros({1, 16, 16, 1})), DimensionError);
}

TEST(PatchEmbed, PatchVectorOrderIsRowThenColumnThenChannel) {
  auto c = tiny_config();
  ViTModel<double> model(c);
  // Make the patch projection pick input element 0 of each patch and cancel extras.
  auto w = model.patch_weight().mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  w[0] = 1.0;  // (py=0, px=0, ch=0) -> channel 0 of the embedding
  std::fill(model.pos_embed().mutable_data().begin(), model.pos_embed().mutable_data().end(), 0.0);
  std::vector<double> img(static_cast<std::size_t>(c.image_h * c.image_w * c.channels));
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i);
  auto tokens = model.patch_embed(Tensor<double>({1, c.image_h, c.image_w, c.channels}, img));
  // Patch (gy=1, gx=0) is token 1 + 2 and starts at pixel (4, 0).
  EXPECT_DOUBLE_EQ(tokens.data()[3 * c.embed_dim], static_cast<double>((4 * c.image_w + 0) * c.channels));
  EXPECT_DOUBLE_EQ(tokens.data()[2 * c.embed_dim], static_cast<double>((0 * c.image_w + 4) * c.channels));
}

TEST(Attention, MatchesDirectLoopEvaluation) {
  auto c = tiny_config();
  ViTModel<double> model(c);
  Rng rng(3);
  auto x = random_tensor({2, c.seq_len(), c.embed_dim}, rng, 1.0, false);
  auto got = model.attention_branch(x, 1);
  auto want = naive_attention(model, x, 1);
  ASSERT_EQ(got.numel(), static_cast<std::int64_t>(want.size()));
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got.data()[i], want[i], 1e-12);
}

TEST(Attention, ZeroQueryKeyGivesTokenMeanOfNormalisedInput) {
  auto c = tiny_config();
  ViTModel<double> model(c);
  const int d = c.embed_dim;
  auto& a = *model.block(0).attention;
  auto qkv = a.qkv_weight.mutable_data();
  std::fill(qkv.begin(), qkv.end(), 0.0);
  for (int j = 0; j < d; ++j) qkv[static_cast<std::size_t>(j * 3 * d + 2 * d + j)] = 1.0;  // V = I
  auto proj = a.proj_weight.mutable_data();
  std::fill(proj.begin(), proj.end(), 0.0);
  for (int j = 0; j < d; ++j) proj[static_cast<std::size_t>(j * d + j)] = 1.0;  // O = I
  Rng rng(5);
  auto x = random_tensor({1, c.seq_len(), d}, rng, 1.0, false);
  auto probs = model.attention_probabilities(x, 0);
  for (double p : probs.data()) EXPECT_NEAR(p, 1.0 / c.seq_len(), 1e-15);
  auto h = layer_norm(x, a.norm_weight, a.norm_bias, norm_eps<double>());
  auto out = model.attention_branch(x, 0);
  for (int j = 0; j < d; ++j) {
    double mean = 0.0;
    for (int t = 0; t < c.seq_len(); ++t) mean += h.data()[static_cast<std::size_t>(t * d + j)];
    mean /= c.seq_len();
    for (int t = 0; t < c.seq_len(); ++t) EXPECT_NEAR(out.data()[static_cast<std::size_t>(t * d + j)], mean, 1e-12);
  }
}

TEST(Attention, ProbabilitiesAreRowStochastic) {
  auto c = tiny_config();
  ViTModel<double> model(c);
  Rng rng(8);
  auto probs = model.attention_probabilities(random_tensor({2, c.seq_len(), c.embed_dim}, rng, 1.0, false), 2);
  ASSERT_EQ(probs.shape(), (Shape{2, c.heads, c.seq_len(), c.seq_len()}));
  for (std::int64_t r = 0; r < probs.numel() / c.seq_len(); ++r) {
    double s = 0.0;
    for (int u = 0; u < c.seq_len(); ++u) s += probs.data()[static_cast<std::size_t>(r * c.seq_len() + u)];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Mlp, ZeroOutputProjectionIsIdentity) {
  auto c = tiny_config();
  ViTModel<double> model(c);
  auto& m = model.block(0).mlp;
  std::fill(m.fc2_weight.mutable_data().begin(), m.fc2_weight.mutable_data().end(), 0.0);
  Rng rng(2);
  auto x = random_tensor({2, c.seq_len(), c.embed_dim}, rng, 1.0, false);
  EXPECT_EQ(max_abs_diff(model.mlp_forward(x, 0), x), 0.0);
}

TEST(Mlp, WrongWidthThrows) {
  auto c = tiny_config();
  ViTModel<double> model(c);
  EXPECT_THROW(model.mlp_branch(Tensor<double>::zeros({1, c.seq_len(), c.embed_dim + 1}), 0), DimensionError);
}

TEST(Forward, CapturesRequestedTapsOnly) {
  auto c = tiny_config();
  ViTModel<double> model(c);
  ForwardOptions opts;
  opts.taps = {{0, LayerKind::kAttention}, {2, LayerKind::kMlp}};
  auto r = model.forward(random_images(c, 3, 1), opts);
  EXPECT_EQ(r.logits.shape(), (Shape{3, c.num_classes}));
  ASSERT_EQ(r.captures.size(), 2u);
  EXPECT_EQ(r.captures.at({2, LayerKind::kMlp}).shape(), (Shape{3, c.seq_len(), c.embed_dim}));
}

TEST(Forward, UnknownTapThrows) {
  auto c = tiny_config();
  ViTModel<double> model(c);
  ForwardOptions opts;
  opts.taps = {{c.depth, LayerKind::kMlp}};
  EXPECT_THROW(model.forward(random_images(c, 1, 1), opts), std::out_of_range);
}

TEST(Forward, LayerIdNamesRoundTrip) {
  for (const auto& id : all_taps(4)) EXPECT_EQ(LayerId::parse(id.name()), id);
  EXPECT_EQ(LayerId::parse("block3.attn"), (LayerId{3, LayerKind::kAttention}));
  EXPECT_THROW(LayerId::parse("blk3.attn"), std::invalid_argument);
  EXPECT_THROW(LayerId::parse("block3.ffn"), std::invalid_argument);
}

TEST(Forward, MaskedBlockPassesInputThroughAttention) {
  auto c = tiny_config();
  ViTModel<double> model(c);
  auto images = random_images(c, 2, 4);
  ForwardOptions opts;
  opts.taps = {{0, LayerKind::kMlp}, {1, LayerKind::kAttention}};
  opts.masked = {1};
  auto r = model.forward(images, opts);
  EXPECT_EQ(max_abs_diff(r.captures.at({1, LayerKind::kAttention}), r.captures.at({0, LayerKind::kMlp})), 0.0);
  // Masking leaves the model itself untouched.
  EXPECT_EQ(model.block(1).mode, BlockMode::kFull);
  auto unmasked = model.forward(images);
  EXPECT_GT(max_abs_diff(unmasked.logits, r.logits), 0.0);
}

TEST(Forward, DilutedAtFullMaskMatchesFullBlock) {
  auto c = tiny_config();
  ViTModel<double> model(c);
  auto images = random_images(c, 2, 9);
  auto before = model.logits(images);
  model.begin_dilution(1, true);
  EXPECT_LT(max_abs_diff(model.logits(images), before), 1e-14);
}

TEST(Forward, CompensatedAndNaiveResidualScales) {
  Rng rng(1);
  auto branch = random_tensor({2, 3}, rng, 1.0, false);
  auto x = random_tensor({2, 3}, rng, 1.0, false);
  auto comp = masked_residual(branch, x, 0.25, true);
  auto naive = masked_residual(branch, x, 0.25, false);
  for (int i = 0; i < 6; ++i) {
    EXPECT_NEAR(comp.data()[i], 0.25 * branch.data()[i] + 1.75 * x.data()[i], 1e-15);
    EXPECT_NEAR(naive.data()[i], 0.25 * branch.data()[i] + x.data()[i], 1e-15);
  }
}

TEST(Forward, FusedBlockMatchesDilutedAtZeroMask) {
  auto c = tiny_config();
  ViTModel<double> model(c);
  model.begin_dilution(0, true);
  model.set_mask(0, 0.0);
  model.begin_dilution(2, true);
  model.set_mask(2, 0.0);
  auto images = random_images(c, 4, 12);
  auto diluted = model.forward(images, {all_taps(c.depth), {}});
  auto fused = model;
  fused.convert_to_fused(0);
  fused.convert_to_fused(2);
  auto out = fused.forward(images, {all_taps(c.depth), {}});
  EXPECT_LT(max_abs_diff(out.logits, diluted.logits), 1e-10);
  for (const auto& [id, t] : diluted.captures) EXPECT_LT(max_abs_diff(out.captures.at(id), t), 1e-10) << id.name();
}

TEST(Modes, TransitionsAreChecked) {
  auto c = tiny_config();
  ViTModel<double> model(c);
  EXPECT_THROW(model.set_mask(0, 0.5), ModeError);
  model.begin_dilution(0, true);
  EXPECT_THROW(model.begin_dilution(0, true), ModeError);
  EXPECT_THROW(model.set_mask(0, 1.5), std::invalid_argument);
  model.convert_to_fused(0);
  EXPECT_THROW(model.attention_branch(Tensor<double>::zeros({1, c.seq_len(), c.embed_dim}), 0), ModeError);
  ForwardOptions opts;
  opts.masked = {0};
  EXPECT_THROW(model.forward(random_images(c, 1, 1), opts), ModeError);
  EXPECT_EQ(model.blocks_in_mode(BlockMode::kFused), (std::set<int>{0}));
  EXPECT_THROW(model.block(c.depth), std::out_of_range);
}

TEST(Model, CopyIsDeep) {
  auto c = tiny_config();
  ViTModel<double> a(c);
  ViTModel<double> b = a;
  b.head_weight().mutable_data()[0] += 1.0;
  b.block(0).attention->qkv_weight.mutable_data()[0] += 1.0;
  EXPECT_NE(a.head_weight().data()[0], b.head_weight().data()[0]);
  EXPECT_NE(a.block(0).attention->qkv_weight.data()[0], b.block(0).attention->qkv_weight.data()[0]);
}

TEST(Model, SameSeedSameWeights) {
  auto c = tiny_config();
  ViTModel<float> a(c), b(c);
  auto pa = a.named_parameters(), pb = b.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin()));
  }
}

TEST(Model, ParameterGradientsMatchFiniteDifferences) {
  auto c = tiny_config();
  c.depth = 2;
  ViTModel<double> model(c);
  model.begin_dilution(1, true);
  model.set_mask(1, 0.4);
  auto images = random_images(c, 2, 6);
  const std::vector<int> labels{1, 3};
  std::vector<Tensor<double>> params;
  for (const auto& p : model.named_parameters()) {
    if (p.name == "blocks.1.attn.qkv.weight" || p.name == "blocks.0.mlp.fc1.bias" || p.name == "pos_embed" ||
        p.name == "blocks.1.norm1.weight") {
      params.push_back(p.tensor);
    }
  }
  ASSERT_EQ(params.size(), 4u);
  auto err = testing::gradient_check(params, [&](const std::vector<Tensor<double>>&) {
    return cross_entropy(model.logits(images), labels);
  });
  EXPECT_LT(err, 1e-5);
}

TEST(Census, StoredCountMatchesFormula) {
  auto c = tiny_config();
  ViTModel<float> model(c);
  EXPECT_EQ(model.stored_parameter_count(), param_count(c).total());
  model.convert_to_fused(1);
  EXPECT_EQ(model.stored_parameter_count(), param_count(c, {1}).total());
  EXPECT_EQ(param_count(c).total() - param_count(c, {1}).total(), removed_attention_cost(c));
}

TEST(Census, DeitTotals) {
  // DeiT-B: patch 590,592; cls 768; pos 151,296; per block 7,087,872; norm 1,536; head 769,000.
  EXPECT_EQ(param_count(deit_base_config()).total(), 86'567'656);
  EXPECT_EQ(param_count(deit_small_config()).total(), 22'050'664);
  EXPECT_EQ(param_count(deit_tiny_config()).total(), 5'717'416);
}

TEST(Census, AttentionLayerCost) {
  const auto c = deit_base_config();
  const std::int64_t d = 768;
  EXPECT_EQ(removed_attention_cost(c), 4 * d * d + 6 * d);
  EXPECT_EQ(param_count(c, {0}).attention, 11 * 2'362'368);
}

TEST(Census, RemovalIndicesValidated) {
  EXPECT_THROW(param_count(deit_base_config(), {12}), std::out_of_range);
}

class CheckpointTest : public ::testing::Test {
 protected:
  std::filesystem::path dir_ = std::filesystem::temp_directory_path() /
                               ("entroprune_ckpt_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
  void TearDown() override { std::filesystem::remove_all(dir_); }
};

TEST_F(CheckpointTest, RoundTripIsBitExact) {
  auto c = tiny_config();
  ViTModel<float> model(c);
  model.begin_dilution(2, false);
  model.set_mask(2, 0.3);
  save_checkpoint(model, dir_ / "m.epck");
  auto loaded = load_checkpoint<float>(dir_ / "m.epck");
  EXPECT_EQ(loaded.config(), c);
  EXPECT_EQ(loaded.block(2).mode, BlockMode::kDiluted);
  EXPECT_EQ(loaded.block(2).mask, 0.3);
  EXPECT_FALSE(loaded.block(2).compensate);
  auto pa = model.named_parameters(), pb = loaded.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_EQ(std::memcmp(pa[i].tensor.data().data(), pb[i].tensor.data().data(), pa[i].tensor.numel() * 4), 0);
  }
  EXPECT_EQ(checkpoint_dtype(dir_ / "m.epck"), DType::kFloat32);
}

TEST_F(CheckpointTest, FusedBlocksStoreNoAttentionTensors) {
  auto c = tiny_config();
  ViTModel<double> model(c);
  model.convert_to_fused(0);
  save_checkpoint(model, dir_ / "f.epck");
  auto container = read_container(dir_ / "f.epck", "EPCK");
  EXPECT_FALSE(container.contains("blocks.0.attn.qkv.weight"));
  EXPECT_FALSE(container.contains("blocks.0.norm1.weight"));
  EXPECT_TRUE(container.contains("blocks.1.attn.qkv.weight"));
  auto loaded = load_checkpoint<double>(dir_ / "f.epck");
  EXPECT_EQ(loaded.block(0).mode, BlockMode::kFused);
  EXPECT_EQ(loaded.stored_parameter_count(), param_count(c, {0}).total());
  auto images = random_images(c, 2, 3);
  EXPECT_EQ(max_abs_diff(loaded.logits(images), model.logits(images)), 0.0);
}

TEST_F(CheckpointTest, TruncatedFileIsDataError) {
  ViTModel<float> model(tiny_config());
  save_checkpoint(model, dir_ / "t.epck");
  const auto size = std::filesystem::file_size(dir_ / "t.epck");
  std::filesystem::resize_file(dir_ / "t.epck", size - 7);
  EXPECT_THROW(load_checkpoint<float>(dir_ / "t.epck"), DataError);
}

TEST_F(CheckpointTest, WrongMagicIsDataError) {
  std::filesystem::create_directories(dir_);
  std::ofstream(dir_ / "bad.epck") << "NOPE and some more bytes";
  EXPECT_THROW(load_checkpoint<float>(dir_ / "bad.epck"), DataError);
  EXPECT_THROW(load_checkpoint<float>(dir_ / "missing.epck"), DataError);
}

TEST_F(CheckpointTest, LoadsAcrossDtypes) {
  ViTModel<double> model(tiny_config());
  save_checkpoint(model, dir_ / "d.epck");
  EXPECT_EQ(checkpoint_dtype(dir_ / "d.epck"), DType::kFloat64);
  auto f = load_checkpoint<float>(dir_ / "d.epck");
  EXPECT_FLOAT_EQ(f.head_weight().data()[3], static_cast<float>(model.head_weight().data()[3]));
}

}  // namespace
}  // namespace entroprune
