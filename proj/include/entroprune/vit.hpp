// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pre-norm vision transformer with per-block modes.
//
//   Full     f_attn = Attn(LN1(x)) + x
//   Diluted  f_attn = M * Attn(LN1(x)) + (2 - M) * x     (compensated)
//            f_attn = M * Attn(LN1(x)) + x               (naive)
//   Fused    f_attn = 2x, and the block owns no attention parameters
//            (x when the block was diluted without compensation)
//
// Every block then computes f_mlp = MLP(LN2(f_attn)) + f_attn. A Fused block
// feeds the doubled input through LN2 as well, which keeps it bit-identical
// to a Diluted block at M = 0 (LN2(2x) only matches LN2(x) up to epsilon).

#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "entroprune/tensor.hpp"

namespace entroprune {

struct ViTConfig {
  int image_h = 16;
  int image_w = 16;
  int channels = 3;
  int patch_h = 4;
  int patch_w = 4;
  int embed_dim = 32;
  int depth = 6;
  int heads = 4;
  double mlp_ratio = 4.0;
  int num_classes = 10;
  std::uint64_t seed = 0;

  /// Throws DimensionError when patches do not tile the image or heads do not divide d.
  void validate() const;

  int grid_h() const { return image_h / patch_h; }
  int grid_w() const { return image_w / patch_w; }
  int num_patches() const { return grid_h() * grid_w(); }
  int seq_len() const { return num_patches() + 1; }
  int head_dim() const { return embed_dim / heads; }
  int mlp_hidden() const;
  int patch_dim() const { return patch_h * patch_w * channels; }

  bool operator==(const ViTConfig&) const = default;
};

/// Shape presets of the three DeiT sizes, used for census arithmetic.
ViTConfig deit_base_config();
ViTConfig deit_small_config();
ViTConfig deit_tiny_config();

/// Layer-norm epsilon per dtype.
template <typename T>
constexpr double norm_eps();
template <>
constexpr double norm_eps<float>() {
  return 1e-6;
}
template <>
constexpr double norm_eps<double>() {
  return 1e-12;
}

enum class BlockMode : std::uint8_t { kFull = 0, kDiluted = 1, kFused = 2 };
const char* block_mode_name(BlockMode mode);

enum class LayerKind : std::uint8_t { kAttention = 0, kMlp = 1 };

/// Feature tap point: the post-residual f_attn or f_mlp output of a block.
struct LayerId {
  int block = 0;
  LayerKind kind = LayerKind::kAttention;

  auto operator<=>(const LayerId&) const = default;
  /// "block3.attn" / "block3.mlp"
  std::string name() const;
  static LayerId parse(const std::string& name);
};

using TapSpec = std::set<LayerId>;

/// Every attention and MLP tap of a model of the given depth.
TapSpec all_taps(int depth);

template <typename T>
struct AttentionWeights {
  Tensor<T> norm_weight, norm_bias;
  Tensor<T> qkv_weight, qkv_bias;  // [d, 3d], [3d]
  Tensor<T> proj_weight, proj_bias;  // [d, d], [d]
};

template <typename T>
struct MlpWeights {
  Tensor<T> norm_weight, norm_bias;
  Tensor<T> fc1_weight, fc1_bias;  // [d, hidden], [hidden]
  Tensor<T> fc2_weight, fc2_bias;  // [hidden, d], [d]
};

template <typename T>
struct Block {
  BlockMode mode = BlockMode::kFull;
  double mask = 1.0;  // scalar M, meaningful while Diluted
  bool compensate = true;
  std::optional<AttentionWeights<T>> attention;  // empty once Fused
  MlpWeights<T> mlp;
};

struct ForwardOptions {
  TapSpec taps;
  /// Measurement masking: these Full blocks forward f_attn = x. Parameters are untouched.
  std::set<int> masked;
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;
  std::map<LayerId, Tensor<T>> captures;
};

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

/// out = mask * branch + (compensate ? 2 - mask : 1) * x
template <typename T>
Tensor<T> masked_residual(const Tensor<T>& branch, const Tensor<T>& x, double mask, bool compensate);

template <typename T>
class ViTModel {
 public:
  /// Random initialisation from config.seed: truncated normal (std 0.02) for
  /// weights, tokens and positions; zero biases; unit norms.
  explicit ViTModel(ViTConfig config);

  ViTModel(const ViTModel& other);
  ViTModel& operator=(const ViTModel& other);
  ViTModel(ViTModel&&) noexcept = default;
  ViTModel& operator=(ViTModel&&) noexcept = default;

  const ViTConfig& config() const { return config_; }
  int depth() const { return config_.depth; }
  const Block<T>& block(int index) const;
  Block<T>& block(int index);

  /// [B, H, W, C] images to [B, P + 1, d] tokens (class token first, positions added).
  Tensor<T> patch_embed(const Tensor<T>& images) const;
  /// Attn(LN1(x)) without the residual.
  Tensor<T> attention_branch(const Tensor<T>& x, int block) const;
  /// Softmax weights [B, heads, T, T] of a block's attention.
  Tensor<T> attention_probabilities(const Tensor<T>& x, int block) const;
  /// Full-mode f_attn = Attn(LN1(x)) + x.
  Tensor<T> attention_forward(const Tensor<T>& x, int block) const;
  /// MLP(LN2(f_attn)) + f_attn.
  Tensor<T> mlp_forward(const Tensor<T>& f_attn, int block) const;
  /// MLP(LN2(x)) without the residual.
  Tensor<T> mlp_branch(const Tensor<T>& x, int block) const;
  /// Final norm on the class token followed by the linear head.
  Tensor<T> head_forward(const Tensor<T>& tokens) const;

  ForwardResult<T> forward(const Tensor<T>& images, const ForwardOptions& options = {}) const;
  Tensor<T> logits(const Tensor<T>& images) const { return forward(images).logits; }

  std::vector<NamedParameter<T>> named_parameters() const;
  /// Parameters of one block's attention sublayer (norm included); empty when Fused.
  std::vector<Tensor<T>> attention_parameters(int block) const;
  std::int64_t stored_parameter_count() const;
  void set_requires_grad(bool value);
  void zero_grad();

  /// Switches a Full block to Diluted with M = 1.
  void begin_dilution(int block, bool compensate);
  void set_mask(int block, double mask);
  /// Drops a block's attention parameters and marks it Fused.
  void convert_to_fused(int block);
  std::set<int> blocks_in_mode(BlockMode mode) const;

  // Direct access for serialisation and tests.
  Tensor<T>& patch_weight() { return patch_weight_; }
  Tensor<T>& patch_bias() { return patch_bias_; }
  Tensor<T>& cls_token() { return cls_token_; }
  Tensor<T>& pos_embed() { return pos_embed_; }
  Tensor<T>& norm_weight() { return norm_weight_; }
  Tensor<T>& norm_bias() { return norm_bias_; }
  Tensor<T>& head_weight() { return head_weight_; }
  Tensor<T>& head_bias() { return head_bias_; }

 private:
  void check_block(int index) const;
  Tensor<T> attention_core(const Tensor<T>& x, int block, Tensor<T>* probabilities) const;

  ViTConfig config_;
  Tensor<T> patch_weight_, patch_bias_;  // [patch_dim, d], [d]
  Tensor<T> cls_token_;  // [d]
  Tensor<T> pos_embed_;  // [P + 1, d]
  std::vector<Block<T>> blocks_;
  Tensor<T> norm_weight_, norm_bias_;
  Tensor<T> head_weight_, head_bias_;  // [d, classes], [classes]
};

/// Per-component parameter census.
struct ParamCensus {
  std::int64_t patch_embed = 0;
  std::int64_t cls_token = 0;
  std::int64_t pos_embed = 0;
  std::int64_t attention = 0;       // qkv + proj, weights and biases
  std::int64_t attention_norm = 0;  // pre-attention layer norms
  std::int64_t mlp = 0;
  std::int64_t mlp_norm = 0;
  std::int64_t final_norm = 0;
  std::int64_t head = 0;

  std::int64_t total() const;
};

/// Census with the attention sublayers of `removed` blocks deleted. A removed
/// block loses (3d^2 + 3d) + (d^2 + d) attention scalars plus its 2d pre-norm.
ParamCensus param_count(const ViTConfig& config, const std::set<int>& removed = {});
/// Scalars a removed attention sublayer takes with it, norm included.
std::int64_t removed_attention_cost(const ViTConfig& config);

template <typename T>
void save_checkpoint(const ViTModel<T>& model, const std::filesystem::path& path);
/// Loads a checkpoint, converting stored values to T when the dtypes differ.
template <typename T>
ViTModel<T> load_checkpoint(const std::filesystem::path& path);
/// Dtype tag recorded in a checkpoint header.
DType checkpoint_dtype(const std::filesystem::path& path);

}  // namespace entroprune
