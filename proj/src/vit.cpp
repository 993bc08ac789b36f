// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include "entroprune/vit.hpp"

#include <cmath>
#include <stdexcept>

#include "entroprune/util.hpp"

namespace entroprune {

void ViTConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw DimensionError(std::string(what) + " must be positive");
  };
  positive(image_h, "image_h");
  positive(image_w, "image_w");
  positive(channels, "channels");
  positive(patch_h, "patch_h");
  positive(patch_w, "patch_w");
  positive(embed_dim, "embed_dim");
  positive(depth, "depth");
  positive(heads, "heads");
  positive(num_classes, "num_classes");
  if (image_h % patch_h != 0 || image_w % patch_w != 0) {
    throw DimensionError("image " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                         " is not divisible by patch " + std::to_string(patch_h) + "x" + std::to_string(patch_w));
  }
  if (embed_dim % heads != 0) {
    throw DimensionError("embed_dim " + std::to_string(embed_dim) + " is not divisible by heads " +
                         std::to_string(heads));
  }
  if (!(mlp_ratio > 0.0)) throw DimensionError("mlp_ratio must be positive");
}

int ViTConfig::mlp_hidden() const { return static_cast<int>(std::lround(mlp_ratio * embed_dim)); }

namespace {

ViTConfig deit_shape(int d, int heads) {
  ViTConfig c;
  c.image_h = c.image_w = 224;
  c.patch_h = c.patch_w = 16;
  c.channels = 3;
  c.embed_dim = d;
  c.depth = 12;
  c.heads = heads;
  c.mlp_ratio = 4.0;
  c.num_classes = 1000;
  return c;
}

}  // namespace

ViTConfig deit_base_config() { return deit_shape(768, 12); }
ViTConfig deit_small_config() { return deit_shape(384, 6); }
ViTConfig deit_tiny_config() { return deit_shape(192, 3); }

const char* block_mode_name(BlockMode mode) {
  switch (mode) {
    case BlockMode::kFull:
      return "full";
    case BlockMode::kDiluted:
      return "diluted";
    case BlockMode::kFused:
      return "fused";
  }
  return "unknown";
}

std::string LayerId::name() const {
  return "block" + std::to_string(block) + (kind == LayerKind::kAttention ? ".attn" : ".mlp");
}

LayerId LayerId::parse(const std::string& name) {
  const auto dot = name.find('.');
  if (name.rfind("block", 0) != 0 || dot == std::string::npos) throw std::invalid_argument("bad layer id: " + name);
  LayerId id;
  try {
    id.block = std::stoi(name.substr(5, dot - 5));
  } catch (const std::exception&) {
    throw std::invalid_argument("bad layer id: " + name);
  }
  const auto kind = name.substr(dot + 1);
  if (kind == "attn") {
    id.kind = LayerKind::kAttention;
  } else if (kind == "mlp") {
    id.kind = LayerKind::kMlp;
  } else {
    throw std::invalid_argument("bad layer id: " + name);
  }
  return id;
}

TapSpec all_taps(int depth) {
  TapSpec taps;
  for (int b = 0; b < depth; ++b) {
    taps.insert({b, LayerKind::kAttention});
    taps.insert({b, LayerKind::kMlp});
  }
  return taps;
}

template <typename T>
Tensor<T> masked_residual(const Tensor<T>& branch, const Tensor<T>& x, double mask, bool compensate) {
  const T m = static_cast<T>(mask);
  const T residual = compensate ? static_cast<T>(2.0 - mask) : T(1);
  return add(scale(branch, m), scale(x, residual));
}

namespace {

template <typename T>
Tensor<T> init_normal(Shape shape, Rng& rng) {
  std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<T>(rng.truncated_normal(0.02));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

template <typename T>
Tensor<T> init_const(Shape shape, T value) {
  return Tensor<T>::full(std::move(shape), value, true);
}

template <typename T>
void clone_into(Tensor<T>& t) {
  if (t.defined()) t = t.clone();
}

}  // namespace

template <typename T>
ViTModel<T>::ViTModel(ViTConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(derive_seed(config_.seed, 0x5EED));
  const int d = config_.embed_dim;
  const int hidden = config_.mlp_hidden();
  patch_weight_ = init_normal<T>({config_.patch_dim(), d}, rng);
  patch_bias_ = init_const<T>({d}, T(0));
  cls_token_ = init_normal<T>({d}, rng);
  pos_embed_ = init_normal<T>({config_.seq_len(), d}, rng);
  blocks_.resize(static_cast<std::size_t>(config_.depth));
  for (auto& b : blocks_) {
    AttentionWeights<T> a;
    a.norm_weight = init_const<T>({d}, T(1));
    a.norm_bias = init_const<T>({d}, T(0));
    a.qkv_weight = init_normal<T>({d, 3 * d}, rng);
    a.qkv_bias = init_const<T>({3 * d}, T(0));
    a.proj_weight = init_normal<T>({d, d}, rng);
    a.proj_bias = init_const<T>({d}, T(0));
    b.attention = std::move(a);
    b.mlp.norm_weight = init_const<T>({d}, T(1));
    b.mlp.norm_bias = init_const<T>({d}, T(0));
    b.mlp.fc1_weight = init_normal<T>({d, hidden}, rng);
    b.mlp.fc1_bias = init_const<T>({hidden}, T(0));
    b.mlp.fc2_weight = init_normal<T>({hidden, d}, rng);
    b.mlp.fc2_bias = init_const<T>({d}, T(0));
  }
  norm_weight_ = init_const<T>({d}, T(1));
  norm_bias_ = init_const<T>({d}, T(0));
  head_weight_ = init_normal<T>({d, config_.num_classes}, rng);
  head_bias_ = init_const<T>({config_.num_classes}, T(0));
}

template <typename T>
ViTModel<T>::ViTModel(const ViTModel& other)
    : config_(other.config_),
      patch_weight_(other.patch_weight_),
      patch_bias_(other.patch_bias_),
      cls_token_(other.cls_token_),
      pos_embed_(other.pos_embed_),
      blocks_(other.blocks_),
      norm_weight_(other.norm_weight_),
      norm_bias_(other.norm_bias_),
      head_weight_(other.head_weight_),
      head_bias_(other.head_bias_) {
  // Handles were copied above; give this model its own storage.
  for (Tensor<T>* t : {&patch_weight_, &patch_bias_, &cls_token_, &pos_embed_, &norm_weight_, &norm_bias_,
                       &head_weight_, &head_bias_}) {
    clone_into(*t);
  }
  for (auto& b : blocks_) {
    if (b.attention) {
      auto& a = *b.attention;
      for (Tensor<T>* t : {&a.norm_weight, &a.norm_bias, &a.qkv_weight, &a.qkv_bias, &a.proj_weight, &a.proj_bias}) {
        clone_into(*t);
      }
    }
    auto& m = b.mlp;
    for (Tensor<T>* t : {&m.norm_weight, &m.norm_bias, &m.fc1_weight, &m.fc1_bias, &m.fc2_weight, &m.fc2_bias}) {
      clone_into(*t);
    }
  }
}

template <typename T>
ViTModel<T>& ViTModel<T>::operator=(const ViTModel& other) {
  if (this != &other) *this = ViTModel(other);
  return *this;
}

template <typename T>
void ViTModel<T>::check_block(int index) const {
  if (index < 0 || index >= config_.depth) {
    throw std::out_of_range("block index " + std::to_string(index) + " outside depth " +
                            std::to_string(config_.depth));
  }
}

template <typename T>
const Block<T>& ViTModel<T>::block(int index) const {
  check_block(index);
  return blocks_[static_cast<std::size_t>(index)];
}

template <typename T>
Block<T>& ViTModel<T>::block(int index) {
  check_block(index);
  return blocks_[static_cast<std::size_t>(index)];
}

template <typename T>
Tensor<T> ViTModel<T>::patch_embed(const Tensor<T>& images) const {
  const auto& c = config_;
  if (images.rank() != 4 || images.dim(1) != c.image_h || images.dim(2) != c.image_w || images.dim(3) != c.channels) {
    throw DimensionError("patch_embed: expected [B," + std::to_string(c.image_h) + "," + std::to_string(c.image_w) +
                         "," + std::to_string(c.channels) + "] images, got " + shape_string(images.shape()));
  }
  const auto batch = images.dim(0);
  const int gh = c.grid_h(), gw = c.grid_w(), pd = c.patch_dim();
  // Rows ordered (batch, grid row, grid col); columns ordered (py, px, channel).
  std::vector<T> patches(static_cast<std::size_t>(batch * c.num_patches() * pd));
  const auto src = images.data();
  std::size_t k = 0;
  for (std::int64_t b = 0; b < batch; ++b) {
    for (int gy = 0; gy < gh; ++gy) {
      for (int gx = 0; gx < gw; ++gx) {
        for (int py = 0; py < c.patch_h; ++py) {
          const auto row = ((b * c.image_h + gy * c.patch_h + py) * c.image_w + gx * c.patch_w) * c.channels;
          for (int i = 0; i < c.patch_w * c.channels; ++i) patches[k++] = src[row + i];
        }
      }
    }
  }
  Tensor<T> flat({batch * c.num_patches(), pd}, std::move(patches));
  auto tokens = reshape(add_bias(matmul(flat, patch_weight_), patch_bias_), {batch, c.num_patches(), c.embed_dim});
  auto cls = expand_leading(reshape(cls_token_, {1, c.embed_dim}), batch);
  return add_bias(concat<T>({cls, tokens}, 1), pos_embed_);
}

template <typename T>
Tensor<T> ViTModel<T>::attention_core(const Tensor<T>& x, int index, Tensor<T>* probabilities) const {
  const auto& blk = block(index);
  if (!blk.attention) {
    throw ModeError("block " + std::to_string(index) + " is fused and has no attention layer");
  }
  const auto& w = *blk.attention;
  const std::int64_t batch = x.dim(0), tokens = x.dim(1), d = config_.embed_dim;
  if (x.rank() != 3 || x.dim(2) != d) throw DimensionError("attention: expected [B,T,d], got " + shape_string(x.shape()));
  const std::int64_t heads = config_.heads, hd = config_.head_dim();
  auto h = layer_norm(x, w.norm_weight, w.norm_bias, norm_eps<T>());
  auto qkv = add_bias(matmul(reshape(h, {batch * tokens, d}), w.qkv_weight), w.qkv_bias);
  auto split = [&](int part) {
    return transpose(reshape(slice(qkv, 1, part * d, d), {batch, tokens, heads, hd}), 1, 2);
  };
  auto q = split(0), k = split(1), v = split(2);
  auto scores = scale(bmm(q, transpose(k, 2, 3)), static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd))));
  auto probs = softmax(scores, -1);
  if (probabilities) *probabilities = probs;
  auto ctx = reshape(transpose(bmm(probs, v), 1, 2), {batch * tokens, d});
  return reshape(add_bias(matmul(ctx, w.proj_weight), w.proj_bias), {batch, tokens, d});
}

template <typename T>
Tensor<T> ViTModel<T>::attention_branch(const Tensor<T>& x, int index) const {
  return attention_core(x, index, nullptr);
}

template <typename T>
Tensor<T> ViTModel<T>::attention_probabilities(const Tensor<T>& x, int index) const {
  Tensor<T> probs;
  attention_core(x, index, &probs);
  return probs;
}

template <typename T>
Tensor<T> ViTModel<T>::attention_forward(const Tensor<T>& x, int index) const {
  if (block(index).mode != BlockMode::kFull) {
    throw ModeError("attention_forward needs a Full block; block " + std::to_string(index) + " is " +
                    block_mode_name(block(index).mode));
  }
  return add(attention_branch(x, index), x);
}

template <typename T>
Tensor<T> ViTModel<T>::mlp_branch(const Tensor<T>& x, int index) const {
  const auto& m = block(index).mlp;
  const std::int64_t batch = x.dim(0), tokens = x.dim(1), d = config_.embed_dim;
  if (x.rank() != 3 || x.dim(2) != d) throw DimensionError("mlp: expected [B,T,d], got " + shape_string(x.shape()));
  auto h = layer_norm(x, m.norm_weight, m.norm_bias, norm_eps<T>());
  auto hidden = gelu(add_bias(matmul(reshape(h, {batch * tokens, d}), m.fc1_weight), m.fc1_bias));
  return reshape(add_bias(matmul(hidden, m.fc2_weight), m.fc2_bias), {batch, tokens, d});
}

template <typename T>
Tensor<T> ViTModel<T>::mlp_forward(const Tensor<T>& f_attn, int index) const {
  return add(mlp_branch(f_attn, index), f_attn);
}

template <typename T>
Tensor<T> ViTModel<T>::head_forward(const Tensor<T>& tokens) const {
  const std::int64_t batch = tokens.dim(0), d = config_.embed_dim;
  auto cls = reshape(slice(tokens, 1, 0, 1), {batch, d});
  auto h = layer_norm(cls, norm_weight_, norm_bias_, norm_eps<T>());
  return add_bias(matmul(h, head_weight_), head_bias_);
}

template <typename T>
ForwardResult<T> ViTModel<T>::forward(const Tensor<T>& images, const ForwardOptions& options) const {
  for (const auto& tap : options.taps) {
    if (tap.block < 0 || tap.block >= config_.depth) throw std::out_of_range("unknown tap id " + tap.name());
  }
  for (int m : options.masked) {
    if (block(m).mode != BlockMode::kFull) {
      throw ModeError("cannot mask block " + std::to_string(m) + ": it is " + block_mode_name(block(m).mode));
    }
  }
  ForwardResult<T> out;
  auto x = patch_embed(images);
  for (int b = 0; b < config_.depth; ++b) {
    const auto& blk = blocks_[static_cast<std::size_t>(b)];
    Tensor<T> f_attn;
    Tensor<T> f_mlp;
    if (options.masked.count(b)) {
      f_attn = x;
      f_mlp = mlp_forward(f_attn, b);
    } else if (blk.mode == BlockMode::kFull) {
      f_attn = add(attention_branch(x, b), x);
      f_mlp = mlp_forward(f_attn, b);
    } else if (blk.mode == BlockMode::kDiluted) {
      f_attn = masked_residual(attention_branch(x, b), x, blk.mask, blk.compensate);
      f_mlp = mlp_forward(f_attn, b);
    } else {
      f_attn = blk.compensate ? scale(x, T(2)) : x;
      f_mlp = mlp_forward(f_attn, b);
    }
    if (options.taps.count({b, LayerKind::kAttention})) out.captures[{b, LayerKind::kAttention}] = f_attn;
    if (options.taps.count({b, LayerKind::kMlp})) out.captures[{b, LayerKind::kMlp}] = f_mlp;
    x = f_mlp;
  }
  out.logits = head_forward(x);
  return out;
}

template <typename T>
std::vector<NamedParameter<T>> ViTModel<T>::named_parameters() const {
  std::vector<NamedParameter<T>> out{{"patch_embed.weight", patch_weight_},
                                     {"patch_embed.bias", patch_bias_},
                                     {"cls_token", cls_token_},
                                     {"pos_embed", pos_embed_}};
  for (int i = 0; i < config_.depth; ++i) {
    const auto& b = blocks_[static_cast<std::size_t>(i)];
    const std::string p = "blocks." + std::to_string(i) + ".";
    if (b.attention) {
      const auto& a = *b.attention;
      out.push_back({p + "norm1.weight", a.norm_weight});
      out.push_back({p + "norm1.bias", a.norm_bias});
      out.push_back({p + "attn.qkv.weight", a.qkv_weight});
      out.push_back({p + "attn.qkv.bias", a.qkv_bias});
      out.push_back({p + "attn.proj.weight", a.proj_weight});
      out.push_back({p + "attn.proj.bias", a.proj_bias});
    }
    out.push_back({p + "norm2.weight", b.mlp.norm_weight});
    out.push_back({p + "norm2.bias", b.mlp.norm_bias});
    out.push_back({p + "mlp.fc1.weight", b.mlp.fc1_weight});
    out.push_back({p + "mlp.fc1.bias", b.mlp.fc1_bias});
    out.push_back({p + "mlp.fc2.weight", b.mlp.fc2_weight});
    out.push_back({p + "mlp.fc2.bias", b.mlp.fc2_bias});
  }
  out.push_back({"norm.weight", norm_weight_});
  out.push_back({"norm.bias", norm_bias_});
  out.push_back({"head.weight", head_weight_});
  out.push_back({"head.bias", head_bias_});
  return out;
}

template <typename T>
std::vector<Tensor<T>> ViTModel<T>::attention_parameters(int index) const {
  const auto& b = block(index);
  if (!b.attention) return {};
  const auto& a = *b.attention;
  return {a.norm_weight, a.norm_bias, a.qkv_weight, a.qkv_bias, a.proj_weight, a.proj_bias};
}

template <typename T>
std::int64_t ViTModel<T>::stored_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.numel();
  return n;
}

template <typename T>
void ViTModel<T>::set_requires_grad(bool value) {
  for (auto& p : named_parameters()) p.tensor.set_requires_grad(value);
}

template <typename T>
void ViTModel<T>::zero_grad() {
  for (auto& p : named_parameters()) p.tensor.zero_grad();
}

template <typename T>
void ViTModel<T>::begin_dilution(int index, bool compensate) {
  auto& b = block(index);
  if (b.mode != BlockMode::kFull) {
    throw ModeError("block " + std::to_string(index) + " must be Full to start dilution, it is " +
                    block_mode_name(b.mode));
  }
  b.mode = BlockMode::kDiluted;
  b.mask = 1.0;
  b.compensate = compensate;
}

template <typename T>
void ViTModel<T>::set_mask(int index, double mask) {
  auto& b = block(index);
  if (b.mode != BlockMode::kDiluted) throw ModeError("block " + std::to_string(index) + " is not Diluted");
  if (!(mask >= 0.0 && mask <= 1.0)) throw std::invalid_argument("mask must lie in [0, 1]");
  b.mask = mask;
}

template <typename T>
void ViTModel<T>::convert_to_fused(int index) {
  auto& b = block(index);
  b.attention.reset();
  b.mode = BlockMode::kFused;
  b.mask = 0.0;
}

template <typename T>
std::set<int> ViTModel<T>::blocks_in_mode(BlockMode mode) const {
  std::set<int> out;
  for (int i = 0; i < config_.depth; ++i) {
    if (blocks_[static_cast<std::size_t>(i)].mode == mode) out.insert(i);
  }
  return out;
}

std::int64_t ParamCensus::total() const {
  return patch_embed + cls_token + pos_embed + attention + attention_norm + mlp + mlp_norm + final_norm + head;
}

std::int64_t removed_attention_cost(const ViTConfig& c) {
  const std::int64_t d = c.embed_dim;
  return (d * 3 * d + 3 * d) + (d * d + d) + 2 * d;
}

ParamCensus param_count(const ViTConfig& c, const std::set<int>& removed) {
  c.validate();
  for (int r : removed) {
    if (r < 0 || r >= c.depth) throw std::out_of_range("removed attention index " + std::to_string(r));
  }
  const std::int64_t d = c.embed_dim, hidden = c.mlp_hidden(), depth = c.depth;
  const std::int64_t kept = depth - static_cast<std::int64_t>(removed.size());
  ParamCensus p;
  p.patch_embed = static_cast<std::int64_t>(c.patch_dim()) * d + d;
  p.cls_token = d;
  p.pos_embed = static_cast<std::int64_t>(c.seq_len()) * d;
  p.attention = kept * ((d * 3 * d + 3 * d) + (d * d + d));
  p.attention_norm = kept * 2 * d;
  p.mlp = depth * ((d * hidden + hidden) + (hidden * d + d));
  p.mlp_norm = depth * 2 * d;
  p.final_norm = 2 * d;
  p.head = d * c.num_classes + c.num_classes;
  return p;
}

template class ViTModel<float>;
template class ViTModel<double>;
template Tensor<float> masked_residual(const Tensor<float>&, const Tensor<float>&, double, bool);
template Tensor<double> masked_residual(const Tensor<double>&, const Tensor<double>&, double, bool);

}  // namespace entroprune
