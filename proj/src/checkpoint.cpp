// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include <set>
#include <string>

#include "entroprune/errors.hpp"
#include "entroprune/serialization.hpp"
#include "entroprune/vit.hpp"

namespace entroprune {

namespace {

constexpr const char* kMagic = "EPCK";
constexpr std::uint32_t kVersion = 1;

struct CheckpointHeader {
  ViTConfig config;
  DType dtype = DType::kFloat32;
  std::vector<BlockMode> modes;
  std::vector<double> masks;
  std::vector<bool> compensate;
};

std::vector<std::byte> encode_header(const ViTConfig& c, DType dtype, const std::vector<BlockMode>& modes,
                                     const std::vector<double>& masks, const std::vector<bool>& compensate) {
  ByteWriter w;
  for (int v : {c.image_h, c.image_w, c.channels, c.patch_h, c.patch_w, c.embed_dim, c.depth, c.heads,
                c.mlp_hidden(), c.num_classes}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.f64(c.mlp_ratio);
  w.u64(c.seed);
  w.u8(static_cast<std::uint8_t>(dtype));
  for (std::size_t i = 0; i < modes.size(); ++i) {
    w.u8(static_cast<std::uint8_t>(modes[i]));
    w.f64(masks[i]);
    w.u8(compensate[i] ? 1 : 0);
  }
  return w.take();
}

CheckpointHeader decode_header(const TensorContainer& container) {
  if (container.version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(container.version));
  }
  ByteReader r(container.header);
  CheckpointHeader h;
  auto& c = h.config;
  auto next = [&r]() { return static_cast<int>(r.u32()); };
  c.image_h = next();
  c.image_w = next();
  c.channels = next();
  c.patch_h = next();
  c.patch_w = next();
  c.embed_dim = next();
  c.depth = next();
  c.heads = next();
  const int hidden = next();
  c.num_classes = next();
  c.mlp_ratio = r.f64();
  c.seed = r.u64();
  const auto tag = r.u8();
  if (tag != 1 && tag != 2) throw DataError("checkpoint has unknown dtype tag " + std::to_string(tag));
  h.dtype = static_cast<DType>(tag);
  try {
    c.validate();
  } catch (const DimensionError& e) {
    throw DataError(std::string("checkpoint config invalid: ") + e.what());
  }
  if (c.mlp_hidden() != hidden) throw DataError("checkpoint mlp_hidden disagrees with mlp_ratio");
  for (int b = 0; b < c.depth; ++b) {
    const auto mode = r.u8();
    if (mode > 2) throw DataError("checkpoint block " + std::to_string(b) + " has unknown mode");
    h.modes.push_back(static_cast<BlockMode>(mode));
    h.masks.push_back(r.f64());
    h.compensate.push_back(r.u8() != 0);
  }
  if (r.remaining() != 0) throw DataError("checkpoint header has trailing bytes");
  return h;
}

}  // namespace

template <typename T>
void save_checkpoint(const ViTModel<T>& model, const std::filesystem::path& path) {
  std::vector<BlockMode> modes;
  std::vector<double> masks;
  std::vector<bool> compensate;
  for (int b = 0; b < model.depth(); ++b) {
    modes.push_back(model.block(b).mode);
    masks.push_back(model.block(b).mask);
    compensate.push_back(model.block(b).compensate);
  }
  TensorContainer c;
  c.magic = kMagic;
  c.version = kVersion;
  c.header = encode_header(model.config(), dtype_of<T>(), modes, masks, compensate);
  for (const auto& p : model.named_parameters()) c.tensors.push_back(RawTensor::from(p.name, p.tensor));
  write_container(path, c);
}

template <typename T>
ViTModel<T> load_checkpoint(const std::filesystem::path& path) {
  const auto container = read_container(path, kMagic);
  const auto header = decode_header(container);
  ViTModel<T> model(header.config);
  for (int b = 0; b < model.depth(); ++b) {
    const auto i = static_cast<std::size_t>(b);
    switch (header.modes[i]) {
      case BlockMode::kFull:
        break;
      case BlockMode::kDiluted:
        model.begin_dilution(b, header.compensate[i]);
        if (!(header.masks[i] >= 0.0 && header.masks[i] <= 1.0)) {
          throw DataError("checkpoint block " + std::to_string(b) + " has mask outside [0, 1]");
        }
        model.set_mask(b, header.masks[i]);
        break;
      case BlockMode::kFused:
        model.convert_to_fused(b);
        break;
    }
  }
  std::set<std::string> expected;
  for (auto& p : model.named_parameters()) {
    expected.insert(p.name);
    const auto& raw = container.find(p.name);
    if (raw.shape != p.tensor.shape()) {
      throw DataError("tensor '" + p.name + "' has shape " + shape_string(raw.shape) + ", expected " +
                      shape_string(p.tensor.shape()));
    }
    const auto loaded = raw.template to_tensor<T>();
    std::copy(loaded.data().begin(), loaded.data().end(), p.tensor.mutable_data().begin());
  }
  for (const auto& raw : container.tensors) {
    if (!expected.count(raw.name)) throw DataError("unexpected tensor '" + raw.name + "' in checkpoint");
  }
  return model;
}

DType checkpoint_dtype(const std::filesystem::path& path) {
  return decode_header(read_container(path, kMagic)).dtype;
}

template void save_checkpoint(const ViTModel<float>&, const std::filesystem::path&);
template void save_checkpoint(const ViTModel<double>&, const std::filesystem::path&);
template ViTModel<float> load_checkpoint(const std::filesystem::path&);
template ViTModel<double> load_checkpoint(const std::filesystem::path&);

}  // namespace entroprune
