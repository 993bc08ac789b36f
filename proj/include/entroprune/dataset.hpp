// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0
//
// Labelled image sets and the "ELTD" file format:
//
//   char[4] "ELTD", u32 version, u32 N, u16 H, u16 W, u16 C, u16 classes,
//   f32 images[N*H*W*C] (NHWC, values in [0, 1]), u32 labels[N]

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "entroprune/tensor.hpp"

namespace entroprune {

struct LabeledDataset {
  int height = 0;
  int width = 0;
  int channels = 0;
  int num_classes = 0;
  std::string split;
  std::vector<float> images;
  std::vector<std::uint32_t> labels;

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
  std::int64_t image_numel() const { return static_cast<std::int64_t>(height) * width * channels; }
  /// Throws DataError on inconsistent sizes or out-of-range labels.
  void validate() const;

  template <typename T>
  Tensor<T> images_at(std::span<const std::int64_t> indices) const;
  std::vector<int> labels_at(std::span<const std::int64_t> indices) const;
  /// Copy restricted to the given sample indices, in order.
  LabeledDataset subset(std::span<const std::int64_t> indices) const;
};

/// Contiguous index range [start, start + count).
std::vector<std::int64_t> index_range(std::int64_t start, std::int64_t count);

struct SynthSpec {
  int num_classes = 10;
  int samples_per_class = 100;
  int image_h = 16;
  int image_w = 16;
  int channels = 3;
  double noise = 0.45;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Procedural textures. Each class fixes a pair of (orientation, frequency)
/// gratings, one per image half; phase, colour and noise vary per sample.
/// Samples are interleaved by class, so every prefix is close to balanced.
LabeledDataset synthesize(const SynthSpec& spec, std::string split);

void save_dataset(const LabeledDataset& data, const std::filesystem::path& path);
/// The split tag is taken from the file stem.
LabeledDataset load_dataset(const std::filesystem::path& path);

}  // namespace entroprune
