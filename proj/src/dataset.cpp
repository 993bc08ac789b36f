// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include "entroprune/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "entroprune/errors.hpp"
#include "entroprune/serialization.hpp"
#include "entroprune/util.hpp"

namespace entroprune {

namespace {

constexpr std::uint32_t kVersion = 1;

struct Grating {
  double angle;
  double frequency;  // cycles per pixel
};

constexpr int kGratings = 4;
constexpr double kPhaseJitter = 1.0;  // radians, peak to peak

Grating grating(int g) {
  return {g * std::numbers::pi / kGratings, (g % 2 == 0) ? 0.22 : 0.31};
}

// Ordered pairs (a, b) with a != b: each half alone leaves the class ambiguous.
std::pair<int, int> class_halves(int label) {
  int k = 0;
  for (int a = 0; a < kGratings; ++a) {
    for (int b = 0; b < kGratings; ++b) {
      if (a == b) continue;
      if (k++ == label) return {a, b};
    }
  }
  throw ConfigError("synth: class index " + std::to_string(label) + " has no texture pair");
}

}  // namespace

void LabeledDataset::validate() const {
  if (height < 1 || width < 1 || channels < 1 || num_classes < 1) throw DataError("dataset has empty geometry");
  if (images.size() != static_cast<std::size_t>(size() * image_numel())) {
    throw DataError("dataset image buffer holds " + std::to_string(images.size()) + " values, expected " +
                    std::to_string(size() * image_numel()));
  }
  for (auto l : labels) {
    if (l >= static_cast<std::uint32_t>(num_classes)) {
      throw DataError("label " + std::to_string(l) + " outside " + std::to_string(num_classes) + " classes");
    }
  }
}

template <typename T>
Tensor<T> LabeledDataset::images_at(std::span<const std::int64_t> indices) const {
  const auto n = image_numel();
  std::vector<T> out(static_cast<std::size_t>(n) * indices.size());
  auto dst = out.begin();
  for (auto i : indices) {
    if (i < 0 || i >= size()) throw std::out_of_range("sample index " + std::to_string(i));
    const auto src = images.begin() + i * n;
    dst = std::transform(src, src + n, dst, [](float v) { return static_cast<T>(v); });
  }
  return Tensor<T>({static_cast<std::int64_t>(indices.size()), height, width, channels}, std::move(out));
}

std::vector<int> LabeledDataset::labels_at(std::span<const std::int64_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) {
    if (i < 0 || i >= size()) throw std::out_of_range("sample index " + std::to_string(i));
    out.push_back(static_cast<int>(labels[static_cast<std::size_t>(i)]));
  }
  return out;
}

LabeledDataset LabeledDataset::subset(std::span<const std::int64_t> indices) const {
  LabeledDataset out;
  out.height = height;
  out.width = width;
  out.channels = channels;
  out.num_classes = num_classes;
  out.split = split;
  const auto n = image_numel();
  for (auto i : indices) {
    if (i < 0 || i >= size()) throw std::out_of_range("sample index " + std::to_string(i));
    out.images.insert(out.images.end(), images.begin() + i * n, images.begin() + (i + 1) * n);
    out.labels.push_back(labels[static_cast<std::size_t>(i)]);
  }
  return out;
}

template Tensor<float> LabeledDataset::images_at(std::span<const std::int64_t>) const;
template Tensor<double> LabeledDataset::images_at(std::span<const std::int64_t>) const;

std::vector<std::int64_t> index_range(std::int64_t start, std::int64_t count) {
  std::vector<std::int64_t> out(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = start + static_cast<std::int64_t>(i);
  return out;
}

void SynthSpec::validate() const {
  if (num_classes < 2 || num_classes > kGratings * (kGratings - 1)) {
    throw ConfigError("synth: classes must lie in [2, " + std::to_string(kGratings * (kGratings - 1)) + "]");
  }
  if (samples_per_class < 1) throw ConfigError("synth: samples_per_class must be positive");
  if (image_h < 2 || image_w < 2 || image_h > 65535 || image_w > 65535) throw ConfigError("synth: bad image size");
  if (channels < 1 || channels > 16) throw ConfigError("synth: channels must lie in [1, 16]");
  if (!(noise >= 0.0)) throw ConfigError("synth: noise must be non-negative");
}

LabeledDataset synthesize(const SynthSpec& spec, std::string split) {
  spec.validate();
  LabeledDataset d;
  d.height = spec.image_h;
  d.width = spec.image_w;
  d.channels = spec.channels;
  d.num_classes = spec.num_classes;
  d.split = std::move(split);
  const auto total = static_cast<std::int64_t>(spec.num_classes) * spec.samples_per_class;
  d.images.resize(static_cast<std::size_t>(total * d.image_numel()));
  d.labels.resize(static_cast<std::size_t>(total));
  Rng rng(derive_seed(spec.seed, 0xDA7A));
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> colour(static_cast<std::size_t>(spec.channels));
  for (std::int64_t s = 0; s < total; ++s) {
    const int label = static_cast<int>(s % spec.num_classes);
    d.labels[static_cast<std::size_t>(s)] = static_cast<std::uint32_t>(label);
    const auto [left, right] = class_halves(label);
    const Grating g[2] = {grating(left), grating(right)};
    const double phase[2] = {kPhaseJitter * (rng.uniform() - 0.5), kPhaseJitter * (rng.uniform() - 0.5)};
    for (auto& c : colour) c = 0.5 + 0.5 * rng.uniform();
    float* px = d.images.data() + s * d.image_numel();
    for (int y = 0; y < spec.image_h; ++y) {
      for (int x = 0; x < spec.image_w; ++x) {
        const int half = (2 * x < spec.image_w) ? 0 : 1;
        const double u = x * std::cos(g[half].angle) + y * std::sin(g[half].angle);
        const double wave = std::sin(two_pi * g[half].frequency * u + phase[half]);
        for (int c = 0; c < spec.channels; ++c) {
          const double v = 0.5 + 0.35 * colour[static_cast<std::size_t>(c)] * wave + spec.noise * rng.normal();
          *px++ = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  return d;
}

void save_dataset(const LabeledDataset& data, const std::filesystem::path& path) {
  data.validate();
  auto u16 = [](int v, const char* what) {
    if (v < 0 || v > 65535) throw DataError(std::string("dataset ") + what + " does not fit in u16");
    return static_cast<std::uint16_t>(v);
  };
  ByteWriter w;
  w.bytes(std::as_bytes(std::span("ELTD", 4)));
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(data.size()));
  w.u16(u16(data.height, "height"));
  w.u16(u16(data.width, "width"));
  w.u16(u16(data.channels, "channels"));
  w.u16(u16(data.num_classes, "classes"));
  for (float v : data.images) w.f32(v);
  for (auto l : data.labels) w.u32(l);
  write_file_bytes(path, w.buffer());
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  if (bytes.size() < 4) throw DataError(path.string() + ": too short for a dataset");
  auto magic = r.bytes(4);
  if (std::string(reinterpret_cast<const char*>(magic.data()), 4) != "ELTD") {
    throw DataError(path.string() + ": format error, not an ELTD dataset");
  }
  const auto version = r.u32();
  if (version != kVersion) throw DataError(path.string() + ": unsupported dataset version " + std::to_string(version));
  LabeledDataset d;
  const auto n = r.u32();
  d.height = r.u16();
  d.width = r.u16();
  d.channels = r.u16();
  d.num_classes = r.u16();
  d.split = path.stem().string();
  const auto values = static_cast<std::uint64_t>(n) * d.image_numel();
  if (values * 4 + static_cast<std::uint64_t>(n) * 4 != r.remaining()) {
    throw DataError(path.string() + ": truncated or oversized dataset body");
  }
  d.images.resize(static_cast<std::size_t>(values));
  for (auto& v : d.images) v = r.f32();
  d.labels.resize(n);
  for (auto& l : d.labels) l = r.u32();
  d.validate();
  return d;
}

}  // namespace entroprune
