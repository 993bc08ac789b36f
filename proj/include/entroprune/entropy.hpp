// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0
//
// Gaussian-surrogate layer entropy. For features F with per-channel standard
// deviation sigma_j, H(F) is proportional to H_sigma(F) = sum_j log sigma_j;
// the additive constants of the Gaussian entropy are dropped.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "entroprune/dataset.hpp"
#include "entroprune/vit.hpp"

namespace entroprune {

inline constexpr double kEntropyEps = 1e-12;

/// Population standard deviation per channel. Every axis but the last is
/// pooled into the sample axis. Throws DimensionError with fewer than 2 samples.
template <typename T>
std::vector<double> channel_std(const Tensor<T>& features);

/// sum_j log(max(sigma_j, eps))
double layer_entropy(std::span<const double> sigma, double eps = kEntropyEps);

/// Streaming per-channel moments. Each added batch is reduced in two passes
/// and merged into the running totals with the pairwise update of Chan et al.
class ChannelAccumulator {
 public:
  ChannelAccumulator() = default;
  explicit ChannelAccumulator(std::int64_t channels);

  template <typename T>
  void add(const Tensor<T>& features);
  void merge(const ChannelAccumulator& other);

  std::int64_t channels() const { return static_cast<std::int64_t>(mean_.size()); }
  std::int64_t count() const { return count_; }
  std::vector<double> sigma() const;

 private:
  std::int64_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

struct ChannelStats {
  LayerId layer;
  std::int64_t channel_count = 0;
  std::vector<double> sigma;
  std::int64_t sample_count = 0;
};

/// A fixed subset of a dataset used for every entropy measurement of a run.
struct Probe {
  std::string dataset_id;
  std::vector<std::int64_t> indices;  // ascending
  int batch_size = 64;
  std::uint64_t seed = 0;
};

/// `size` samples drawn without replacement (all of them when size >= N).
Probe make_probe(const LabeledDataset& data, std::int64_t size, int batch_size, std::uint64_t seed);

struct EntropyEntry {
  LayerId layer;
  double h_sigma = 0.0;
  std::int64_t channels = 0;
  std::int64_t samples = 0;
};

struct EntropyReport {
  std::string dataset_id;
  int batch_size = 0;
  std::uint64_t seed = 0;
  std::int64_t probe_size = 0;
  std::vector<EntropyEntry> entries;  // ordered by (block, kind)

  const EntropyEntry& at(const LayerId& layer) const;
  /// block,kind,H_sigma
  std::string to_csv() const;
  std::string to_json() const;
  static EntropyReport from_json(const std::string& text);
};

/// Per-tap moment accumulators over the probe. `masked` applies measurement
/// masking. When `logits` is given it also receives the head outputs.
template <typename T>
std::map<LayerId, ChannelAccumulator> accumulate_features(const ViTModel<T>& model, const LabeledDataset& data,
                                                          const Probe& probe, const TapSpec& taps,
                                                          const std::set<int>& masked = {},
                                                          ChannelAccumulator* logits = nullptr);

/// H_sigma of every attention and MLP output (or of `taps` when given).
template <typename T>
EntropyReport entropy_profile(const ViTModel<T>& model, const LabeledDataset& data, const Probe& probe,
                              const std::optional<TapSpec>& taps = std::nullopt);

template <typename T>
struct ActivationDump {
  std::string dataset_id;
  int batch_size = 0;
  std::uint64_t seed = 0;
  std::map<LayerId, Tensor<T>> features;  // [N, P + 1, d]
  Tensor<T> logits;                       // [N, classes]
};

/// Writes the probe's captured taps and logits to an "EACT" container.
template <typename T>
void dump_activations(const ViTModel<T>& model, const LabeledDataset& data, const Probe& probe, const TapSpec& taps,
                      const std::filesystem::path& path, const std::set<int>& masked = {});
template <typename T>
ActivationDump<T> load_activations(const std::filesystem::path& path);

}  // namespace entroprune
