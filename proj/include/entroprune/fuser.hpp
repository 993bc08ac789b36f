// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "entroprune/dataset.hpp"
#include "entroprune/vit.hpp"

namespace entroprune {

template <typename T>
struct FuseOutcome {
  ViTModel<T> model;
  std::vector<int> fused;  // blocks rewritten by this call
  std::vector<std::string> warnings;
};

/// Rewrites every Diluted block into its attention-free Fused form. Throws
/// ModeError naming each Diluted block whose mask is still above 0. A model
/// with nothing to fuse is returned unchanged with a warning.
template <typename T>
FuseOutcome<T> fuse(const ViTModel<T>& model);

struct FusionReport {
  std::vector<int> fused_blocks;  // blocks Fused in the second model only
  std::map<LayerId, double> layer_deviation;  // max |a - b| per tap
  double logit_deviation = 0.0;
  double tolerance = 0.0;
  std::int64_t params_before = 0;
  std::int64_t params_after = 0;
  std::int64_t predicted_delta = 0;  // census prediction for the fused blocks
  bool census_matches = false;
  bool passed = false;
  std::string note;

  std::string to_json() const;
};

/// Compares every tap and the logits of two models over a batch. `a` is the
/// reference (e.g. the M = 0 diluted model) and `b` the candidate.
template <typename T>
FusionReport verify_equivalence(const ViTModel<T>& a, const ViTModel<T>& b, const Tensor<T>& batch, double tolerance);

/// Uniform [0, 1) images shaped for the config.
template <typename T>
Tensor<T> random_images(const ViTConfig& config, int count, std::uint64_t seed);

/// Copy of `host` whose block `index` is replaced by the donor's. Throws
/// DimensionError on mismatched geometry and ModeError for a Fused host slot
/// or a donor block without attention.
template <typename T>
ViTModel<T> transplant(const ViTModel<T>& donor, const ViTModel<T>& host, int index);

struct CompatibilityPoint {
  int block = 0;
  double accuracy = 0.0;
};

/// Accuracy of the hybrid for each transplantable host index.
template <typename T>
std::vector<CompatibilityPoint> compatibility_curve(const ViTModel<T>& donor, const ViTModel<T>& host,
                                                    const LabeledDataset& eval);
std::string compatibility_csv(const std::vector<CompatibilityPoint>& points);

}  // namespace entroprune
