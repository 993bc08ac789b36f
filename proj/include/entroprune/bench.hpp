// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0
//
// Inference throughput and an analytic memory-bound proxy.
//
// The proxy is max batch B with param_bytes + B * activation_bytes <= budget,
// where activation_bytes counts every intermediate tensor a forward pass
// materialises for one image (nothing is freed early). Per block, with
// N tokens, d channels, h heads and m hidden units:
//
//   attention (Full/Diluted only): LN1 N*d, qkv 3*N*d, scores + softmax
//                                  2*h*N^2, context N*d, proj N*d
//   residual: N*d
//   MLP: LN2 N*d, fc1 + GELU 2*N*m, fc2 N*d, residual N*d
//
// plus the patch tokens (N*d), final norm (N*d) and logits.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "entroprune/vit.hpp"

namespace entroprune {

/// 10 GiB, the budget used when none is given.
inline constexpr std::int64_t kDefaultMemoryBudget = 10LL << 30;

/// Scalars materialised by one forward pass for one image.
std::int64_t activation_scalars_per_image(const ViTConfig& config, const std::set<int>& fused);

/// floor((budget - param_bytes) / activation_bytes), 0 when parameters alone exceed the budget.
std::int64_t memory_bound(std::int64_t budget_bytes, std::int64_t param_bytes, std::int64_t activation_bytes);

struct BenchResult {
  int batch = 0;
  int warmup = 0;
  std::vector<double> seconds;  // one entry per timed repetition
  double median_seconds = 0.0;
  double throughput = 0.0;      // images/s at the median
  std::int64_t parameters = 0;
  std::int64_t param_bytes = 0;
  std::int64_t activation_bytes_per_image = 0;
  std::int64_t budget_bytes = 0;
  std::int64_t memory_bound = 0;
  std::vector<int> fused_blocks;

  std::string to_json() const;
  /// reps,seconds rows
  std::string to_csv() const;
};

double median(std::vector<double> values);

/// Times `reps` forward passes of a random batch after `warmup` discarded ones.
/// Throws std::invalid_argument for reps < 3 or batch < 1.
template <typename T>
BenchResult bench(const ViTModel<T>& model, int batch, int reps, int warmup = 1,
                  std::int64_t budget_bytes = kDefaultMemoryBudget, std::uint64_t seed = 0);

}  // namespace entroprune
