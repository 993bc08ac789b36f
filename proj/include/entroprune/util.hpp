// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded randomness and bounded parallelism shared by every module.

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace entroprune {

/// Mixes a seed with a stream tag so independent consumers get independent streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform();
  double normal();
  /// Normal(0, std) redrawn until it lies within two standard deviations.
  double truncated_normal(double std);
  std::uint64_t below(std::uint64_t n);
  /// Fisher-Yates permutation of 0..n-1.
  std::vector<int> permutation(int n);
  /// k distinct values from 0..n-1, sorted ascending.
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  std::mt19937_64 engine_;
};

/// Upper bound on worker threads: ENTROPRUNE_THREADS when set, else hardware concurrency.
int thread_cap();

/// Runs fn(0..n-1) on at most thread_cap() threads. Results must be written
/// to per-index slots so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace entroprune
