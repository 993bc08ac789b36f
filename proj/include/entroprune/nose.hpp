// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0
//
// Transfer entropy from a set of attention layers to the network output, and
// greedy selection of the layers whose joint removal moves that output least.

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "entroprune/entropy.hpp"
#include "entroprune/train.hpp"

namespace entroprune {

/// Feature whose entropy change defines TE: the last block's f_mlp, or the logits.
enum class TeTarget { kLastBlock, kLogits };
const char* te_target_name(TeTarget target);
TeTarget parse_te_target(const std::string& name);

struct TEMeasurement {
  std::set<int> masked;
  double baseline = 0.0;
  double conditional = 0.0;
  double te = 0.0;  // |baseline - conditional|
};

/// Holds the probe and the unmasked target entropy so every candidate is
/// compared against the same baseline.
template <typename T>
class TransferEntropyProbe {
 public:
  TransferEntropyProbe(const ViTModel<T>& model, const LabeledDataset& data, Probe probe,
                       TeTarget target = TeTarget::kLastBlock);

  double baseline() const { return baseline_; }
  const Probe& probe() const { return probe_; }
  TeTarget target() const { return target_; }
  /// Entropy of the target with `masked` attention layers replaced by identity.
  double target_entropy(const std::set<int>& masked) const;
  TEMeasurement measure(const std::set<int>& masked) const;

 private:
  const ViTModel<T>* model_;
  const LabeledDataset* data_;
  Probe probe_;
  TeTarget target_;
  double baseline_ = 0.0;
};

template <typename T>
TEMeasurement transfer_entropy(const ViTModel<T>& model, const std::set<int>& masked, const LabeledDataset& data,
                               const Probe& probe, TeTarget target = TeTarget::kLastBlock);

struct SelectionStep {
  int chosen = -1;
  std::map<int, double> te;  // candidate -> TE(S + {candidate})
};

struct SelectionState {
  std::string method;
  std::vector<int> selected;  // in pick order
  std::set<int> candidates;
  std::vector<SelectionStep> trace;  // empty for baselines
  double baseline = 0.0;
  std::string target;
  Probe probe;

  std::set<int> selected_set() const { return {selected.begin(), selected.end()}; }
  /// Nested report with the per-step trace and its per-row min-max normalisation.
  std::string to_json() const;
  static SelectionState from_json(const std::string& text);
  /// step,candidate,te,chosen
  std::string to_csv() const;
};

/// Greedy argmin of TE(S + {i}) over the remaining candidates, N times.
/// Ties go to the lowest index. Candidate evaluations run in parallel.
template <typename T>
SelectionState nose_select(const ViTModel<T>& model, int n, const LabeledDataset& data, const Probe& probe,
                           TeTarget target = TeTarget::kLastBlock);

/// n distinct indices of 0..depth-1, uniformly at random, ascending.
std::vector<int> random_select(int depth, int n, std::uint64_t seed);
/// {0, ..., n-1}
std::vector<int> first_n_select(int n, int depth);
/// round(ratio * depth) for ratio in (0, 1].
int removal_count(double ratio, int depth);
/// Wraps a baseline pick into a SelectionState with no trace.
SelectionState baseline_selection(std::string method, std::vector<int> picked, int depth);

/// Top-1 accuracy of the model with `masked` attention layers set to identity, no retraining.
template <typename T>
double remained_performance(const ViTModel<T>& model, const std::set<int>& masked, const LabeledDataset& eval);

struct MaskingRow {
  int count = 0;
  int repeats = 0;
  double accuracy_mean = 0.0;
  double accuracy_var = 0.0;  // unbiased over repeats
  double te_mean = 0.0;
  double te_var = 0.0;
};

/// For each count, `repeats` random layer sets are masked; accuracy and TE
/// are summarised per count.
template <typename T>
std::vector<MaskingRow> masking_study(const ViTModel<T>& model, const std::vector<int>& counts, int repeats,
                                      std::uint64_t seed, const LabeledDataset& eval, const LabeledDataset& probe_data,
                                      const Probe& probe, TeTarget target = TeTarget::kLastBlock);
std::string masking_table_csv(const std::vector<MaskingRow>& rows);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace entroprune
