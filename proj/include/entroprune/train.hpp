// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "entroprune/dataset.hpp"
#include "entroprune/vit.hpp"

namespace entroprune {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double min_learning_rate = 1e-5;  // floor of the cosine decay
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.05;  // applied to matrices only
  std::int64_t warmup_steps = 0;  // linear ramp before the cosine decay
  double grad_clip = 1.0;  // global gradient norm cap, 0 disables
};

/// Decoupled weight decay Adam over a fixed parameter list.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<NamedParameter<T>> params, AdamWConfig config);

  /// One update with learning rate `lr` using the gradients currently stored.
  void step(double lr);
  std::int64_t steps() const { return t_; }

 private:
  std::vector<NamedParameter<T>> params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

/// Linear warmup to lr, then lr(t) = min + (lr - min) * (1 + cos(pi t' / total')) / 2
/// where t' and total' count the steps after warmup.
double cosine_learning_rate(const AdamWConfig& config, std::int64_t step, std::int64_t total_steps);

struct TrainConfig {
  AdamWConfig optimizer;
  int epochs = 10;
  int batch_size = 64;
  std::uint64_t seed = 0;
  bool compensate = true;
  std::vector<int> selected_layers;  // dilution targets, empty for plain training

  void validate() const;
};

struct StepRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double mask = 1.0;
  double grad_norm_attn = 0.0;   // over attention parameters of selected blocks
  double grad_norm_other = 0.0;  // over every other parameter
  // Both norms are taken before clipping.
  double lr = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  /// CSV with columns step,loss,M,grad_norm_attn,grad_norm_other,lr.
  std::string to_csv() const;
  static TrainLog from_csv(const std::string& text);
};

/// Called before each step's forward pass with the global step index.
/// Returns the mask value to log for that step.
using StepHook = std::function<double(std::int64_t step)>;

/// Mini-batch AdamW on cross-entropy. Batches follow a per-epoch seeded
/// shuffle. Throws NumericError on a non-finite loss.
template <typename T>
TrainLog train_model(ViTModel<T>& model, const TrainConfig& config, const LabeledDataset& data,
                     const StepHook& before_step = {});

struct EvalResult {
  double top1 = 0.0;
  double top5 = 0.0;
  std::int64_t samples = 0;
};

/// Top-1 / top-5 accuracy with optional measurement masking.
template <typename T>
EvalResult evaluate(const ViTModel<T>& model, const LabeledDataset& data, int batch_size = 256,
                    const std::set<int>& masked = {});

/// Top-k hits of a [B, classes] logit matrix; ties count in favour of the lower class index.
template <typename T>
std::int64_t topk_hits(const Tensor<T>& logits, const std::vector<int>& labels, int k);

}  // namespace entroprune
