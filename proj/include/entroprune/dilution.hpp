// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "entroprune/train.hpp"

namespace entroprune {

enum class ScheduleKind { kLinear, kCosine };
enum class Granularity { kPerIteration, kPerEpoch };

const char* schedule_kind_name(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& name);
const char* granularity_name(Granularity g);
Granularity parse_granularity(const std::string& name);

struct MaskSchedule {
  ScheduleKind kind = ScheduleKind::kLinear;
  std::int64_t total_steps = 0;  // T, counted in the schedule's granularity
  Granularity granularity = Granularity::kPerIteration;
};

/// Linear: max(0, 1 - t/T). Cosine: (1 + cos(pi min(t, T) / T)) / 2.
/// Throws std::invalid_argument for T <= 0 or t < 0.
double mask_value(const MaskSchedule& schedule, std::int64_t t);

/// Switches config.selected_layers to Diluted and trains with the mask
/// decayed after every step (or epoch). T = 0 means M = 0 from the first step.
/// On return every selected block holds M = 0.
template <typename T>
TrainLog train_dilute(ViTModel<T>& model, const TrainConfig& config, const MaskSchedule& schedule,
                      const LabeledDataset& data);

struct StabilityRow {
  std::int64_t step = 0;
  double mask = 0.0;
  double residual_scale = 1.0;  // multiplier on x in f_attn
  double grad_norm_attn = 0.0;
  double grad_norm_other = 0.0;
  double loss = 0.0;
};

struct StabilityReport {
  std::vector<StabilityRow> rows;
  /// Sample variance of (loss[t+1] - loss[t]) / loss[t].
  double relative_loss_variance = 0.0;
  std::string to_csv() const;
};

StabilityReport gradient_stability_report(const TrainLog& log, bool compensate);

}  // namespace entroprune
