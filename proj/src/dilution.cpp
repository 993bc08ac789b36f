// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include "entroprune/dilution.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "entroprune/errors.hpp"

namespace entroprune {

const char* schedule_kind_name(ScheduleKind kind) { return kind == ScheduleKind::kLinear ? "linear" : "cosine"; }

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "cosine") return ScheduleKind::kCosine;
  throw ConfigError("unknown schedule '" + name + "' (expected linear or cosine)");
}

const char* granularity_name(Granularity g) { return g == Granularity::kPerIteration ? "iteration" : "epoch"; }

Granularity parse_granularity(const std::string& name) {
  if (name == "iteration") return Granularity::kPerIteration;
  if (name == "epoch") return Granularity::kPerEpoch;
  throw ConfigError("unknown granularity '" + name + "' (expected iteration or epoch)");
}

double mask_value(const MaskSchedule& schedule, std::int64_t t) {
  if (schedule.total_steps <= 0) throw std::invalid_argument("mask schedule needs T > 0");
  if (t < 0) throw std::invalid_argument("mask schedule step must be non-negative");
  if (t >= schedule.total_steps) return 0.0;
  const double frac = static_cast<double>(t) / static_cast<double>(schedule.total_steps);
  if (schedule.kind == ScheduleKind::kLinear) return std::max(0.0, 1.0 - frac);
  return 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

template <typename T>
TrainLog train_dilute(ViTModel<T>& model, const TrainConfig& config, const MaskSchedule& schedule,
                      const LabeledDataset& data) {
  config.validate();
  if (schedule.total_steps < 0) throw ConfigError("dilute.total_steps must be non-negative");
  if (config.selected_layers.empty()) throw ConfigError("dilution needs at least one selected layer");
  const std::int64_t per_epoch = (data.size() + config.batch_size - 1) / config.batch_size;
  const std::int64_t available =
      schedule.granularity == Granularity::kPerIteration ? per_epoch * config.epochs : config.epochs;
  if (schedule.total_steps > available) {
    throw ConfigError("dilute.total_steps " + std::to_string(schedule.total_steps) + " exceeds the " +
                      std::to_string(available) + " " + granularity_name(schedule.granularity) +
                      "s of training");
  }
  for (int b : config.selected_layers) model.block(b);  // range check before any mutation
  for (int b : config.selected_layers) model.begin_dilution(b, config.compensate);

  auto mask_at = [&](std::int64_t t) { return schedule.total_steps == 0 ? 0.0 : mask_value(schedule, t); };
  auto apply = [&](double m) {
    for (int b : config.selected_layers) model.set_mask(b, m);
  };
  auto log = train_model(model, config, data, [&](std::int64_t step) {
    const auto t = schedule.granularity == Granularity::kPerIteration ? step : step / per_epoch;
    const double m = mask_at(t);
    apply(m);
    return m;
  });
  apply(mask_at(available));
  return log;
}

std::string StabilityReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "step,M,residual_scale,grad_norm_attn,grad_norm_other,loss\n";
  for (const auto& r : rows) {
    out << r.step << ',' << r.mask << ',' << r.residual_scale << ',' << r.grad_norm_attn << ',' << r.grad_norm_other
        << ',' << r.loss << '\n';
  }
  return out.str();
}

StabilityReport gradient_stability_report(const TrainLog& log, bool compensate) {
  StabilityReport r;
  for (const auto& s : log.steps) {
    r.rows.push_back({s.step, s.mask, compensate ? 2.0 - s.mask : 1.0, s.grad_norm_attn, s.grad_norm_other, s.loss});
  }
  std::vector<double> rel;
  for (std::size_t i = 1; i < log.steps.size(); ++i) {
    const double prev = log.steps[i - 1].loss;
    if (prev != 0.0) rel.push_back((log.steps[i].loss - prev) / prev);
  }
  if (rel.size() >= 2) {
    double mean = 0.0;
    for (double v : rel) mean += v;
    mean /= static_cast<double>(rel.size());
    double var = 0.0;
    for (double v : rel) var += (v - mean) * (v - mean);
    r.relative_loss_variance = var / static_cast<double>(rel.size() - 1);
  }
  return r;
}

template TrainLog train_dilute(ViTModel<float>&, const TrainConfig&, const MaskSchedule&, const LabeledDataset&);
template TrainLog train_dilute(ViTModel<double>&, const TrainConfig&, const MaskSchedule&, const LabeledDataset&);

}  // namespace entroprune
