// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration files. Grammar:
//
//   file    := { line }
//   line    := blank | comment | header | entry
//   comment := '#' ...            (also allowed after a value)
//   header  := '[' name ']'
//   entry   := key '=' value      (inside a section)
//
// Sections and keys are listed in README.md. Unknown sections or keys,
// duplicates, missing required keys and out-of-range values raise
// ConfigError with the offending "section.key" in the message.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "entroprune/dataset.hpp"
#include "entroprune/dilution.hpp"
#include "entroprune/nose.hpp"
#include "entroprune/train.hpp"
#include "entroprune/vit.hpp"

namespace entroprune {

/// section -> key -> raw value, as written.
using ConfigTable = std::map<std::string, std::map<std::string, std::string>>;

/// Syntax-only parse; throws ConfigError with the line number.
ConfigTable parse_config_table(const std::string& text);

struct DataConfig {
  std::filesystem::path train_path;  // empty: synthesize
  std::filesystem::path eval_path;   // empty: synthesize
  SynthSpec synth;                   // training split spec; the eval split uses seed + 1
  int eval_samples_per_class = 100;
};

struct DiluteConfig {
  ScheduleKind schedule = ScheduleKind::kLinear;
  std::optional<std::int64_t> total;  // T; unset means t_fraction of the run
  double t_fraction = 0.6;
  Granularity granularity = Granularity::kPerIteration;
  bool compensate = true;
  int epochs = 1;
  double learning_rate = 5e-4;
  std::int64_t warmup_steps = 0;

  /// T for a run of `epochs` epochs with `steps_per_epoch` iterations each.
  MaskSchedule schedule_for(std::int64_t steps_per_epoch) const;
};

struct SelectConfig {
  std::string method = "nose";  // nose | random | first_n
  std::optional<int> count;     // N; unset means round(ratio * depth)
  double ratio = 0.4;
  std::int64_t probe_size = 1024;
  int probe_batch = 64;
  TeTarget target = TeTarget::kLastBlock;
};

/// Training defaults for the synthetic benchmark: batch 32, lr 2e-3, 60 warmup steps.
TrainConfig default_run_train_config();

struct RunConfig {
  ViTConfig model;
  DataConfig data;
  TrainConfig train = default_run_train_config();
  DiluteConfig dilute;
  SelectConfig select;
  std::filesystem::path out_dir = ".";
  std::uint64_t seed = 0;

  RunConfig() { apply_seed(0); }

  int removal_n() const;
  /// Re-seeds every consumer from one run seed.
  void apply_seed(std::uint64_t run_seed);

  /// Parses and validates. Relative paths resolve against `base_dir` and
  /// dataset paths must exist.
  static RunConfig parse(const std::string& text, const std::filesystem::path& base_dir = ".");
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace entroprune
