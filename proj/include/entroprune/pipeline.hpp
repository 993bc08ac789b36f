// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0
//
// Select -> dilute -> fuse, driven by a RunConfig. Shared by the CLI and the
// acceptance runner so both exercise the same path.

#pragma once

#include <vector>

#include "entroprune/config.hpp"
#include "entroprune/dataset.hpp"
#include "entroprune/entropy.hpp"
#include "entroprune/nose.hpp"
#include "entroprune/train.hpp"
#include "entroprune/vit.hpp"

namespace entroprune {

/// Training split: data.path when set, else synthesized as "train".
LabeledDataset training_data(const RunConfig& config);
/// Held-out split: data.eval_path when set, else synthesized as "test" with seed + 1.
LabeledDataset evaluation_data(const RunConfig& config);

/// Probe over the training data seeded from the run seed.
Probe run_probe(const RunConfig& config, const LabeledDataset& data);

/// Selection by config.select.method; `random_seed` feeds the random baseline.
template <typename T>
SelectionState select_layers(const ViTModel<T>& model, const RunConfig& config, const LabeledDataset& data, int n,
                             std::uint64_t random_seed);

/// TrainConfig for the dilution phase of `selected` blocks.
TrainConfig dilution_train_config(const RunConfig& config, const std::vector<int>& selected);

template <typename T>
struct PruneOutcome {
  ViTModel<T> diluted;
  ViTModel<T> fused;
  TrainLog log;
};

/// Dilutes `selected` on a copy of `dense` under config.dilute, then fuses.
template <typename T>
PruneOutcome<T> dilute_and_fuse(const ViTModel<T>& dense, const std::vector<int>& selected, const RunConfig& config,
                                const LabeledDataset& data);

}  // namespace entroprune
