// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include "entroprune/pipeline.hpp"

#include "entroprune/dilution.hpp"
#include "entroprune/errors.hpp"
#include "entroprune/fuser.hpp"

namespace entroprune {

namespace {

void check_shape(const LabeledDataset& d, const ViTConfig& m, const std::string& what) {
  if (d.height != m.image_h || d.width != m.image_w || d.channels != m.channels) {
    throw DataError(what + " images are " + std::to_string(d.height) + "x" + std::to_string(d.width) + "x" +
                    std::to_string(d.channels) + " but the model expects " + std::to_string(m.image_h) + "x" +
                    std::to_string(m.image_w) + "x" + std::to_string(m.channels));
  }
  if (d.num_classes != m.num_classes) {
    throw DataError(what + " has " + std::to_string(d.num_classes) + " classes but the model has " +
                    std::to_string(m.num_classes));
  }
}

}  // namespace

LabeledDataset training_data(const RunConfig& config) {
  auto d = config.data.train_path.empty() ? synthesize(config.data.synth, "train") : load_dataset(config.data.train_path);
  check_shape(d, config.model, "training data");
  return d;
}

LabeledDataset evaluation_data(const RunConfig& config) {
  if (!config.data.eval_path.empty()) {
    auto d = load_dataset(config.data.eval_path);
    check_shape(d, config.model, "evaluation data");
    return d;
  }
  auto spec = config.data.synth;
  spec.seed += 1;
  spec.samples_per_class = config.data.eval_samples_per_class;
  auto d = synthesize(spec, "test");
  check_shape(d, config.model, "evaluation data");
  return d;
}

Probe run_probe(const RunConfig& config, const LabeledDataset& data) {
  return make_probe(data, config.select.probe_size, config.select.probe_batch, config.seed + 7);
}

template <typename T>
SelectionState select_layers(const ViTModel<T>& model, const RunConfig& config, const LabeledDataset& data, int n,
                             std::uint64_t random_seed) {
  const auto& method = config.select.method;
  if (method == "nose") return nose_select(model, n, data, run_probe(config, data), config.select.target);
  if (method == "random") return baseline_selection("random", random_select(model.depth(), n, random_seed), model.depth());
  if (method == "first_n") return baseline_selection("first_n", first_n_select(n, model.depth()), model.depth());
  throw ConfigError("unknown select.method '" + method + "'");
}

TrainConfig dilution_train_config(const RunConfig& config, const std::vector<int>& selected) {
  TrainConfig t = config.train;
  t.epochs = config.dilute.epochs;
  t.optimizer.learning_rate = config.dilute.learning_rate;
  t.optimizer.min_learning_rate = std::min(t.optimizer.min_learning_rate, config.dilute.learning_rate);
  t.optimizer.warmup_steps = config.dilute.warmup_steps;
  t.compensate = config.dilute.compensate;
  t.selected_layers = selected;
  return t;
}

template <typename T>
PruneOutcome<T> dilute_and_fuse(const ViTModel<T>& dense, const std::vector<int>& selected, const RunConfig& config,
                                const LabeledDataset& data) {
  const auto tc = dilution_train_config(config, selected);
  const std::int64_t steps_per_epoch = (data.size() + tc.batch_size - 1) / tc.batch_size;
  ViTModel<T> diluted = dense;
  auto log = train_dilute(diluted, tc, config.dilute.schedule_for(steps_per_epoch), data);
  auto fused = fuse(diluted);
  return {std::move(diluted), std::move(fused.model), std::move(log)};
}

template SelectionState select_layers(const ViTModel<float>&, const RunConfig&, const LabeledDataset&, int,
                                      std::uint64_t);
template SelectionState select_layers(const ViTModel<double>&, const RunConfig&, const LabeledDataset&, int,
                                      std::uint64_t);
template PruneOutcome<float> dilute_and_fuse(const ViTModel<float>&, const std::vector<int>&, const RunConfig&,
                                             const LabeledDataset&);
template PruneOutcome<double> dilute_and_fuse(const ViTModel<double>&, const std::vector<int>&, const RunConfig&,
                                              const LabeledDataset&);

}  // namespace entroprune
