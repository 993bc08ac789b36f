// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include "entroprune/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <sstream>

#include "entroprune/errors.hpp"
#include "entroprune/serialization.hpp"
#include "entroprune/util.hpp"

namespace entroprune {

using nlohmann::json;

ChannelAccumulator::ChannelAccumulator(std::int64_t channels)
    : mean_(static_cast<std::size_t>(channels), 0.0), m2_(static_cast<std::size_t>(channels), 0.0) {}

template <typename T>
void ChannelAccumulator::add(const Tensor<T>& features) {
  if (features.rank() < 1) throw DimensionError("channel statistics need at least one axis");
  const auto d = features.dim(-1);
  if (mean_.empty() && count_ == 0) {
    mean_.assign(static_cast<std::size_t>(d), 0.0);
    m2_.assign(static_cast<std::size_t>(d), 0.0);
  }
  if (d != channels()) {
    throw DimensionError("feature width " + std::to_string(d) + " differs from accumulator width " +
                         std::to_string(channels()));
  }
  const auto rows = d == 0 ? 0 : features.numel() / d;
  if (rows == 0) return;
  const auto x = features.data();
  ChannelAccumulator batch(d);
  batch.count_ = rows;
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t j = 0; j < d; ++j) batch.mean_[static_cast<std::size_t>(j)] += x[static_cast<std::size_t>(r * d + j)];
  }
  for (auto& m : batch.mean_) m /= static_cast<double>(rows);
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t j = 0; j < d; ++j) {
      const double dev = x[static_cast<std::size_t>(r * d + j)] - batch.mean_[static_cast<std::size_t>(j)];
      batch.m2_[static_cast<std::size_t>(j)] += dev * dev;
    }
  }
  merge(batch);
}

void ChannelAccumulator::merge(const ChannelAccumulator& other) {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  if (other.channels() != channels()) throw DimensionError("cannot merge accumulators of different widths");
  const double na = static_cast<double>(count_), nb = static_cast<double>(other.count_);
  const double n = na + nb;
  for (std::size_t j = 0; j < mean_.size(); ++j) {
    const double delta = other.mean_[j] - mean_[j];
    mean_[j] += delta * nb / n;
    m2_[j] += other.m2_[j] + delta * delta * na * nb / n;
  }
  count_ += other.count_;
}

std::vector<double> ChannelAccumulator::sigma() const {
  if (count_ < 2) throw DimensionError("standard deviation needs at least 2 samples, have " + std::to_string(count_));
  std::vector<double> out(m2_.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = std::sqrt(std::max(0.0, m2_[j] / static_cast<double>(count_)));
  return out;
}

template <typename T>
std::vector<double> channel_std(const Tensor<T>& features) {
  ChannelAccumulator acc;
  acc.add(features);
  return acc.sigma();
}

double layer_entropy(std::span<const double> sigma, double eps) {
  double h = 0.0;
  for (double s : sigma) {
    if (s < 0.0 || std::isnan(s)) throw std::invalid_argument("standard deviations must be non-negative");
    h += std::log(std::max(s, eps));
  }
  return h;
}

Probe make_probe(const LabeledDataset& data, std::int64_t size, int batch_size, std::uint64_t seed) {
  if (size < 1) throw ConfigError("probe size must be positive");
  if (batch_size < 1) throw ConfigError("probe batch size must be positive");
  if (data.size() == 0) throw DataError("probe dataset is empty");
  Probe p;
  p.dataset_id = data.split;
  p.batch_size = batch_size;
  p.seed = seed;
  if (size >= data.size()) {
    p.indices = index_range(0, data.size());
  } else {
    Rng rng(derive_seed(seed, 0x9E0B));
    for (int i : rng.sample_without_replacement(static_cast<int>(data.size()), static_cast<int>(size))) {
      p.indices.push_back(i);
    }
  }
  return p;
}

const EntropyEntry& EntropyReport::at(const LayerId& layer) const {
  for (const auto& e : entries) {
    if (e.layer == layer) return e;
  }
  throw std::out_of_range("entropy report has no entry for " + layer.name());
}

namespace {

const char* kind_name(LayerKind kind) { return kind == LayerKind::kAttention ? "attn" : "mlp"; }

LayerKind parse_kind(const std::string& s) {
  if (s == "attn") return LayerKind::kAttention;
  if (s == "mlp") return LayerKind::kMlp;
  throw DataError("unknown layer kind '" + s + "'");
}

}  // namespace

std::string EntropyReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "block,kind,H_sigma\n";
  for (const auto& e : entries) out << e.layer.block << ',' << kind_name(e.layer.kind) << ',' << e.h_sigma << '\n';
  return out.str();
}

std::string EntropyReport::to_json() const {
  json j;
  j["probe"] = {{"dataset", dataset_id}, {"batch_size", batch_size}, {"seed", seed}, {"samples", probe_size}};
  j["layers"] = json::array();
  for (const auto& e : entries) {
    j["layers"].push_back({{"block", e.layer.block},
                           {"kind", kind_name(e.layer.kind)},
                           {"H_sigma", e.h_sigma},
                           {"channels", e.channels},
                           {"samples", e.samples}});
  }
  return j.dump(2);
}

EntropyReport EntropyReport::from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    EntropyReport r;
    r.dataset_id = j.at("probe").at("dataset").get<std::string>();
    r.batch_size = j.at("probe").at("batch_size").get<int>();
    r.seed = j.at("probe").at("seed").get<std::uint64_t>();
    r.probe_size = j.at("probe").at("samples").get<std::int64_t>();
    for (const auto& l : j.at("layers")) {
      EntropyEntry e;
      e.layer = {l.at("block").get<int>(), parse_kind(l.at("kind").get<std::string>())};
      e.h_sigma = l.at("H_sigma").get<double>();
      e.channels = l.at("channels").get<std::int64_t>();
      e.samples = l.at("samples").get<std::int64_t>();
      r.entries.push_back(e);
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("entropy report: ") + e.what());
  }
}

template <typename T>
std::map<LayerId, ChannelAccumulator> accumulate_features(const ViTModel<T>& model, const LabeledDataset& data,
                                                          const Probe& probe, const TapSpec& taps,
                                                          const std::set<int>& masked, ChannelAccumulator* logits) {
  if (probe.indices.empty()) throw DataError("probe is empty");
  if (probe.batch_size < 1) throw ConfigError("probe batch size must be positive");
  NoGradGuard guard;
  ForwardOptions opts{taps, masked};
  std::map<LayerId, ChannelAccumulator> out;
  for (std::size_t start = 0; start < probe.indices.size(); start += static_cast<std::size_t>(probe.batch_size)) {
    const auto count = std::min(static_cast<std::size_t>(probe.batch_size), probe.indices.size() - start);
    const std::span<const std::int64_t> idx(probe.indices.data() + start, count);
    const auto result = model.forward(data.images_at<T>(idx), opts);
    for (const auto& [id, t] : result.captures) out[id].add(t);
    if (logits) logits->add(result.logits);
  }
  return out;
}

template <typename T>
EntropyReport entropy_profile(const ViTModel<T>& model, const LabeledDataset& data, const Probe& probe,
                              const std::optional<TapSpec>& taps) {
  const TapSpec spec = taps ? *taps : all_taps(model.depth());
  const auto acc = accumulate_features(model, data, probe, spec);
  EntropyReport r;
  r.dataset_id = probe.dataset_id;
  r.batch_size = probe.batch_size;
  r.seed = probe.seed;
  r.probe_size = static_cast<std::int64_t>(probe.indices.size());
  for (const auto& [id, a] : acc) {
    const auto sigma = a.sigma();
    r.entries.push_back({id, layer_entropy(sigma), a.channels(), a.count()});
  }
  return r;
}

namespace {

constexpr const char* kDumpMagic = "EACT";

template <typename T>
Tensor<T> stack_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.size() == 1) return parts.front().detach();
  return concat(parts, 0).detach();
}

}  // namespace

template <typename T>
void dump_activations(const ViTModel<T>& model, const LabeledDataset& data, const Probe& probe, const TapSpec& taps,
                      const std::filesystem::path& path, const std::set<int>& masked) {
  if (probe.indices.empty()) throw DataError("probe is empty");
  NoGradGuard guard;
  ForwardOptions opts{taps, masked};
  std::map<LayerId, std::vector<Tensor<T>>> parts;
  std::vector<Tensor<T>> logits;
  for (std::size_t start = 0; start < probe.indices.size(); start += static_cast<std::size_t>(probe.batch_size)) {
    const auto count = std::min(static_cast<std::size_t>(probe.batch_size), probe.indices.size() - start);
    const std::span<const std::int64_t> idx(probe.indices.data() + start, count);
    auto result = model.forward(data.images_at<T>(idx), opts);
    for (auto& [id, t] : result.captures) parts[id].push_back(t);
    logits.push_back(result.logits);
  }
  TensorContainer c;
  c.magic = kDumpMagic;
  const auto meta =
      json{{"dataset", probe.dataset_id}, {"batch_size", probe.batch_size}, {"seed", probe.seed}}.dump();
  const auto meta_bytes = std::as_bytes(std::span(meta.data(), meta.size()));
  c.header.assign(meta_bytes.begin(), meta_bytes.end());
  for (const auto& [id, p] : parts) c.tensors.push_back(RawTensor::from(id.name(), stack_rows(p)));
  c.tensors.push_back(RawTensor::from("logits", stack_rows(logits)));
  write_container(path, c);
}

template <typename T>
ActivationDump<T> load_activations(const std::filesystem::path& path) {
  const auto c = read_container(path, kDumpMagic);
  if (c.version != 1) throw DataError("unsupported activation dump version " + std::to_string(c.version));
  ActivationDump<T> d;
  try {
    const auto meta = json::parse(std::string(reinterpret_cast<const char*>(c.header.data()), c.header.size()));
    d.dataset_id = meta.at("dataset").get<std::string>();
    d.batch_size = meta.at("batch_size").get<int>();
    d.seed = meta.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw DataError(std::string("activation dump metadata: ") + e.what());
  }
  for (const auto& t : c.tensors) {
    if (t.name == "logits") {
      d.logits = t.to_tensor<T>();
    } else {
      try {
        d.features.emplace(LayerId::parse(t.name), t.to_tensor<T>());
      } catch (const std::invalid_argument&) {
        throw DataError("activation dump holds unknown tensor '" + t.name + "'");
      }
    }
  }
  if (!d.logits.defined()) throw DataError("activation dump has no logits");
  return d;
}

template void ChannelAccumulator::add(const Tensor<float>&);
template void ChannelAccumulator::add(const Tensor<double>&);
template std::vector<double> channel_std(const Tensor<float>&);
template std::vector<double> channel_std(const Tensor<double>&);

#define ENTROPRUNE_ENTROPY(T)                                                                                       \
  template std::map<LayerId, ChannelAccumulator> accumulate_features(const ViTModel<T>&, const LabeledDataset&,   \
                                                                     const Probe&, const TapSpec&,                \
                                                                     const std::set<int>&, ChannelAccumulator*);  \
  template EntropyReport entropy_profile(const ViTModel<T>&, const LabeledDataset&, const Probe&,                 \
                                         const std::optional<TapSpec>&);                                          \
  template void dump_activations(const ViTModel<T>&, const LabeledDataset&, const Probe&, const TapSpec&,         \
                                 const std::filesystem::path&, const std::set<int>&);                             \
  template ActivationDump<T> load_activations(const std::filesystem::path&);

ENTROPRUNE_ENTROPY(float)
ENTROPRUNE_ENTROPY(double)

}  // namespace entroprune
