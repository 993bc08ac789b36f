// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include "entroprune/fuser.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <sstream>

#include "entroprune/errors.hpp"
#include "entroprune/train.hpp"
#include "entroprune/util.hpp"

namespace entroprune {

using nlohmann::json;

template <typename T>
FuseOutcome<T> fuse(const ViTModel<T>& model) {
  const auto diluted = model.blocks_in_mode(BlockMode::kDiluted);
  std::vector<int> live;
  for (int b : diluted) {
    if (model.block(b).mask > 0.0) live.push_back(b);
  }
  if (!live.empty()) {
    std::string list;
    for (int b : live) list += (list.empty() ? "" : ", ") + std::to_string(b) + " (M=" + std::to_string(model.block(b).mask) + ")";
    throw ModeError("refusing to fuse: blocks still carry a nonzero mask: " + list);
  }
  FuseOutcome<T> out{model, {}, {}};
  if (diluted.empty()) {
    out.warnings.push_back(model.blocks_in_mode(BlockMode::kFused).empty()
                               ? "no diluted blocks; model left unchanged"
                               : "model is already fused; nothing to do");
    return out;
  }
  for (int b : diluted) {
    out.model.convert_to_fused(b);
    out.fused.push_back(b);
  }
  return out;
}

std::string FusionReport::to_json() const {
  json j;
  j["fused_blocks"] = fused_blocks;
  j["tolerance"] = tolerance;
  j["logit_deviation"] = logit_deviation;
  json layers = json::object();
  for (const auto& [id, v] : layer_deviation) layers[id.name()] = v;
  j["layer_deviation"] = layers;
  j["params_before"] = params_before;
  j["params_after"] = params_after;
  j["param_delta"] = params_before - params_after;
  j["predicted_delta"] = predicted_delta;
  j["census_matches"] = census_matches;
  j["passed"] = passed;
  j["note"] = note;
  return j.dump(2);
}

namespace {

template <typename T>
double max_abs_deviation(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = std::abs(static_cast<double>(x[i]) - static_cast<double>(y[i]));
    if (std::isnan(d)) return std::numeric_limits<double>::infinity();
    m = std::max(m, d);
  }
  return m;
}

bool same_geometry(const ViTConfig& a, const ViTConfig& b) {
  auto x = a, y = b;
  x.seed = y.seed = 0;
  return x == y;
}

}  // namespace

template <typename T>
FusionReport verify_equivalence(const ViTModel<T>& a, const ViTModel<T>& b, const Tensor<T>& batch, double tolerance) {
  if (!same_geometry(a.config(), b.config())) throw DimensionError("verify: models have different geometry");
  NoGradGuard guard;
  const auto taps = all_taps(a.depth());
  const auto ra = a.forward(batch, {taps, {}});
  const auto rb = b.forward(batch, {taps, {}});
  FusionReport r;
  r.tolerance = tolerance;
  bool ok = true;
  for (const auto& [id, t] : ra.captures) {
    const double dev = max_abs_deviation(t, rb.captures.at(id));
    r.layer_deviation[id] = dev;
    ok = ok && dev <= tolerance;
  }
  r.logit_deviation = max_abs_deviation(ra.logits, rb.logits);
  ok = ok && r.logit_deviation <= tolerance;
  const auto fused_a = a.blocks_in_mode(BlockMode::kFused);
  const auto fused_b = b.blocks_in_mode(BlockMode::kFused);
  for (int i : fused_b) {
    if (!fused_a.count(i)) r.fused_blocks.push_back(i);
  }
  r.params_before = a.stored_parameter_count();
  r.params_after = b.stored_parameter_count();
  r.predicted_delta = param_count(a.config(), fused_a).total() - param_count(b.config(), fused_b).total();
  r.census_matches = r.params_before - r.params_after == r.predicted_delta;
  r.passed = ok && r.census_matches;
  r.note = "fused blocks drop qkv, proj and the pre-attention norm";
  return r;
}

template <typename T>
Tensor<T> random_images(const ViTConfig& config, int count, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x1AA6E));
  std::vector<T> v(static_cast<std::size_t>(count) * config.image_h * config.image_w * config.channels);
  for (auto& x : v) x = static_cast<T>(rng.uniform());
  return Tensor<T>({count, config.image_h, config.image_w, config.channels}, std::move(v));
}

template <typename T>
ViTModel<T> transplant(const ViTModel<T>& donor, const ViTModel<T>& host, int index) {
  if (!same_geometry(donor.config(), host.config())) throw DimensionError("transplant: donor and host geometry differ");
  if (host.block(index).mode == BlockMode::kFused) {
    throw ModeError("transplant: host block " + std::to_string(index) + " is fused and has no attention slot");
  }
  if (!donor.block(index).attention) {
    throw ModeError("transplant: donor block " + std::to_string(index) + " has no attention layer");
  }
  ViTModel<T> hybrid = host;
  const ViTModel<T> copy = donor;  // private storage for the transplanted tensors
  hybrid.block(index) = copy.block(index);
  return hybrid;
}

template <typename T>
std::vector<CompatibilityPoint> compatibility_curve(const ViTModel<T>& donor, const ViTModel<T>& host,
                                                    const LabeledDataset& eval) {
  std::vector<CompatibilityPoint> out;
  for (int b = 0; b < host.depth(); ++b) {
    if (host.block(b).mode == BlockMode::kFused || !donor.block(b).attention) continue;
    out.push_back({b, evaluate(transplant(donor, host, b), eval).top1});
  }
  return out;
}

std::string compatibility_csv(const std::vector<CompatibilityPoint>& points) {
  std::ostringstream out;
  out.precision(17);
  out << "block,accuracy\n";
  for (const auto& p : points) out << p.block << ',' << p.accuracy << '\n';
  return out.str();
}

#define ENTROPRUNE_FUSER(T)                                                                                       \
  template FuseOutcome<T> fuse(const ViTModel<T>&);                                                               \
  template FusionReport verify_equivalence(const ViTModel<T>&, const ViTModel<T>&, const Tensor<T>&, double);     \
  template Tensor<T> random_images(const ViTConfig&, int, std::uint64_t);                                         \
  template ViTModel<T> transplant(const ViTModel<T>&, const ViTModel<T>&, int);                                   \
  template std::vector<CompatibilityPoint> compatibility_curve(const ViTModel<T>&, const ViTModel<T>&,            \
                                                               const LabeledDataset&);

ENTROPRUNE_FUSER(float)
ENTROPRUNE_FUSER(double)

}  // namespace entroprune
