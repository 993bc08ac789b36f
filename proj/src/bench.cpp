// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include "entroprune/bench.hpp"

#include <algorithm>
#include <chrono>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "entroprune/fuser.hpp"

namespace entroprune {

std::int64_t activation_scalars_per_image(const ViTConfig& c, const std::set<int>& fused) {
  const std::int64_t n = c.seq_len(), d = c.embed_dim, h = c.heads, m = c.mlp_hidden();
  const std::int64_t attention = n * d * 6 + 2 * h * n * n;
  const std::int64_t rest = n * d + (n * d * 3 + 2 * n * m);
  std::int64_t total = n * d + n * d + c.num_classes;
  for (int b = 0; b < c.depth; ++b) total += rest + (fused.count(b) ? 0 : attention);
  return total;
}

std::int64_t memory_bound(std::int64_t budget_bytes, std::int64_t param_bytes, std::int64_t activation_bytes) {
  if (activation_bytes <= 0) throw std::invalid_argument("activation footprint must be positive");
  if (param_bytes >= budget_bytes) return 0;
  return (budget_bytes - param_bytes) / activation_bytes;
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(v.begin(), v.end());
  const auto k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

std::string BenchResult::to_json() const {
  nlohmann::json j;
  j["batch"] = batch;
  j["warmup"] = warmup;
  j["reps"] = seconds.size();
  j["seconds"] = seconds;
  j["median_seconds"] = median_seconds;
  j["throughput_images_per_s"] = throughput;
  j["parameters"] = parameters;
  j["param_bytes"] = param_bytes;
  j["activation_bytes_per_image"] = activation_bytes_per_image;
  j["budget_bytes"] = budget_bytes;
  j["memory_bound_images"] = memory_bound;
  j["fused_blocks"] = fused_blocks;
  return j.dump(2);
}

std::string BenchResult::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "rep,seconds,images_per_s\n";
  for (std::size_t i = 0; i < seconds.size(); ++i) out << i << ',' << seconds[i] << ',' << batch / seconds[i] << '\n';
  return out.str();
}

template <typename T>
BenchResult bench(const ViTModel<T>& model, int batch, int reps, int warmup, std::int64_t budget_bytes,
                  std::uint64_t seed) {
  if (reps < 3) throw std::invalid_argument("bench needs at least 3 timed repetitions");
  if (batch < 1) throw std::invalid_argument("bench batch must be positive");
  if (warmup < 0) throw std::invalid_argument("bench warmup must be non-negative");
  const auto images = random_images<T>(model.config(), batch, seed);
  NoGradGuard guard;
  for (int i = 0; i < warmup; ++i) (void)model.forward(images);
  BenchResult r;
  r.batch = batch;
  r.warmup = warmup;
  for (int i = 0; i < reps; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const auto out = model.forward(images);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
    (void)out;
    r.seconds.push_back(dt.count());
  }
  r.median_seconds = median(r.seconds);
  r.throughput = batch / r.median_seconds;
  const auto fused = model.blocks_in_mode(BlockMode::kFused);
  r.fused_blocks.assign(fused.begin(), fused.end());
  r.parameters = model.stored_parameter_count();
  r.param_bytes = r.parameters * static_cast<std::int64_t>(sizeof(T));
  r.activation_bytes_per_image = activation_scalars_per_image(model.config(), fused) * static_cast<std::int64_t>(sizeof(T));
  r.budget_bytes = budget_bytes;
  r.memory_bound = memory_bound(budget_bytes, r.param_bytes, r.activation_bytes_per_image);
  return r;
}

template BenchResult bench(const ViTModel<float>&, int, int, int, std::int64_t, std::uint64_t);
template BenchResult bench(const ViTModel<double>&, int, int, int, std::int64_t, std::uint64_t);

}  // namespace entroprune
