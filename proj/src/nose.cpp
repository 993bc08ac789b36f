// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include "entroprune/nose.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "entroprune/errors.hpp"
#include "entroprune/util.hpp"

namespace entroprune {

using nlohmann::json;

const char* te_target_name(TeTarget target) { return target == TeTarget::kLastBlock ? "last_block" : "logits"; }

TeTarget parse_te_target(const std::string& name) {
  if (name == "last_block") return TeTarget::kLastBlock;
  if (name == "logits") return TeTarget::kLogits;
  throw ConfigError("unknown TE target '" + name + "' (expected last_block or logits)");
}

template <typename T>
TransferEntropyProbe<T>::TransferEntropyProbe(const ViTModel<T>& model, const LabeledDataset& data, Probe probe,
                                              TeTarget target)
    : model_(&model), data_(&data), probe_(std::move(probe)), target_(target) {
  baseline_ = target_entropy({});
}

template <typename T>
double TransferEntropyProbe<T>::target_entropy(const std::set<int>& masked) const {
  if (target_ == TeTarget::kLogits) {
    ChannelAccumulator logits;
    accumulate_features(*model_, *data_, probe_, {}, masked, &logits);
    return layer_entropy(logits.sigma());
  }
  const LayerId tap{model_->depth() - 1, LayerKind::kMlp};
  const auto acc = accumulate_features(*model_, *data_, probe_, {tap}, masked);
  return layer_entropy(acc.at(tap).sigma());
}

template <typename T>
TEMeasurement TransferEntropyProbe<T>::measure(const std::set<int>& masked) const {
  TEMeasurement m;
  m.masked = masked;
  m.baseline = baseline_;
  m.conditional = target_entropy(masked);
  m.te = std::abs(m.baseline - m.conditional);
  return m;
}

template <typename T>
TEMeasurement transfer_entropy(const ViTModel<T>& model, const std::set<int>& masked, const LabeledDataset& data,
                               const Probe& probe, TeTarget target) {
  return TransferEntropyProbe<T>(model, data, probe, target).measure(masked);
}

std::string SelectionState::to_json() const {
  json j;
  j["method"] = method;
  j["selected"] = selected;
  j["candidates"] = std::vector<int>(candidates.begin(), candidates.end());
  j["baseline_entropy"] = baseline;
  j["target"] = target;
  j["probe"] = {{"dataset", probe.dataset_id},
                {"batch_size", probe.batch_size},
                {"seed", probe.seed},
                {"samples", probe.indices.size()},
                {"indices", probe.indices}};
  j["trace"] = json::array();
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const auto& s = trace[k];
    double lo = 0.0, hi = 0.0;
    if (!s.te.empty()) {
      const auto [mn, mx] = std::minmax_element(s.te.begin(), s.te.end(),
                                                [](const auto& a, const auto& b) { return a.second < b.second; });
      lo = mn->second;
      hi = mx->second;
    }
    json te = json::object(), norm = json::object();
    for (const auto& [i, v] : s.te) {
      te[std::to_string(i)] = v;
      norm[std::to_string(i)] = hi > lo ? (v - lo) / (hi - lo) : 0.0;
    }
    j["trace"].push_back({{"step", k}, {"chosen", s.chosen}, {"te", te}, {"te_normalized", norm}});
  }
  return j.dump(2);
}

SelectionState SelectionState::from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    SelectionState s;
    s.method = j.at("method").get<std::string>();
    s.selected = j.at("selected").get<std::vector<int>>();
    const auto c = j.at("candidates").get<std::vector<int>>();
    s.candidates = {c.begin(), c.end()};
    s.baseline = j.at("baseline_entropy").get<double>();
    s.target = j.at("target").get<std::string>();
    s.probe.dataset_id = j.at("probe").at("dataset").get<std::string>();
    s.probe.batch_size = j.at("probe").at("batch_size").get<int>();
    s.probe.seed = j.at("probe").at("seed").get<std::uint64_t>();
    s.probe.indices = j.at("probe").at("indices").get<std::vector<std::int64_t>>();
    for (const auto& step : j.at("trace")) {
      SelectionStep st;
      st.chosen = step.at("chosen").get<int>();
      for (const auto& [k, v] : step.at("te").items()) st.te[std::stoi(k)] = v.get<double>();
      s.trace.push_back(std::move(st));
    }
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("selection report: ") + e.what());
  }
}

std::string SelectionState::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "step,candidate,te,chosen\n";
  for (std::size_t k = 0; k < trace.size(); ++k) {
    for (const auto& [i, v] : trace[k].te) out << k << ',' << i << ',' << v << ',' << (i == trace[k].chosen) << '\n';
  }
  return out.str();
}

template <typename T>
SelectionState nose_select(const ViTModel<T>& model, int n, const LabeledDataset& data, const Probe& probe,
                           TeTarget target) {
  const int depth = model.depth();
  if (n < 0 || n > depth) {
    throw std::invalid_argument("cannot select " + std::to_string(n) + " of " + std::to_string(depth) + " layers");
  }
  TransferEntropyProbe<T> te(model, data, probe, target);
  SelectionState s;
  s.method = "nose";
  s.baseline = te.baseline();
  s.target = te_target_name(target);
  s.probe = probe;
  for (int i = 0; i < depth; ++i) s.candidates.insert(i);
  for (int step = 0; step < n; ++step) {
    const std::vector<int> cands(s.candidates.begin(), s.candidates.end());
    std::vector<double> values(cands.size());
    parallel_for(cands.size(), [&](std::size_t k) {
      auto masked = s.selected_set();
      masked.insert(cands[k]);
      values[k] = te.measure(masked).te;
    });
    SelectionStep st;
    std::size_t best = 0;
    for (std::size_t k = 0; k < cands.size(); ++k) {
      st.te[cands[k]] = values[k];
      if (values[k] < values[best]) best = k;  // strict: ascending order keeps the lowest index on ties
    }
    st.chosen = cands[best];
    s.selected.push_back(st.chosen);
    s.candidates.erase(st.chosen);
    s.trace.push_back(std::move(st));
  }
  return s;
}

std::vector<int> random_select(int depth, int n, std::uint64_t seed) {
  if (n < 0 || n > depth) {
    throw std::invalid_argument("cannot select " + std::to_string(n) + " of " + std::to_string(depth) + " layers");
  }
  Rng rng(derive_seed(seed, 0x5E1EC7));
  return rng.sample_without_replacement(depth, n);
}

std::vector<int> first_n_select(int n, int depth) {
  if (n < 0 || n > depth) {
    throw std::invalid_argument("cannot select " + std::to_string(n) + " of " + std::to_string(depth) + " layers");
  }
  std::vector<int> out(static_cast<std::size_t>(n));
  std::iota(out.begin(), out.end(), 0);
  return out;
}

int removal_count(double ratio, int depth) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("removal ratio must lie in (0, 1]");
  return static_cast<int>(std::lround(ratio * depth));
}

SelectionState baseline_selection(std::string method, std::vector<int> picked, int depth) {
  SelectionState s;
  s.method = std::move(method);
  s.target = "none";
  for (int i = 0; i < depth; ++i) s.candidates.insert(i);
  for (int i : picked) s.candidates.erase(i);
  s.selected = std::move(picked);
  return s;
}

template <typename T>
double remained_performance(const ViTModel<T>& model, const std::set<int>& masked, const LabeledDataset& eval) {
  return evaluate(model, eval, 256, masked).top1;
}

namespace {

std::pair<double, double> mean_var(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, v.size() > 1 ? var / (n - 1.0) : 0.0};
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

template <typename T>
std::vector<MaskingRow> masking_study(const ViTModel<T>& model, const std::vector<int>& counts, int repeats,
                                      std::uint64_t seed, const LabeledDataset& eval, const LabeledDataset& probe_data,
                                      const Probe& probe, TeTarget target) {
  if (repeats < 2) throw std::invalid_argument("masking study needs at least 2 repeats");
  TransferEntropyProbe<T> te(model, probe_data, probe, target);
  std::vector<MaskingRow> rows;
  for (int count : counts) {
    std::vector<double> acc(static_cast<std::size_t>(repeats)), tes(static_cast<std::size_t>(repeats));
    parallel_for(static_cast<std::size_t>(repeats), [&](std::size_t r) {
      const auto picked = random_select(model.depth(), count, derive_seed(seed, static_cast<std::uint64_t>(count) * 100003 + r));
      const std::set<int> masked(picked.begin(), picked.end());
      acc[r] = remained_performance(model, masked, eval);
      tes[r] = te.measure(masked).te;
    });
    MaskingRow row;
    row.count = count;
    row.repeats = repeats;
    std::tie(row.accuracy_mean, row.accuracy_var) = mean_var(acc);
    std::tie(row.te_mean, row.te_var) = mean_var(tes);
    rows.push_back(row);
  }
  return rows;
}

std::string masking_table_csv(const std::vector<MaskingRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "count,repeats,accuracy_mean,accuracy_var,te_mean,te_var\n";
  for (const auto& r : rows) {
    out << r.count << ',' << r.repeats << ',' << r.accuracy_mean << ',' << r.accuracy_var << ',' << r.te_mean << ','
        << r.te_var << '\n';
  }
  return out.str();
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman needs two equal series of length >= 2");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const auto [mx, vx] = mean_var(rx);
  const auto [my, vy] = mean_var(ry);
  double cov = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) cov += (rx[i] - mx) * (ry[i] - my);
  cov /= static_cast<double>(rx.size() - 1);
  if (vx == 0.0 || vy == 0.0) return 0.0;
  return cov / std::sqrt(vx * vy);
}

#define ENTROPRUNE_NOSE(T)                                                                                          \
  template class TransferEntropyProbe<T>;                                                                           \
  template TEMeasurement transfer_entropy(const ViTModel<T>&, const std::set<int>&, const LabeledDataset&,          \
                                          const Probe&, TeTarget);                                                  \
  template SelectionState nose_select(const ViTModel<T>&, int, const LabeledDataset&, const Probe&, TeTarget);      \
  template double remained_performance(const ViTModel<T>&, const std::set<int>&, const LabeledDataset&);            \
  template std::vector<MaskingRow> masking_study(const ViTModel<T>&, const std::vector<int>&, int, std::uint64_t,   \
                                                 const LabeledDataset&, const LabeledDataset&, const Probe&, TeTarget);

ENTROPRUNE_NOSE(float)
ENTROPRUNE_NOSE(double)

}  // namespace entroprune
