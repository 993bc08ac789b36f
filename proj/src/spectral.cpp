// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0

#include "entroprune/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numbers>
#include <sstream>

#include "entroprune/errors.hpp"

namespace entroprune {

using nlohmann::json;
using cd = std::complex<double>;

namespace {

std::vector<cd> twiddles(int n) {
  std::vector<cd> w(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) w[static_cast<std::size_t>(k)] = std::polar(1.0, -2.0 * std::numbers::pi * k / n);
  return w;
}

double angular(int k, int n) {
  const int s = (2 * k <= n) ? k : k - n;  // signed frequency index
  return 2.0 * std::numbers::pi * std::abs(s) / n;
}

}  // namespace

std::vector<cd> dft2(const std::vector<double>& map, int h, int w) {
  if (h < 1 || w < 1 || map.size() != static_cast<std::size_t>(h) * w) throw DimensionError("dft2: map size mismatch");
  const auto wh = twiddles(h), ww = twiddles(w);
  std::vector<cd> rows(map.size());
  for (int y = 0; y < h; ++y) {
    for (int v = 0; v < w; ++v) {
      cd s = 0.0;
      for (int x = 0; x < w; ++x) s += map[static_cast<std::size_t>(y * w + x)] * ww[static_cast<std::size_t>((v * x) % w)];
      rows[static_cast<std::size_t>(y * w + v)] = s;
    }
  }
  std::vector<cd> out(map.size());
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      cd s = 0.0;
      for (int y = 0; y < h; ++y) s += rows[static_cast<std::size_t>(y * w + v)] * wh[static_cast<std::size_t>((u * y) % h)];
      out[static_cast<std::size_t>(u * w + v)] = s;
    }
  }
  return out;
}

int radial_bin_count(int grid_h, int grid_w) { return (std::max(grid_h, grid_w) + 1) / 2 + 1; }

int radial_bin(int u, int v, int grid_h, int grid_w) {
  const double r = std::max(angular(u, grid_h), angular(v, grid_w));
  const int bins = radial_bin_count(grid_h, grid_w);
  return static_cast<int>(std::lround(r / std::numbers::pi * (bins - 1)));
}

double SpectrumProfile::total_energy() const {
  double s = 0.0;
  for (double e : energy) s += e;
  return s;
}

SpectrumAccumulator::SpectrumAccumulator(int grid_h, int grid_w) : grid_h_(grid_h), grid_w_(grid_w) {
  if (grid_h < 1 || grid_w < 1) throw DimensionError("spectrum grid must be positive");
  const auto bins = static_cast<std::size_t>(radial_bin_count(grid_h, grid_w));
  log_sum_.assign(bins, 0.0);
  energy_.assign(bins, 0.0);
  counts_.assign(bins, 0);
}

template <typename T>
void SpectrumAccumulator::add(const Tensor<T>& features) {
  const std::int64_t patches = static_cast<std::int64_t>(grid_h_) * grid_w_;
  if (features.rank() != 3 || features.dim(1) != patches + 1) {
    throw DimensionError("spectrum: features " + shape_string(features.shape()) + " do not hold 1 + " +
                         std::to_string(grid_h_) + "x" + std::to_string(grid_w_) + " tokens");
  }
  const auto batch = features.dim(0), tokens = features.dim(1), d = features.dim(2);
  const auto x = features.data();
  std::vector<int> bin_of(static_cast<std::size_t>(patches));
  for (int u = 0; u < grid_h_; ++u) {
    for (int v = 0; v < grid_w_; ++v) bin_of[static_cast<std::size_t>(u * grid_w_ + v)] = radial_bin(u, v, grid_h_, grid_w_);
  }
  std::vector<double> map(static_cast<std::size_t>(patches));
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t c = 0; c < d; ++c) {
      for (std::int64_t p = 0; p < patches; ++p) {
        map[static_cast<std::size_t>(p)] = static_cast<double>(x[static_cast<std::size_t>((b * tokens + 1 + p) * d + c)]);
      }
      const auto X = dft2(map, grid_h_, grid_w_);
      for (std::size_t k = 0; k < X.size(); ++k) {
        const auto bin = static_cast<std::size_t>(bin_of[k]);
        const double a = std::abs(X[k]);
        log_sum_[bin] += std::log1p(a);
        energy_[bin] += std::norm(X[k]);
        ++counts_[bin];
      }
    }
  }
}

SpectrumProfile SpectrumAccumulator::profile() const {
  SpectrumProfile p;
  p.grid_h = grid_h_;
  p.grid_w = grid_w_;
  const auto bins = log_sum_.size();
  for (std::size_t i = 0; i < bins; ++i) {
    p.bin_frequency.push_back(bins > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(bins - 1) : 0.0);
    p.log_amplitude.push_back(counts_[i] ? log_sum_[i] / static_cast<double>(counts_[i]) : 0.0);
    p.energy.push_back(energy_[i]);
  }
  return p;
}

template <typename T>
SpectrumProfile block_spectrum(const Tensor<T>& features, int grid_h, int grid_w) {
  SpectrumAccumulator acc(grid_h, grid_w);
  acc.add(features);
  return acc.profile();
}

int frequency_band(double omega) {
  const double pi = std::numbers::pi;
  if (omega < 0.3 * pi) return 0;
  if (omega < 0.7 * pi) return 1;
  return 2;
}

BandEnergy band_energy(const SpectrumProfile& profile) {
  if (profile.energy.size() != profile.bin_frequency.size()) throw DimensionError("profile bins and energies differ");
  BandEnergy e;
  for (std::size_t i = 0; i < profile.energy.size(); ++i) {
    switch (frequency_band(profile.bin_frequency[i])) {
      case 0:
        e.low += profile.energy[i];
        break;
      case 1:
        e.mid += profile.energy[i];
        break;
      default:
        e.high += profile.energy[i];
    }
  }
  return e;
}

std::string SpectrumReport::profile_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "block,bin_freq,log_amplitude\n";
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < b.profile.bin_frequency.size(); ++i) {
      out << b.block << ',' << b.profile.bin_frequency[i] << ',' << b.profile.log_amplitude[i] << '\n';
    }
  }
  return out.str();
}

std::string SpectrumReport::bands_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "block,low,mid,high\n";
  for (const auto& b : blocks) out << b.block << ',' << b.bands.low << ',' << b.bands.mid << ',' << b.bands.high << '\n';
  return out.str();
}

std::string SpectrumReport::to_json() const {
  json j;
  j["probe"] = {{"dataset", dataset_id}, {"samples", probe_size}};
  j["blocks"] = json::array();
  for (const auto& b : blocks) {
    j["blocks"].push_back({{"block", b.block},
                           {"grid", {b.profile.grid_h, b.profile.grid_w}},
                           {"bin_freq", b.profile.bin_frequency},
                           {"log_amplitude", b.profile.log_amplitude},
                           {"energy", b.profile.energy},
                           {"bands", {{"low", b.bands.low}, {"mid", b.bands.mid}, {"high", b.bands.high}}}});
  }
  return j.dump(2);
}

template <typename T>
SpectrumReport spectrum_report(const ViTModel<T>& model, const LabeledDataset& data, const Probe& probe) {
  if (probe.indices.empty()) throw DataError("probe is empty");
  const auto& c = model.config();
  TapSpec taps;
  for (int b = 0; b < model.depth(); ++b) taps.insert({b, LayerKind::kMlp});
  std::vector<SpectrumAccumulator> acc(static_cast<std::size_t>(model.depth()),
                                       SpectrumAccumulator(c.grid_h(), c.grid_w()));
  NoGradGuard guard;
  for (std::size_t start = 0; start < probe.indices.size(); start += static_cast<std::size_t>(probe.batch_size)) {
    const auto count = std::min(static_cast<std::size_t>(probe.batch_size), probe.indices.size() - start);
    const std::span<const std::int64_t> idx(probe.indices.data() + start, count);
    const auto r = model.forward(data.images_at<T>(idx), {taps, {}});
    for (const auto& [id, t] : r.captures) acc[static_cast<std::size_t>(id.block)].add(t);
  }
  SpectrumReport report;
  report.dataset_id = probe.dataset_id;
  report.probe_size = static_cast<std::int64_t>(probe.indices.size());
  for (int b = 0; b < model.depth(); ++b) {
    auto p = acc[static_cast<std::size_t>(b)].profile();
    const auto bands = band_energy(p);
    report.blocks.push_back({b, std::move(p), bands});
  }
  return report;
}

std::vector<BandDelta> compare_reports(const SpectrumReport& a, const SpectrumReport& b) {
  if (a.blocks.size() != b.blocks.size()) throw DimensionError("spectra cover different depths");
  std::vector<BandDelta> out;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    BandDelta d;
    d.block = a.blocks[i].block;
    d.a = a.blocks[i].bands;
    d.b = b.blocks[i].bands;
    d.delta = {d.b.low - d.a.low, d.b.mid - d.a.mid, d.b.high - d.a.high};
    out.push_back(d);
  }
  return out;
}

template <typename T>
std::vector<BandDelta> compare_spectra(const ViTModel<T>& a, const ViTModel<T>& b, const LabeledDataset& data,
                                       const Probe& probe) {
  if (a.depth() != b.depth()) throw DimensionError("compare_spectra: models differ in depth");
  return compare_reports(spectrum_report(a, data, probe), spectrum_report(b, data, probe));
}

std::string band_delta_csv(const std::vector<BandDelta>& deltas) {
  std::ostringstream out;
  out.precision(17);
  out << "block,low_a,mid_a,high_a,low_b,mid_b,high_b,d_low,d_mid,d_high\n";
  for (const auto& d : deltas) {
    out << d.block << ',' << d.a.low << ',' << d.a.mid << ',' << d.a.high << ',' << d.b.low << ',' << d.b.mid << ','
        << d.b.high << ',' << d.delta.low << ',' << d.delta.mid << ',' << d.delta.high << '\n';
  }
  return out.str();
}

template void SpectrumAccumulator::add(const Tensor<float>&);
template void SpectrumAccumulator::add(const Tensor<double>&);
template SpectrumProfile block_spectrum(const Tensor<float>&, int, int);
template SpectrumProfile block_spectrum(const Tensor<double>&, int, int);
template SpectrumReport spectrum_report(const ViTModel<float>&, const LabeledDataset&, const Probe&);
template SpectrumReport spectrum_report(const ViTModel<double>&, const LabeledDataset&, const Probe&);
template std::vector<BandDelta> compare_spectra(const ViTModel<float>&, const ViTModel<float>&, const LabeledDataset&,
                                                const Probe&);
template std::vector<BandDelta> compare_spectra(const ViTModel<double>&, const ViTModel<double>&,
                                                const LabeledDataset&, const Probe&);

}  // namespace entroprune
