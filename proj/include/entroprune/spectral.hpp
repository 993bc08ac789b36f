// Copyright 2026 The EntroPrune Authors
// SPDX-License-Identifier: Apache-2.0
//
// 2-D DFT of patch-token feature maps. The transform is unnormalised
// (X[u,v] = sum x[y,x] e^{-2 pi i (uy/H + vx/W)}). A bin's radial frequency
// is the Chebyshev radius max(|w_u|, |w_v|) of its signed angular
// frequencies, which lies in [0, pi]; radii are rounded onto
// ceil(max(H, W) / 2) + 1 evenly spaced centres i * pi / (bins - 1).

#pragma once

#include <complex>
#include <string>
#include <vector>

#include "entroprune/dataset.hpp"
#include "entroprune/entropy.hpp"
#include "entroprune/vit.hpp"

namespace entroprune {

/// Unnormalised 2-D DFT of a row-major h x w map.
std::vector<std::complex<double>> dft2(const std::vector<double>& map, int h, int w);

int radial_bin_count(int grid_h, int grid_w);
/// Radial bin of DFT coefficient (u, v).
int radial_bin(int u, int v, int grid_h, int grid_w);

struct SpectrumProfile {
  int grid_h = 0;
  int grid_w = 0;
  std::vector<double> bin_frequency;  // radians, 0 .. pi
  std::vector<double> log_amplitude;  // mean log(1 + |X|) over coefficients, channels and batch
  std::vector<double> energy;         // sum |X|^2 over coefficients, channels and batch

  double total_energy() const;
};

/// Spectrum of [B, P + 1, d] block features; the class token is dropped and
/// each channel of the remaining tokens is read as a grid_h x grid_w map.
template <typename T>
SpectrumProfile block_spectrum(const Tensor<T>& features, int grid_h, int grid_w);

/// Accumulates several batches into one profile.
class SpectrumAccumulator {
 public:
  SpectrumAccumulator(int grid_h, int grid_w);
  template <typename T>
  void add(const Tensor<T>& features);
  SpectrumProfile profile() const;

 private:
  int grid_h_, grid_w_;
  std::vector<double> log_sum_, energy_;
  std::vector<std::int64_t> counts_;
};

struct BandEnergy {
  double low = 0.0;   // [0, 0.3 pi)
  double mid = 0.0;   // [0.3 pi, 0.7 pi)
  double high = 0.0;  // [0.7 pi, pi]

  double total() const { return low + mid + high; }
};

/// Band of a radial frequency; a value on a boundary joins the upper band.
int frequency_band(double omega);
BandEnergy band_energy(const SpectrumProfile& profile);

struct BlockSpectrum {
  int block = 0;
  SpectrumProfile profile;
  BandEnergy bands;
};

struct SpectrumReport {
  std::string dataset_id;
  std::int64_t probe_size = 0;
  std::vector<BlockSpectrum> blocks;

  /// block,bin_freq,log_amplitude
  std::string profile_csv() const;
  /// block,low,mid,high
  std::string bands_csv() const;
  std::string to_json() const;
};

/// Spectrum of every block's f_mlp output over the probe.
template <typename T>
SpectrumReport spectrum_report(const ViTModel<T>& model, const LabeledDataset& data, const Probe& probe);

struct BandDelta {
  int block = 0;
  BandEnergy a, b, delta;  // delta = b - a
};

template <typename T>
std::vector<BandDelta> compare_spectra(const ViTModel<T>& a, const ViTModel<T>& b, const LabeledDataset& data,
                                       const Probe& probe);
std::vector<BandDelta> compare_reports(const SpectrumReport& a, const SpectrumReport& b);
/// block,low_a,mid_a,high_a,low_b,mid_b,high_b,d_low,d_mid,d_high
std::string band_delta_csv(const std::vector<BandDelta>& deltas);

}  // namespace entroprune
