#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "hrtfnorm/core.hpp"

namespace hrtfnorm {

// Inclusive frequency band; selects the bins whose centre frequency lies in it.
struct BandSelection {
  double f_low = 200.0;
  double f_high = 18000.0;

  static BandSelection full(const FrequencyGrid& grid) { return {0.0, grid.nyquist()}; }

  // [first, last) bin range; throws if the band is invalid or selects nothing.
  std::pair<std::size_t, std::size_t> bins(const FrequencyGrid& grid) const;
};

// A stack of dB spectra ("rows"), one per (position[, ear]).
struct SpectrumSet {
  std::size_t n_bins = 0;
  std::vector<double> values;  // [row][bin]

  std::size_t rows() const { return n_bins == 0 ? 0 : values.size() / n_bins; }
  const double* row(std::size_t r) const { return values.data() + r * n_bins; }
};

// Rows of one subject. With both ears, each (position, ear) is its own row.
SpectrumSet subject_spectra(const Database& db, std::size_t subject, bool both_ears = true);

// sqrt(mean over rows and in-band bins of (truth - pred)^2), inputs in dB.
double lsd(const SpectrumSet& truth, const SpectrumSet& pred, const FrequencyGrid& grid,
           const BandSelection& band = {});

// Per-row LSD. sqrt(mean(v^2)) over the result equals lsd().
std::vector<double> lsd_per_position(const SpectrumSet& truth, const SpectrumSet& pred,
                                     const FrequencyGrid& grid, const BandSelection& band = {});

}  // namespace hrtfnorm
