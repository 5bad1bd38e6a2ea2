#include "hrtfnorm/metrics.hpp"

#include <cmath>

#include "hrtfnorm/error.hpp"

namespace hrtfnorm {

std::pair<std::size_t, std::size_t> BandSelection::bins(const FrequencyGrid& grid) const {
  if (!(f_low >= 0.0 && f_low < f_high && f_high <= grid.nyquist())) {
    throw ValidationError("band [" + std::to_string(f_low) + ", " + std::to_string(f_high) +
                          "] Hz is not inside [0, " + std::to_string(grid.nyquist()) + "]");
  }
  std::size_t first = grid.n_bins;
  std::size_t last = 0;
  for (std::size_t k = 0; k < grid.n_bins; ++k) {
    const double f = grid.frequency(k);
    if (f >= f_low && f <= f_high) {
      first = std::min(first, k);
      last = k + 1;
    }
  }
  if (first >= last) {
    throw ValidationError("band [" + std::to_string(f_low) + ", " + std::to_string(f_high) +
                          "] Hz selects no frequency bin");
  }
  return {first, last};
}

SpectrumSet subject_spectra(const Database& db, std::size_t subject, bool both_ears) {
  SpectrumSet set;
  set.n_bins = db.grid.n_bins;
  for (std::size_t p = 0; p < db.positions.size(); ++p) {
    for (std::size_t e = 0; e < (both_ears ? kEars : 1); ++e) {
      auto s = db.spectrum(subject, p, static_cast<Ear>(e));
      set.values.insert(set.values.end(), s.begin(), s.end());
    }
  }
  return set;
}

namespace {

void check_shapes(const SpectrumSet& truth, const SpectrumSet& pred, const FrequencyGrid& grid) {
  if (truth.n_bins != grid.n_bins || pred.n_bins != grid.n_bins) {
    throw DimensionError("LSD: spectra have a bin count different from the grid");
  }
  if (truth.values.size() != pred.values.size()) {
    throw DimensionError("LSD: truth has " + std::to_string(truth.rows()) + " rows, prediction " +
                         std::to_string(pred.rows()));
  }
  if (truth.rows() == 0) throw ValidationError("LSD: empty prediction set");
}

}  // namespace

std::vector<double> lsd_per_position(const SpectrumSet& truth, const SpectrumSet& pred,
                                     const FrequencyGrid& grid, const BandSelection& band) {
  check_shapes(truth, pred, grid);
  const auto [first, last] = band.bins(grid);
  std::vector<double> out(truth.rows());
  for (std::size_t r = 0; r < truth.rows(); ++r) {
    const double* a = truth.row(r);
    const double* b = pred.row(r);
    double sum = 0.0;
    for (std::size_t k = first; k < last; ++k) {
      const double d = a[k] - b[k];
      sum += d * d;
    }
    out[r] = std::sqrt(sum / static_cast<double>(last - first));
  }
  return out;
}

double lsd(const SpectrumSet& truth, const SpectrumSet& pred, const FrequencyGrid& grid,
           const BandSelection& band) {
  check_shapes(truth, pred, grid);
  const auto [first, last] = band.bins(grid);
  double sum = 0.0;
  for (std::size_t r = 0; r < truth.rows(); ++r) {
    const double* a = truth.row(r);
    const double* b = pred.row(r);
    for (std::size_t k = first; k < last; ++k) {
      const double d = a[k] - b[k];
      sum += d * d;
    }
  }
  return std::sqrt(sum / static_cast<double>(truth.rows() * (last - first)));
}

}  // namespace hrtfnorm
