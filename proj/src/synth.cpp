#include "hrtfnorm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hrtfnorm/error.hpp"
#include "hrtfnorm/rng.hpp"

namespace hrtfnorm {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLowestShapedFrequency = 50.0;
constexpr int kBaselineTerms = 8;

// Log-frequency coordinate in [0, 1] between 50 Hz and Nyquist.
double log_frequency(const FrequencyGrid& grid, std::size_t bin) {
  const double f = std::max(grid.frequency(bin), kLowestShapedFrequency);
  return std::log2(f / kLowestShapedFrequency) / std::log2(grid.nyquist() / kLowestShapedFrequency);
}

// Smooth random curve over log-frequency: sum of cosines with amplitudes
// drawn from [0, max_amplitude / k].
struct CosineCurve {
  std::array<double, kBaselineTerms> amplitude{};
  std::array<double, kBaselineTerms> phase{};

  static CosineCurve draw(Rng& rng, double max_amplitude) {
    CosineCurve c;
    for (int k = 0; k < kBaselineTerms; ++k) {
      c.amplitude[k] = rng.uniform(0.0, max_amplitude / (k + 1));
      c.phase[k] = rng.uniform(0.0, 2.0 * kPi);
    }
    return c;
  }

  double operator()(double u) const {
    double v = 0.0;
    for (int k = 0; k < kBaselineTerms; ++k) v += amplitude[k] * std::cos(kPi * (k + 1) * u + phase[k]);
    return v;
  }
};

std::vector<double> sample_curve(const CosineCurve& curve, const FrequencyGrid& grid, double bound) {
  std::vector<double> v(grid.n_bins);
  double peak = 0.0;
  for (std::size_t k = 0; k < grid.n_bins; ++k) {
    v[k] = curve(log_frequency(grid, k));
    peak = std::max(peak, std::abs(v[k]));
  }
  if (peak > bound) {
    for (auto& x : v) x *= bound / peak;
  }
  return v;
}

double clamp_term(double v) { return std::clamp(v, -kSystemTermBound, kSystemTermBound); }

std::uint64_t salted(std::uint64_t seed, std::uint64_t salt) {
  return Rng::mix(seed ^ Rng::mix(0xA5A5A5A5ULL + salt));
}

}  // namespace

std::vector<SourcePosition> builtin_grid(std::string_view name, double distance) {
  std::vector<SourcePosition> grid;
  if (name == "grid12") {
    for (double az : {0.0, 30.0, 90.0, 150.0, 180.0, 210.0, 270.0, 330.0}) {
      grid.push_back(SourcePosition::make(az, 0.0, distance));
    }
    for (double az : {0.0, 90.0, 180.0, 270.0}) grid.push_back(SourcePosition::make(az, 45.0, distance));
  } else if (name == "grid24") {
    for (double el : {-30.0, 0.0, 30.0}) {
      for (int i = 0; i < 8; ++i) grid.push_back(SourcePosition::make(45.0 * i, el, distance));
    }
  } else if (name == "grid48") {
    for (double el : {-30.0, 0.0, 30.0, 60.0}) {
      for (int i = 0; i < 12; ++i) grid.push_back(SourcePosition::make(30.0 * i, el, distance));
    }
  } else {
    throw ValidationError("unknown position grid '" + std::string(name) + "'");
  }
  return grid;
}

std::vector<std::string> builtin_grid_names() { return {"grid12", "grid24", "grid48"}; }

Database SubjectPool::to_database(std::string name) const {
  Database db;
  db.name = std::move(name);
  db.grid = grid;
  db.positions = positions;
  db.subjects = subjects;
  db.provenance = {{"generator", "synth_subject_pool"}, {"pool_seed", seed}};
  return db;
}

SystemResponse SystemResponse::zero(const FrequencyGrid& grid,
                                    std::span<const SourcePosition> positions) {
  SystemResponse sys;
  sys.grid = grid;
  sys.positions.assign(positions.begin(), positions.end());
  sys.loudspeaker.assign(positions.size() * grid.n_bins, 0.0);
  sys.microphone.assign(kEars * grid.n_bins, 0.0);
  sys.room.assign(positions.size() * grid.n_bins, 0.0);
  return sys;
}

SubjectPool synth_subject_pool(std::size_t count, std::span<const SourcePosition> positions,
                               const FrequencyGrid& grid, std::uint64_t seed) {
  if (count == 0) throw ValidationError("synth_subject_pool: count must be at least 1");
  grid.validate();

  SubjectPool pool;
  pool.seed = seed;
  pool.grid = grid;
  pool.positions.assign(positions.begin(), positions.end());

  const std::size_t n = grid.n_bins;
  const Rng root(seed, "subject-pool");
  for (std::size_t s = 0; s < count; ++s) {
    Rng rng = root.split(s);
    const CosineCurve baseline = CosineCurve::draw(rng, 3.0);
    const double shadow_depth = 20.0 * rng.uniform(0.75, 1.0);
    const double notch_offset = rng.uniform(0.0, 0.4);
    const double notch_slope = rng.uniform(0.4, 0.6);

    SubjectHrtf subject;
    subject.id = "S" + std::to_string(s);
    subject.spectra.resize(positions.size() * kEars * n);
    for (std::size_t p = 0; p < positions.size(); ++p) {
      const auto dir = direction(positions[p]);
      // Pinna notch centre in [6, 12] kHz, rising with elevation.
      const double rise = std::clamp(notch_offset + notch_slope * (positions[p].elevation + 90.0) / 180.0,
                                     0.0, 1.0);
      const double notch_center = 6000.0 + 6000.0 * rise;
      for (std::size_t e = 0; e < kEars; ++e) {
        // Interaural axis: +y for the left ear, -y for the right.
        const double facing = e == 0 ? dir[1] : -dir[1];
        const double shadow = shadow_depth * 0.5 * (1.0 - facing);
        auto out = subject.spectrum(p, static_cast<Ear>(e), n);
        for (std::size_t k = 0; k < n; ++k) {
          const double f = grid.frequency(k);
          const double octaves = f > 0.0 ? std::log2(f / notch_center) / 0.1 : -1e9;
          out[k] = baseline(log_frequency(grid, k)) - shadow * (f / grid.nyquist()) -
                   15.0 * std::exp(-0.5 * octaves * octaves);
        }
      }
    }
    pool.subjects.push_back(std::move(subject));
  }
  return pool;
}

SystemResponse synth_system_response(const FrequencyGrid& grid,
                                     std::span<const SourcePosition> positions, std::uint64_t seed) {
  grid.validate();
  SystemResponse sys = SystemResponse::zero(grid, positions);
  sys.seed = seed;
  const std::size_t n = grid.n_bins;
  const Rng root(seed, "system-response");

  // Loudspeaker: shared colouration plus a direction-dependent spectral tilt.
  Rng speaker_rng = root.split("loudspeaker");
  const auto speaker_curve = sample_curve(CosineCurve::draw(speaker_rng, 8.0), grid, 8.0);
  const double tilt = speaker_rng.uniform(2.0, 4.0);
  std::array<double, 3> axis{speaker_rng.normal(), speaker_rng.normal(), speaker_rng.normal()};
  const double axis_norm = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
  for (auto& a : axis) a /= axis_norm;

  // Microphones: common colouration plus a small per-ear deviation.
  Rng mic_rng = root.split("microphone");
  const auto mic_common = sample_curve(CosineCurve::draw(mic_rng, 8.0), grid, 8.0);
  for (std::size_t e = 0; e < kEars; ++e) {
    const auto deviation = sample_curve(CosineCurve::draw(mic_rng, 1.5), grid, 1.5);
    for (std::size_t k = 0; k < n; ++k) sys.microphone[e * n + k] = clamp_term(mic_common[k] + deviation[k]);
  }

  // Room: single reflection, comb ripple whose gain depends on elevation.
  Rng room_rng = root.split("room");
  const double delay = room_rng.uniform(0.4e-3, 2.0e-3);
  const double gain = room_rng.uniform(0.15, 0.35);

  for (std::size_t p = 0; p < positions.size(); ++p) {
    const auto dir = direction(positions[p]);
    const double slope = tilt * (dir[0] * axis[0] + dir[1] * axis[1] + dir[2] * axis[2]);
    const double a = gain * (0.6 + 0.4 * std::sin(positions[p].elevation * kPi / 180.0));
    for (std::size_t k = 0; k < n; ++k) {
      const double u = log_frequency(grid, k);
      sys.loudspeaker[p * n + k] = clamp_term(speaker_curve[k] + slope * (2.0 * u - 1.0));
      const double phase = 2.0 * kPi * grid.frequency(k) * delay;
      sys.room[p * n + k] = clamp_term(10.0 * std::log10(1.0 + a * a + 2.0 * a * std::cos(phase)));
    }
  }
  return sys;
}

double max_abs_difference(const SystemResponse& a, const SystemResponse& b) {
  if (a.grid != b.grid || a.positions.size() != b.positions.size()) {
    throw DimensionError("system responses have different shapes");
  }
  double worst = 0.0;
  for (std::size_t p = 0; p < a.positions.size(); ++p) {
    for (std::size_t e = 0; e < kEars; ++e) {
      for (std::size_t k = 0; k < a.grid.n_bins; ++k) {
        const auto ear = static_cast<Ear>(e);
        worst = std::max(worst, std::abs(a.total(p, ear, k) - b.total(p, ear, k)));
      }
    }
  }
  return worst;
}

std::vector<SystemResponse> synth_system_responses(const FrequencyGrid& grid,
                                                   std::span<const SourcePosition> positions,
                                                   std::span<const std::uint64_t> seeds) {
  std::vector<SystemResponse> out;
  for (std::uint64_t seed : seeds) {
    std::uint64_t effective = seed;
    for (std::uint64_t salt = 1;; ++salt) {
      SystemResponse sys = synth_system_response(grid, positions, effective);
      const bool distinct = std::all_of(out.begin(), out.end(), [&](const SystemResponse& prev) {
        return max_abs_difference(prev, sys) > 1.0;
      });
      if (distinct) {
        out.push_back(std::move(sys));
        break;
      }
      effective = salted(seed, salt);
    }
  }
  return out;
}

Database synth_database(const SubjectPool& pool, const SystemResponse& sys, std::string name) {
  if (pool.grid != sys.grid) throw DimensionError("synth_database: pool and system grids differ");
  if (pool.positions.size() != sys.positions.size()) {
    throw DimensionError("synth_database: pool and system position counts differ");
  }
  for (std::size_t p = 0; p < pool.positions.size(); ++p) {
    if (angular_distance(pool.positions[p], sys.positions[p]) > kPositionTolerance) {
      throw DimensionError("synth_database: position " + std::to_string(p) + " differs");
    }
  }
  Database db = pool.to_database(std::move(name));
  db.provenance = {{"generator", "synth_database"},
                   {"pool_seed", pool.seed},
                   {"system_seed", sys.seed},
                   {"source_distance", pool.positions.empty() ? 0.0 : pool.positions.front().distance}};
  const std::size_t n = db.grid.n_bins;
  for (auto& subject : db.subjects) {
    for (std::size_t p = 0; p < db.positions.size(); ++p) {
      for (std::size_t e = 0; e < kEars; ++e) {
        auto out = subject.spectrum(p, static_cast<Ear>(e), n);
        for (std::size_t k = 0; k < n; ++k) out[k] += sys.total(p, static_cast<Ear>(e), k);
      }
    }
  }
  return db;
}

SyntheticCorpus synth_corpus(const CorpusOptions& options) {
  if (options.databases == 0) throw ValidationError("synth_corpus: need at least one database");
  const auto positions = builtin_grid(options.positions);
  const Rng root(options.seed, "corpus");
  SyntheticCorpus corpus;
  const std::size_t n_pools = options.shared_pool ? 1 : options.databases;
  for (std::size_t i = 0; i < n_pools; ++i) {
    const std::uint64_t pool_seed = root.split("pool").split(i).next_u64();
    corpus.pools.push_back(synth_subject_pool(options.subjects, positions, options.grid, pool_seed));
  }
  std::vector<std::uint64_t> system_seeds;
  for (std::size_t i = 0; i < options.databases; ++i) {
    system_seeds.push_back(root.split("system").split(i).next_u64());
  }
  corpus.systems = synth_system_responses(options.grid, positions, system_seeds);
  for (std::size_t i = 0; i < options.databases; ++i) {
    const SubjectPool& pool = corpus.pools[options.shared_pool ? 0 : i];
    corpus.databases.push_back(synth_database(pool, corpus.systems[i], "db" + std::to_string(i)));
  }
  return corpus;
}

}  // namespace hrtfnorm
