#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hrtfnorm/core.hpp"

namespace hrtfnorm {

// Named position grids. All of them are closed under left/right mirroring.
//   grid12: azimuths {0,30,90,150,180,210,270,330} at elevation 0 and
//           {0,90,180,270} at elevation 45.
//   grid24: azimuths every 45 deg at elevations {-30, 0, 30}.
//   grid48: azimuths every 30 deg at elevations {-30, 0, 30, 60}.
std::vector<SourcePosition> builtin_grid(std::string_view name, double distance = 1.0);
std::vector<std::string> builtin_grid_names();

// System-free ("true") HRTFs for a set of synthetic listeners.
struct SubjectPool {
  std::uint64_t seed = 0;
  FrequencyGrid grid;
  std::vector<SourcePosition> positions;
  std::vector<SubjectHrtf> subjects;

  Database to_database(std::string name) const;
};

// Additive dB response of one measurement chain.
struct SystemResponse {
  std::uint64_t seed = 0;
  FrequencyGrid grid;
  std::vector<SourcePosition> positions;
  std::vector<double> loudspeaker;  // [position][bin]
  std::vector<double> microphone;   // [ear][bin], identical at every position
  std::vector<double> room;         // [position][bin]

  double total(std::size_t position, Ear ear, std::size_t bin) const {
    const std::size_t n = grid.n_bins;
    return loudspeaker[position * n + bin] + microphone[static_cast<std::size_t>(ear) * n + bin] +
           room[position * n + bin];
  }

  // All-zero response (the identity measurement chain).
  static SystemResponse zero(const FrequencyGrid& grid, std::span<const SourcePosition> positions);
};

// Bound on each system term, dB.
inline constexpr double kSystemTermBound = 12.0;

SubjectPool synth_subject_pool(std::size_t count, std::span<const SourcePosition> positions,
                               const FrequencyGrid& grid, std::uint64_t seed);

SystemResponse synth_system_response(const FrequencyGrid& grid,
                                     std::span<const SourcePosition> positions, std::uint64_t seed);

// One response per seed; a seed whose response lies within 1 dB (max-abs) of an
// earlier one is re-salted until the systems are distinguishable.
std::vector<SystemResponse> synth_system_responses(const FrequencyGrid& grid,
                                                   std::span<const SourcePosition> positions,
                                                   std::span<const std::uint64_t> seeds);

double max_abs_difference(const SystemResponse& a, const SystemResponse& b);

// measured = truth + system, per (subject, position, ear, bin).
Database synth_database(const SubjectPool& pool, const SystemResponse& sys, std::string name);

struct CorpusOptions {
  std::size_t databases = 4;
  std::size_t subjects = 18;
  bool shared_pool = true;  // one listener pool for every database
  std::string positions = "grid12";
  FrequencyGrid grid;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  std::vector<SubjectPool> pools;  // one entry when shared
  std::vector<SystemResponse> systems;
  std::vector<Database> databases;  // named db0, db1, ...
};

// Databases with pairwise-distinct measurement systems; every seed is derived
// from options.seed.
SyntheticCorpus synth_corpus(const CorpusOptions& options);

}  // namespace hrtfnorm
