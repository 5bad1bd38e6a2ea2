#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hrtfnorm/augment.hpp"
#include "hrtfnorm/core.hpp"

namespace hrtfnorm {

enum class NormalizationMode {
  PerPositionPerEar,    // one reference per (position, ear)
  PositionIndependent,  // per ear, averaged over the position set
  EarIndependent,       // per position, averaged over both ears
};

std::string_view to_string(NormalizationMode mode);
NormalizationMode parse_normalization_mode(std::string_view text);

// Average-person response of one database, in dB.
struct AverageHrtf {
  NormalizationMode mode = NormalizationMode::PerPositionPerEar;
  std::string source;  // name of the database it was computed from
  FrequencyGrid grid;
  std::vector<SourcePosition> positions;
  std::size_t subject_count = 0;
  // [position slot][ear slot][bin]; a collapsed axis has a single slot.
  std::vector<double> table;

  std::size_t position_slots() const {
    return mode == NormalizationMode::PositionIndependent ? 1 : positions.size();
  }
  std::size_t ear_slots() const { return mode == NormalizationMode::EarIndependent ? 1 : kEars; }

  double value(std::size_t position, Ear ear, std::size_t bin) const {
    const std::size_t p = mode == NormalizationMode::PositionIndependent ? 0 : position;
    const std::size_t e = mode == NormalizationMode::EarIndependent ? 0 : static_cast<std::size_t>(ear);
    return table[(p * ear_slots() + e) * grid.n_bins + bin];
  }

  // Content hash (of the f32-rounded table, so it survives container storage).
  std::string id() const;

  // HRTFDB v1 form: a single subject "__average__", collapsed axes broadcast.
  Database to_database() const;
  static AverageHrtf from_database(const Database& db);
};

// dB mean over subjects at each (position, ear, bin), further collapsed per mode.
// `positions`, when given, restricts (and orders) the positions used.
AverageHrtf compute_average_hrtf(const Database& db, NormalizationMode mode,
                                 std::optional<std::span<const SourcePosition>> positions = {});
AverageHrtf compute_average_hrtf(const AugmentedDatabase& db, NormalizationMode mode,
                                 std::optional<std::span<const SourcePosition>> positions = {});

// measured dB - average dB. Provenance gains a "normalization" record.
Database normalize(const Database& db, const AverageHrtf& avg);

// Inverse of normalize; refuses an average other than the one recorded.
Database denormalize(const Database& normalized, const AverageHrtf& avg);

}  // namespace hrtfnorm
