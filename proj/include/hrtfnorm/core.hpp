#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace hrtfnorm {

using Json = nlohmann::json;

// Default angular tolerance (degrees) for treating two directions as equal.
inline constexpr double kPositionTolerance = 0.1;

// Linear frequency grid from DC to Nyquist.
struct FrequencyGrid {
  std::uint32_t sample_rate = 48000;
  std::size_t n_bins = 129;

  double frequency(std::size_t bin) const {
    return static_cast<double>(bin) * sample_rate / (2.0 * static_cast<double>(n_bins - 1));
  }
  double nyquist() const { return sample_rate / 2.0; }
  void validate() const;

  bool operator==(const FrequencyGrid&) const = default;
};

struct SourcePosition {
  double azimuth = 0.0;    // degrees, [0, 360)
  double elevation = 0.0;  // degrees, [-90, 90]
  double distance = 1.0;   // meters

  // Wraps azimuth into [0, 360) and checks the other ranges.
  static SourcePosition make(double azimuth, double elevation, double distance = 1.0);

  bool operator==(const SourcePosition&) const = default;
};

// Great-circle angle in degrees between the two source directions.
double angular_distance(const SourcePosition& a, const SourcePosition& b);

// Unit direction: x front, y left, z up.
std::array<double, 3> direction(const SourcePosition& p);

enum class Ear : std::uint8_t { Left = 0, Right = 1 };
inline constexpr std::size_t kEars = 2;

const char* to_string(Ear ear);

// One subject's dB magnitudes, laid out [position][ear][bin].
struct SubjectHrtf {
  std::string id;
  std::vector<double> spectra;

  std::span<double> spectrum(std::size_t position, Ear ear, std::size_t n_bins) {
    return {spectra.data() + offset(position, ear, n_bins), n_bins};
  }
  std::span<const double> spectrum(std::size_t position, Ear ear, std::size_t n_bins) const {
    return {spectra.data() + offset(position, ear, n_bins), n_bins};
  }

  static std::size_t offset(std::size_t position, Ear ear, std::size_t n_bins) {
    return (position * kEars + static_cast<std::size_t>(ear)) * n_bins;
  }

  bool operator==(const SubjectHrtf&) const = default;
};

struct Database {
  std::string name;
  FrequencyGrid grid;
  std::vector<SourcePosition> positions;
  std::vector<SubjectHrtf> subjects;
  Json provenance = Json::object();

  std::size_t values_per_subject() const { return positions.size() * kEars * grid.n_bins; }

  std::span<const double> spectrum(std::size_t subject, std::size_t position, Ear ear) const {
    return subjects[subject].spectrum(position, ear, grid.n_bins);
  }
  std::span<double> spectrum(std::size_t subject, std::size_t position, Ear ear) {
    return subjects[subject].spectrum(position, ear, grid.n_bins);
  }

  // Index of the position matching `p` within `tol` degrees, or npos.
  std::size_t find_position(const SourcePosition& p, double tol = kPositionTolerance) const;

  // Throws ValidationError / DimensionError when an invariant is broken.
  // `allow_empty` admits zero subjects (degenerate reconstructions).
  void validate(bool allow_empty = false) const;

  bool operator==(const Database&) const = default;
};

inline constexpr std::size_t npos = static_cast<std::size_t>(-1);

// HRTFDB v1 container.
Database load_database(const std::filesystem::path& path);
void save_database(const Database& db, const std::filesystem::path& path);

// In-memory variants of the container codec.
Database decode_database(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_database(const Database& db);

// Directions present in every database, ordered by (elevation, azimuth).
// Returned positions are taken from the first database.
std::vector<SourcePosition> find_common_positions(std::span<const Database> dbs,
                                                  double tol = kPositionTolerance);

// Subset of `db` restricted to `positions` (matched within tol), in that order.
Database select_positions(const Database& db, std::span<const SourcePosition> positions,
                          double tol = kPositionTolerance);

}  // namespace hrtfnorm
