#include "hrtfnorm/normalize.hpp"

#include <bit>
#include <cstdio>

#include "hrtfnorm/error.hpp"
#include "hrtfnorm/rng.hpp"

namespace hrtfnorm {

namespace {

constexpr const char* kAverageSubject = "__average__";

std::vector<std::size_t> position_map(const Database& db, std::span<const SourcePosition> wanted) {
  std::vector<std::size_t> index;
  for (const auto& p : wanted) {
    const std::size_t i = db.find_position(p);
    if (i == npos) {
      throw DimensionError("database '" + db.name + "' lacks requested position (" +
                           std::to_string(p.azimuth) + ", " + std::to_string(p.elevation) + ")");
    }
    index.push_back(i);
  }
  return index;
}

// For each position of `db`, its slot in `avg`.
std::vector<std::size_t> average_slots(const Database& db, const AverageHrtf& avg) {
  if (db.grid != avg.grid) {
    throw DimensionError("frequency grid of '" + db.name + "' does not match the average from '" +
                         avg.source + "'");
  }
  Database probe;
  probe.positions = avg.positions;
  std::vector<std::size_t> slots;
  for (const auto& p : db.positions) {
    const std::size_t i = probe.find_position(p);
    if (i == npos) {
      throw DimensionError("average from '" + avg.source + "' has no entry for position (" +
                           std::to_string(p.azimuth) + ", " + std::to_string(p.elevation) + ")");
    }
    slots.push_back(i);
  }
  return slots;
}

}  // namespace

std::string_view to_string(NormalizationMode mode) {
  switch (mode) {
    case NormalizationMode::PerPositionPerEar:
      return "per-position-per-ear";
    case NormalizationMode::PositionIndependent:
      return "position-independent";
    case NormalizationMode::EarIndependent:
      return "ear-independent";
  }
  return "unknown";
}

NormalizationMode parse_normalization_mode(std::string_view text) {
  for (auto m : {NormalizationMode::PerPositionPerEar, NormalizationMode::PositionIndependent,
                 NormalizationMode::EarIndependent}) {
    if (text == to_string(m)) return m;
  }
  throw ValidationError("unknown normalization mode '" + std::string(text) + "'");
}

std::string AverageHrtf::id() const {
  std::uint64_t h = Rng::fnv1a(to_string(mode));
  auto feed = [&h](std::uint64_t v) { h = Rng::mix(h ^ v); };
  feed(Rng::fnv1a(source));
  feed(grid.sample_rate);
  feed(grid.n_bins);
  feed(subject_count);
  for (const auto& p : positions) {
    feed(std::bit_cast<std::uint32_t>(static_cast<float>(p.azimuth)));
    feed(std::bit_cast<std::uint32_t>(static_cast<float>(p.elevation)));
  }
  for (double v : table) feed(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Database AverageHrtf::to_database() const {
  Database db;
  db.name = source + ".average";
  db.grid = grid;
  db.positions = positions;
  db.provenance = {{"kind", "average_hrtf"},
                   {"mode", std::string(to_string(mode))},
                   {"source", source},
                   {"subject_count", subject_count},
                   {"average_id", id()}};
  SubjectHrtf s{kAverageSubject, std::vector<double>(db.values_per_subject())};
  for (std::size_t p = 0; p < positions.size(); ++p) {
    for (std::size_t e = 0; e < kEars; ++e) {
      auto out = s.spectrum(p, static_cast<Ear>(e), grid.n_bins);
      for (std::size_t k = 0; k < grid.n_bins; ++k) out[k] = value(p, static_cast<Ear>(e), k);
    }
  }
  db.subjects.push_back(std::move(s));
  return db;
}

AverageHrtf AverageHrtf::from_database(const Database& db) {
  if (db.subjects.size() != 1 || db.subjects.front().id != kAverageSubject ||
      db.provenance.value("kind", "") != "average_hrtf") {
    throw ValidationError("'" + db.name + "' is not an average-HRTF container");
  }
  AverageHrtf avg;
  try {
    avg.mode = parse_normalization_mode(db.provenance.at("mode").get<std::string>());
    avg.source = db.provenance.at("source").get<std::string>();
    avg.subject_count = db.provenance.at("subject_count").get<std::size_t>();
  } catch (const Json::exception& e) {
    throw ValidationError("average-HRTF provenance incomplete: " + std::string(e.what()));
  }
  avg.grid = db.grid;
  avg.positions = db.positions;
  for (std::size_t p = 0; p < avg.position_slots(); ++p) {
    for (std::size_t e = 0; e < avg.ear_slots(); ++e) {
      auto src = db.spectrum(0, p, static_cast<Ear>(e));
      avg.table.insert(avg.table.end(), src.begin(), src.end());
    }
  }
  return avg;
}

AverageHrtf compute_average_hrtf(const Database& db, NormalizationMode mode,
                                 std::optional<std::span<const SourcePosition>> positions) {
  db.validate();
  if (positions && positions->empty()) {
    throw ValidationError("compute_average_hrtf: empty position restriction");
  }
  const std::vector<std::size_t> index =
      positions ? position_map(db, *positions) : [&] {
        std::vector<std::size_t> all(db.positions.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return all;
      }();
  if (index.empty()) throw ValidationError("compute_average_hrtf: database has no positions");

  AverageHrtf avg;
  avg.mode = mode;
  avg.source = db.name;
  avg.grid = db.grid;
  avg.subject_count = db.subjects.size();
  for (std::size_t i : index) avg.positions.push_back(db.positions[i]);

  const std::size_t n = db.grid.n_bins;
  const std::size_t P = index.size();
  // Per-position-per-ear subject mean first; the collapsed modes average it further.
  std::vector<double> full(P * kEars * n, 0.0);
  for (const auto& s : db.subjects) {
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t e = 0; e < kEars; ++e) {
        auto src = s.spectrum(index[p], static_cast<Ear>(e), n);
        double* dst = full.data() + (p * kEars + e) * n;
        for (std::size_t k = 0; k < n; ++k) dst[k] += src[k];
      }
    }
  }
  const double inv_subjects = 1.0 / static_cast<double>(db.subjects.size());
  for (auto& v : full) v *= inv_subjects;

  switch (mode) {
    case NormalizationMode::PerPositionPerEar:
      avg.table = std::move(full);
      break;
    case NormalizationMode::PositionIndependent:
      avg.table.assign(kEars * n, 0.0);
      for (std::size_t p = 0; p < P; ++p) {
        for (std::size_t j = 0; j < kEars * n; ++j) avg.table[j] += full[p * kEars * n + j];
      }
      for (auto& v : avg.table) v /= static_cast<double>(P);
      break;
    case NormalizationMode::EarIndependent:
      avg.table.assign(P * n, 0.0);
      for (std::size_t p = 0; p < P; ++p) {
        for (std::size_t k = 0; k < n; ++k) {
          avg.table[p * n + k] = 0.5 * (full[(p * kEars) * n + k] + full[(p * kEars + 1) * n + k]);
        }
      }
      break;
  }
  return avg;
}

AverageHrtf compute_average_hrtf(const AugmentedDatabase& db, NormalizationMode mode,
                                 std::optional<std::span<const SourcePosition>> positions) {
  return compute_average_hrtf(db.db, mode, positions);
}

Database normalize(const Database& db, const AverageHrtf& avg) {
  if (db.provenance.contains("normalization")) {
    throw ValidationError("database '" + db.name + "' is already normalized");
  }
  const auto slots = average_slots(db, avg);
  Database out = db;
  const std::size_t n = db.grid.n_bins;
  for (auto& s : out.subjects) {
    for (std::size_t p = 0; p < out.positions.size(); ++p) {
      for (std::size_t e = 0; e < kEars; ++e) {
        const auto ear = static_cast<Ear>(e);
        auto v = s.spectrum(p, ear, n);
        for (std::size_t k = 0; k < n; ++k) v[k] -= avg.value(slots[p], ear, k);
      }
    }
  }
  out.provenance["normalization"] = {{"mode", std::string(to_string(avg.mode))},
                                     {"average_id", avg.id()},
                                     {"average_source", avg.source}};
  return out;
}

Database denormalize(const Database& normalized, const AverageHrtf& avg) {
  const auto it = normalized.provenance.find("normalization");
  if (it == normalized.provenance.end() || !it->is_object()) {
    throw ValidationError("database '" + normalized.name + "' carries no normalization record");
  }
  const std::string recorded = it->value("average_id", "");
  if (recorded != avg.id()) {
    throw ValidationError("database '" + normalized.name + "' was normalized with average " +
                          recorded + ", not " + avg.id() + " (from '" + avg.source + "')");
  }
  const auto slots = average_slots(normalized, avg);
  Database out = normalized;
  out.provenance.erase("normalization");
  const std::size_t n = normalized.grid.n_bins;
  for (auto& s : out.subjects) {
    for (std::size_t p = 0; p < out.positions.size(); ++p) {
      for (std::size_t e = 0; e < kEars; ++e) {
        const auto ear = static_cast<Ear>(e);
        auto v = s.spectrum(p, ear, n);
        for (std::size_t k = 0; k < n; ++k) v[k] += avg.value(slots[p], ear, k);
      }
    }
  }
  return out;
}

}  // namespace hrtfnorm
