#include "hrtfnorm/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "container.hpp"
#include "hrtfnorm/error.hpp"

namespace hrtfnorm {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

void FrequencyGrid::validate() const {
  if (sample_rate == 0) throw ValidationError("frequency grid: sample_rate must be positive");
  if (n_bins < 2) throw ValidationError("frequency grid: n_bins must be at least 2");
}

SourcePosition SourcePosition::make(double azimuth, double elevation, double distance) {
  if (!std::isfinite(azimuth) || !std::isfinite(elevation) || !std::isfinite(distance)) {
    throw ValidationError("source position: non-finite coordinate");
  }
  if (elevation < -90.0 || elevation > 90.0) {
    throw ValidationError("source position: elevation " + std::to_string(elevation) +
                          " outside [-90, 90]");
  }
  if (distance <= 0.0) {
    throw ValidationError("source position: distance must be positive");
  }
  double az = std::fmod(azimuth, 360.0);
  if (az < 0.0) az += 360.0;
  if (az >= 360.0) az = 0.0;
  return {az, elevation, distance};
}

std::array<double, 3> direction(const SourcePosition& p) {
  const double az = p.azimuth * kDegToRad;
  const double el = p.elevation * kDegToRad;
  return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

double angular_distance(const SourcePosition& a, const SourcePosition& b) {
  const auto u = direction(a);
  const auto v = direction(b);
  // atan2 of |u x v| and u.v stays accurate for nearly parallel directions.
  const double cx = u[1] * v[2] - u[2] * v[1];
  const double cy = u[2] * v[0] - u[0] * v[2];
  const double cz = u[0] * v[1] - u[1] * v[0];
  const double cross = std::sqrt(cx * cx + cy * cy + cz * cz);
  const double dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
  return std::atan2(cross, dot) / kDegToRad;
}

const char* to_string(Ear ear) { return ear == Ear::Left ? "left" : "right"; }

std::size_t Database::find_position(const SourcePosition& p, double tol) const {
  std::size_t best = npos;
  double best_angle = tol;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const double a = angular_distance(positions[i], p);
    if (a <= best_angle) {
      best_angle = a;
      best = i;
    }
  }
  return best;
}

void Database::validate(bool allow_empty) const {
  grid.validate();
  if (!allow_empty && subjects.empty()) {
    throw ValidationError("database '" + name + "' has no subjects");
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& p = positions[i];
    if (!(p.azimuth >= 0.0 && p.azimuth < 360.0) || !(p.elevation >= -90.0 && p.elevation <= 90.0) ||
        !(p.distance > 0.0)) {
      throw ValidationError("database '" + name + "': position " + std::to_string(i) +
                            " out of range");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (angular_distance(positions[j], p) <= kPositionTolerance) {
        throw ValidationError("database '" + name + "': positions " + std::to_string(j) + " and " +
                              std::to_string(i) + " are duplicates");
      }
    }
  }
  const std::size_t expected = values_per_subject();
  for (const auto& s : subjects) {
    if (s.spectra.size() != expected) {
      throw DimensionError("database '" + name + "': subject '" + s.id + "' has " +
                           std::to_string(s.spectra.size()) + " values, expected " +
                           std::to_string(expected));
    }
    for (std::size_t v = 0; v < s.spectra.size(); ++v) {
      if (!std::isfinite(s.spectra[v])) {
        const std::size_t bin = v % grid.n_bins;
        const std::size_t pos = v / (grid.n_bins * kEars);
        const auto ear = static_cast<Ear>((v / grid.n_bins) % kEars);
        throw ValidationError("database '" + name + "': non-finite sample in subject '" + s.id +
                              "', position " + std::to_string(pos) + ", " + to_string(ear) +
                              " ear, bin " + std::to_string(bin));
      }
    }
  }
}

namespace detail {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

}  // namespace detail

std::vector<std::uint8_t> encode_database(const Database& db) {
  db.validate();
  Json header;
  header["name"] = db.name;
  header["sample_rate"] = db.grid.sample_rate;
  header["n_bins"] = db.grid.n_bins;
  Json positions = Json::array();
  for (const auto& p : db.positions) positions.push_back({p.azimuth, p.elevation, p.distance});
  header["positions"] = std::move(positions);
  Json ids = Json::array();
  for (const auto& s : db.subjects) ids.push_back(s.id);
  header["subjects"] = std::move(ids);
  header["provenance"] = db.provenance;

  auto w = detail::begin_container(detail::kDatabaseMagic, header);
  for (const auto& s : db.subjects) {
    for (double v : s.spectra) w.f32(static_cast<float>(v));
  }
  return w.take();
}

Database decode_database(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  const Json header = detail::read_container_header(r, detail::kDatabaseMagic);

  Database db;
  try {
    db.name = header.at("name").get<std::string>();
    db.grid.sample_rate = header.at("sample_rate").get<std::uint32_t>();
    db.grid.n_bins = header.at("n_bins").get<std::size_t>();
    for (const auto& p : header.at("positions")) {
      if (!p.is_array() || p.size() != 3) throw ParseError("malformed header: position entry");
      db.positions.push_back(SourcePosition::make(p[0].get<double>(), p[1].get<double>(),
                                                  p[2].get<double>()));
    }
    for (const auto& id : header.at("subjects")) db.subjects.push_back({id.get<std::string>(), {}});
    db.provenance = header.value("provenance", Json::object());
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed header: ") + e.what());
  }
  db.grid.validate();

  const std::size_t per_subject = db.values_per_subject();
  const std::size_t expected_bytes = db.subjects.size() * per_subject * sizeof(float);
  if (r.remaining() < expected_bytes) {
    throw ParseError("truncated payload: header declares " + std::to_string(expected_bytes) +
                     " bytes, found " + std::to_string(r.remaining()));
  }
  if (r.remaining() > expected_bytes) {
    throw ParseError("dimension mismatch: payload has " +
                     std::to_string(r.remaining() - expected_bytes) + " trailing bytes");
  }
  for (auto& s : db.subjects) {
    s.spectra.resize(per_subject);
    for (auto& v : s.spectra) v = static_cast<double>(r.f32("payload"));
  }
  db.validate();
  return db;
}

Database load_database(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  try {
    return decode_database(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void save_database(const Database& db, const std::filesystem::path& path) {
  const auto bytes = encode_database(db);
  detail::write_file(path, bytes);
}

std::vector<SourcePosition> find_common_positions(std::span<const Database> dbs, double tol) {
  if (dbs.size() < 2) throw ValidationError("find_common_positions needs at least two databases");
  if (tol < 0.0) throw ValidationError("find_common_positions: negative tolerance");
  std::vector<SourcePosition> common;
  for (const auto& p : dbs.front().positions) {
    const bool everywhere = std::all_of(dbs.begin() + 1, dbs.end(), [&](const Database& other) {
      return other.find_position(p, tol) != npos;
    });
    if (everywhere) common.push_back(p);
  }
  std::sort(common.begin(), common.end(), [](const SourcePosition& a, const SourcePosition& b) {
    if (a.elevation != b.elevation) return a.elevation < b.elevation;
    return a.azimuth < b.azimuth;
  });
  return common;
}

Database select_positions(const Database& db, std::span<const SourcePosition> positions,
                          double tol) {
  std::vector<std::size_t> index;
  index.reserve(positions.size());
  for (const auto& p : positions) {
    const std::size_t i = db.find_position(p, tol);
    if (i == npos) {
      std::ostringstream msg;
      msg << "database '" << db.name << "' has no position matching (" << p.azimuth << ", "
          << p.elevation << ")";
      throw DimensionError(msg.str());
    }
    index.push_back(i);
  }
  Database out;
  out.name = db.name;
  out.grid = db.grid;
  out.provenance = db.provenance;
  for (std::size_t i : index) out.positions.push_back(db.positions[i]);
  const std::size_t n = db.grid.n_bins;
  for (const auto& s : db.subjects) {
    SubjectHrtf t{s.id, {}};
    t.spectra.reserve(index.size() * kEars * n);
    for (std::size_t i : index) {
      for (std::size_t e = 0; e < kEars; ++e) {
        auto src = s.spectrum(i, static_cast<Ear>(e), n);
        t.spectra.insert(t.spectra.end(), src.begin(), src.end());
      }
    }
    out.subjects.push_back(std::move(t));
  }
  return out;
}

}  // namespace hrtfnorm
