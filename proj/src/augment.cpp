#include "hrtfnorm/augment.hpp"

#include <sstream>

#include "hrtfnorm/error.hpp"

namespace hrtfnorm {

SourcePosition mirror_position(const SourcePosition& p) {
  return SourcePosition::make(360.0 - p.azimuth, p.elevation, p.distance);
}

AugmentedDatabase mirror_augment(const Database& db, double tol) {
  db.validate();
  std::vector<std::size_t> mirror_of(db.positions.size());
  std::ostringstream unmatched;
  bool closed = true;
  for (std::size_t p = 0; p < db.positions.size(); ++p) {
    mirror_of[p] = db.find_position(mirror_position(db.positions[p]), tol);
    if (mirror_of[p] == npos) {
      unmatched << (closed ? "" : ", ") << "(" << db.positions[p].azimuth << ", "
                << db.positions[p].elevation << ")";
      closed = false;
    }
  }
  if (!closed) {
    throw ValidationError("database '" + db.name +
                          "' is not closed under mirroring; unmatched positions: " + unmatched.str());
  }

  const std::size_t n = db.grid.n_bins;
  AugmentedDatabase out;
  out.db.name = db.name;
  out.db.grid = db.grid;
  out.db.positions = db.positions;
  out.db.provenance = db.provenance;
  out.db.provenance["augmentation"] = "ear-mirror; right slot duplicates left";

  for (const auto& s : db.subjects) {
    SubjectHrtf from_left{s.id + ":L", std::vector<double>(s.spectra.size())};
    SubjectHrtf from_right{s.id + ":R", std::vector<double>(s.spectra.size())};
    for (std::size_t p = 0; p < db.positions.size(); ++p) {
      // The right ear at p becomes a left ear at mirror(p).
      const auto left = s.spectrum(p, Ear::Left, n);
      const auto right = s.spectrum(p, Ear::Right, n);
      const std::size_t q = mirror_of[p];
      for (std::size_t e = 0; e < kEars; ++e) {
        std::copy(left.begin(), left.end(), from_left.spectrum(p, static_cast<Ear>(e), n).begin());
        std::copy(right.begin(), right.end(), from_right.spectrum(q, static_cast<Ear>(e), n).begin());
      }
    }
    out.db.subjects.push_back(std::move(from_left));
    out.db.subjects.push_back(std::move(from_right));
  }
  return out;
}

}  // namespace hrtfnorm
