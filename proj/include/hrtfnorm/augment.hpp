#pragma once

#include "hrtfnorm/core.hpp"

namespace hrtfnorm {

// azimuth -> (360 - azimuth) mod 360; elevation and distance unchanged.
SourcePosition mirror_position(const SourcePosition& p);

// Left-ear-only database produced by ear mirroring. Subjects come in pairs
// "<id>:L" (the original left ear) and "<id>:R" (the right ear re-indexed
// onto mirrored positions). In the wrapped Database the right-ear slot is a
// copy of the left so that it stays a valid HRTFDB v1 container.
struct AugmentedDatabase {
  Database db;

  std::size_t subject_count() const { return db.subjects.size(); }
  std::span<const double> left(std::size_t subject, std::size_t position) const {
    return db.spectrum(subject, position, Ear::Left);
  }
};

AugmentedDatabase mirror_augment(const Database& db, double tol = kPositionTolerance);

}  // namespace hrtfnorm
