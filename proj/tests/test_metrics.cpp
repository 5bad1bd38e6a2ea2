#include "doctest.h"
#include "hrtfnorm/error.hpp"
#include "hrtfnorm/metrics.hpp"
#include "support.hpp"

using namespace hrtfnorm;

namespace {

SpectrumSet make_set(std::size_t rows, std::size_t n, double fill = 0.0) {
  SpectrumSet s;
  s.n_bins = n;
  s.values.assign(rows * n, fill);
  return s;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("band selection is inclusive") {
  FrequencyGrid g{48000, 129};  // 187.5 Hz spacing
  auto [a, b] = BandSelection{375.0, 750.0}.bins(g);
  CHECK(a == 2);
  CHECK(b == 5);
  auto [c, d] = BandSelection{}.bins(g);
  CHECK(c == 2);  // 375 Hz is the first bin above 200
  CHECK(d == 97); // 18000 Hz is bin 96
  auto full = BandSelection::full(g).bins(g);
  CHECK(full.first == 0);
  CHECK(full.second == 129);
  CHECK_THROWS_AS((BandSelection{100.0, 150.0}.bins(g)), ValidationError);
  CHECK_THROWS_AS((BandSelection{500.0, 400.0}.bins(g)), ValidationError);
  CHECK_THROWS_AS((BandSelection{0.0, 30000.0}.bins(g)), ValidationError);
}

TEST_CASE("identity and constant ratio") {
  FrequencyGrid g{48000, 33};
  auto t = make_set(4, 33, 1.0);
  CHECK(lsd(t, t, g) == 0.0);
  auto p = make_set(4, 33, 1.0 + 6.020599913);
  CHECK(std::abs(lsd(t, p, g) - 6.020599913) <= 1e-9);
}

TEST_CASE("two-bin example") {
  FrequencyGrid g{4, 2};  // bins at 0 and 2 Hz
  auto t = make_set(1, 2), p = make_set(1, 2);
  p.values[1] = -6.020599913;
  // 4.2573 to four places; the exact value is 4.257206...
  CHECK(std::abs(lsd(t, p, g, BandSelection::full(g)) - 4.2573) <= 1e-4);
  CHECK(std::abs(lsd(t, p, g, BandSelection::full(g)) - std::sqrt(6.020599913 * 6.020599913 / 2)) <= 1e-12);
}

TEST_CASE("matches a literal evaluation of the formula") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = 1 + rng.below(6), n = 2 + rng.below(40);
    FrequencyGrid g{48000, n};
    auto t = make_set(rows, n), p = make_set(rows, n);
    std::vector<std::vector<double>> tt(rows, std::vector<double>(n)), pp = tt;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < n; ++k) {
        tt[r][k] = t.values[r * n + k] = rng.uniform(-30, 30);
        pp[r][k] = p.values[r * n + k] = rng.uniform(-30, 30);
      }
    auto band = BandSelection::full(g);
    CHECK(std::abs(lsd(t, p, g, band) - testing::brute_force_lsd(tt, pp, 0, n)) <= 1e-12);
    CHECK(lsd(t, p, g, band) == doctest::Approx(lsd(p, t, g, band)).epsilon(1e-15));
  }
}

TEST_CASE("per-position values combine back to the global value") {
  FrequencyGrid g{48000, 65};
  Rng rng(3);
  auto t = make_set(6, 65), p = make_set(6, 65);
  for (auto& v : p.values) v = rng.uniform(-5, 5);
  auto per = lsd_per_position(t, p, g);
  double sq = 0.0;
  for (double v : per) sq += v * v;
  CHECK(std::abs(std::sqrt(sq / 6) - lsd(t, p, g)) <= 1e-12);

  // uniform error: every row equals the global value
  auto u = make_set(6, 65, 2.5);
  for (double v : lsd_per_position(t, u, g)) CHECK(std::abs(v - 2.5) <= 1e-12);

  // error at one of P rows: global = that row / sqrt(P)
  auto one = make_set(6, 65);
  for (std::size_t k = 0; k < 65; ++k) one.values[3 * 65 + k] = rng.uniform(-4, 4);
  auto rows = lsd_per_position(t, one, g);
  CHECK(std::abs(lsd(t, one, g) - rows[3] / std::sqrt(6.0)) <= 1e-12);
}

TEST_CASE("reference shift leaves LSD unchanged") {
  FrequencyGrid g{48000, 33};
  Rng rng(9);
  auto t = make_set(3, 33), p = make_set(3, 33);
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    t.values[i] = rng.uniform(-10, 10);
    p.values[i] = rng.uniform(-10, 10);
  }
  auto ts = t, ps = p;
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    const double c = rng.uniform(-12, 12);
    ts.values[i] += c;
    ps.values[i] += c;
  }
  CHECK(std::abs(lsd(t, p, g) - lsd(ts, ps, g)) <= 1e-12);
}

TEST_CASE("shape errors") {
  FrequencyGrid g{48000, 33};
  CHECK_THROWS_AS(lsd(make_set(2, 33), make_set(3, 33), g), DimensionError);
  CHECK_THROWS_AS(lsd(make_set(2, 17), make_set(2, 17), g), DimensionError);
  CHECK_THROWS_AS(lsd_per_position(make_set(0, 33), make_set(0, 33), g), ValidationError);
}

TEST_CASE("subject rows follow position then ear") {
  auto db = testing::random_database(2, {SourcePosition::make(0, 0), SourcePosition::make(90, 0)}, 5, 1);
  auto both = subject_spectra(db, 1);
  CHECK(both.rows() == 4);
  CHECK(both.row(3)[2] == db.spectrum(1, 1, Ear::Right)[2]);
  auto left = subject_spectra(db, 1, false);
  CHECK(left.rows() == 2);
  CHECK(left.row(1)[4] == db.spectrum(1, 1, Ear::Left)[4]);
}

}
