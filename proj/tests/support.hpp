#pragma once
// Helpers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hrtfnorm/core.hpp"
#include "hrtfnorm/rng.hpp"

namespace testing {

using namespace hrtfnorm;

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hrtfnorm_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Database with uniformly random dB values in [-20, 20].
inline Database random_database(std::size_t subjects, std::vector<SourcePosition> positions,
                                std::size_t n_bins, std::uint64_t seed, std::string name = "rand") {
  Database db;
  db.name = std::move(name);
  db.grid = {48000, n_bins};
  db.positions = std::move(positions);
  Rng rng(seed, "random_database");
  for (std::size_t s = 0; s < subjects; ++s) {
    SubjectHrtf h;
    h.id = "S" + std::to_string(s);
    h.spectra.resize(db.values_per_subject());
    for (auto& v : h.spectra) v = rng.uniform(-20.0, 20.0);
    db.subjects.push_back(std::move(h));
  }
  return db;
}

// ---- SVM dual oracles -------------------------------------------------------

struct TinySvm {
  std::vector<double> kernel;  // n x n
  std::vector<int> y;
  double C = 1.0;
  std::size_t n() const { return y.size(); }
};

inline TinySvm random_tiny_svm(std::size_t n, std::uint64_t seed) {
  Rng rng(seed, "tiny_svm");
  TinySvm t;
  t.C = rng.uniform(0.2, 5.0);
  const double gamma = rng.uniform(0.2, 1.5);
  std::vector<std::array<double, 2>> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    t.y.push_back(i % 2 == 0 ? 1 : -1);
    const double shift = t.y.back() > 0 ? 0.6 : -0.6;
    x[i] = {rng.normal() + shift, rng.normal()};
  }
  t.kernel.resize(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = x[i][0] - x[j][0], dy = x[i][1] - x[j][1];
      t.kernel[i * n + j] = std::exp(-gamma * (dx * dx + dy * dy));
    }
  return t;
}

inline double dual_objective(const TinySvm& t, const std::vector<double>& a) {
  const std::size_t n = t.n();
  double lin = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    lin += a[i];
    for (std::size_t j = 0; j < n; ++j) quad += a[i] * a[j] * t.y[i] * t.y[j] * t.kernel[i * n + j];
  }
  return lin - 0.5 * quad;
}

// Dense Gaussian elimination with partial pivoting; false when singular.
inline bool solve_linear(std::vector<double> a, std::vector<double> b, std::size_t n, std::vector<double>& x) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    if (std::abs(a[piv * n + c]) < 1e-12) return false;
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * n + c] / a[c * n + c];
      for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
      b[r] -= f * b[c];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= a[r * n + k] * x[k];
    x[r] = s / a[r * n + r];
  }
  return true;
}

// Exact maximum of the dual by enumerating every face of the box: each alpha
// is pinned at 0, pinned at C, or free. On a face the equality-constrained
// stationary point is a linear solve; the best feasible one is the optimum
// (the objective is concave, so the maximiser is stationary on its face).
// 3^n faces, so keep n <= 10.
inline double brute_force_dual_exact(const TinySvm& t) {
  const std::size_t n = t.n();
  std::size_t faces = 1;
  for (std::size_t i = 0; i < n; ++i) faces *= 3;
  double best = -1e300;
  std::vector<int> state(n);
  for (std::size_t code = 0; code < faces; ++code) {
    std::size_t c = code;
    std::vector<std::size_t> free_idx;
    std::vector<double> a(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      state[i] = static_cast<int>(c % 3);
      c /= 3;
      if (state[i] == 1) a[i] = t.C;
      if (state[i] == 2) free_idx.push_back(i);
    }
    const std::size_t m = free_idx.size();
    if (m == 0) {
      double eq = 0.0;
      for (std::size_t i = 0; i < n; ++i) eq += t.y[i] * a[i];
      if (std::abs(eq) < 1e-12) best = std::max(best, dual_objective(t, a));
      continue;
    }
    // [Q_FF y_F; y_F' 0] [a_F; lambda] = [1 - Q_FB a_B; -y_B' a_B]
    const std::size_t dim = m + 1;
    std::vector<double> A(dim * dim, 0.0), b(dim, 0.0), sol;
    double fixed_eq = 0.0;
    for (std::size_t i = 0; i < n; ++i) fixed_eq += t.y[i] * a[i];
    for (std::size_t r = 0; r < m; ++r) {
      const std::size_t i = free_idx[r];
      double rhs = 1.0;
      for (std::size_t j = 0; j < n; ++j)
        if (state[j] == 1) rhs -= t.y[i] * t.y[j] * t.kernel[i * n + j] * a[j];
      b[r] = rhs;
      for (std::size_t q = 0; q < m; ++q) {
        const std::size_t j = free_idx[q];
        A[r * dim + q] = t.y[i] * t.y[j] * t.kernel[i * n + j];
      }
      A[r * dim + m] = t.y[i];
      A[m * dim + r] = t.y[i];
    }
    b[m] = -fixed_eq;
    if (!solve_linear(A, b, dim, sol)) continue;
    bool feasible = true;
    for (std::size_t r = 0; r < m; ++r) {
      if (sol[r] < -1e-12 || sol[r] > t.C + 1e-12) feasible = false;
      a[free_idx[r]] = std::clamp(sol[r], 0.0, t.C);
    }
    if (feasible) best = std::max(best, dual_objective(t, a));
  }
  return best;
}

// Euclidean projection onto {0 <= a <= C, y'a = 0}, by bisection on the
// multiplier of the equality constraint.
inline std::vector<double> project_feasible(const std::vector<double>& v, const TinySvm& t) {
  const std::size_t n = t.n();
  auto at = [&](double mu, std::vector<double>& out) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = std::clamp(v[i] - mu * t.y[i], 0.0, t.C);
      s += t.y[i] * out[i];
    }
    return s;
  };
  std::vector<double> out(n);
  double lo = -1e3, hi = 1e3;  // s(mu) is non-increasing in mu
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (at(mid, out) > 0.0) lo = mid; else hi = mid;
  }
  at(0.5 * (lo + hi), out);
  return out;
}

// Accelerated projected-gradient ascent; independent of SMO.
inline double brute_force_dual_pga(const TinySvm& t, int iterations = 20000) {
  const std::size_t n = t.n();
  // Lipschitz bound: the Gershgorin radius of Q.
  double L = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += std::abs(t.kernel[i * n + j]);
    L = std::max(L, row);
  }
  std::vector<double> a(n, 0.0), prev = a, w = a, grad(n);
  double best = dual_objective(t, a), theta = 1.0;
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double q = 0.0;
      for (std::size_t j = 0; j < n; ++j) q += t.y[i] * t.y[j] * t.kernel[i * n + j] * w[j];
      grad[i] = 1.0 - q;
    }
    std::vector<double> step(n);
    for (std::size_t i = 0; i < n; ++i) step[i] = w[i] + grad[i] / L;
    prev = a;
    a = project_feasible(step, t);
    const double next_theta = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    for (std::size_t i = 0; i < n; ++i) w[i] = a[i] + (theta - 1.0) / next_theta * (a[i] - prev[i]);
    theta = next_theta;
    best = std::max(best, dual_objective(t, a));
  }
  return best;
}

// Largest violation of the dual KKT conditions: max over (up, low) pairs of
// -y_i g_i + y_j g_j, with g = Q a - 1 (the libsvm gap), evaluated from alpha.
inline double kkt_residual(const TinySvm& t, const std::vector<double>& a) {
  const std::size_t n = t.n();
  double up = -1e300, low = 1e300;
  for (std::size_t i = 0; i < n; ++i) {
    double g = -1.0;
    for (std::size_t j = 0; j < n; ++j) g += t.y[i] * t.y[j] * t.kernel[i * n + j] * a[j];
    const double v = -t.y[i] * g;
    const bool in_up = (t.y[i] > 0 && a[i] < t.C) || (t.y[i] < 0 && a[i] > 0);
    const bool in_low = (t.y[i] > 0 && a[i] > 0) || (t.y[i] < 0 && a[i] < t.C);
    if (in_up) up = std::max(up, v);
    if (in_low) low = std::min(low, v);
  }
  return std::max(0.0, up - low);
}

// ---- LSD oracle ----------------------------------------------------------------

// LSD evaluated literally from magnitudes: sqrt(1/P sum_p 1/N sum_n (20 log10(|H|/|H^|))^2)
// with the magnitudes rebuilt from dB.
inline double brute_force_lsd(const std::vector<std::vector<double>>& truth_db,
                              const std::vector<std::vector<double>>& pred_db, std::size_t first,
                              std::size_t last) {
  double outer = 0.0;
  for (std::size_t p = 0; p < truth_db.size(); ++p) {
    double inner = 0.0;
    for (std::size_t k = first; k < last; ++k) {
      const double h = std::pow(10.0, truth_db[p][k] / 20.0);
      const double h_hat = std::pow(10.0, pred_db[p][k] / 20.0);
      const double d = 20.0 * std::log10(h / h_hat);
      inner += d * d;
    }
    outer += inner / static_cast<double>(last - first);
  }
  return std::sqrt(outer / static_cast<double>(truth_db.size()));
}

}  // namespace testing
