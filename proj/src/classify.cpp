#include "hrtfnorm/classify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "hrtfnorm/error.hpp"
#include "hrtfnorm/rng.hpp"

namespace hrtfnorm {

// ---------------------------------------------------------------------------
// Dataset

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(label_names.size(), 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

bool LabeledDataset::usable_for_cv() const {
  const auto counts = class_counts();
  return std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) >= 2;
}

void LabeledDataset::validate() const {
  if (labels.size() != features.size() || groups.size() != features.size()) {
    throw DimensionError("labeled dataset: features, labels and groups differ in length");
  }
  const std::size_t d = dimension();
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != d) {
      throw DimensionError("labeled dataset: sample " + std::to_string(i) + " has dimension " +
                           std::to_string(features[i].size()) + ", expected " + std::to_string(d));
    }
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= label_names.size()) {
      throw ValidationError("labeled dataset: sample " + std::to_string(i) + " has unknown label");
    }
    for (double v : features[i]) {
      if (!std::isfinite(v)) {
        throw ValidationError("labeled dataset: non-finite feature in sample " + std::to_string(i));
      }
    }
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> index) const {
  LabeledDataset out;
  out.label_names = label_names;
  for (std::size_t i : index) {
    out.features.push_back(features[i]);
    out.labels.push_back(labels[i]);
    out.groups.push_back(groups[i]);
  }
  return out;
}

namespace {

// Synthetic databases drawn from one listener pool share subjects; the pool
// seed then identifies the listener across databases.
std::string group_key(const Database& db, std::size_t subject) {
  const auto it = db.provenance.find("pool_seed");
  if (it != db.provenance.end() && it->is_number_unsigned()) {
    return "pool" + std::to_string(it->get<std::uint64_t>()) + "/" + db.subjects[subject].id;
  }
  return db.name + "/" + db.subjects[subject].id;
}

}  // namespace

LabeledDataset build_dataset(std::span<const Database> dbs, std::span<const SourcePosition> positions,
                             std::size_t subjects_per_db, std::uint64_t seed) {
  if (dbs.empty()) throw ValidationError("build_dataset: no databases");
  if (positions.empty()) throw ValidationError("build_dataset: no positions");
  LabeledDataset ds;
  const Rng root(seed, "dataset-subjects");
  for (std::size_t d = 0; d < dbs.size(); ++d) {
    const Database& db = dbs[d];
    if (db.grid != dbs.front().grid) {
      throw DimensionError("build_dataset: '" + db.name + "' uses a different frequency grid");
    }
    if (db.subjects.size() < subjects_per_db) {
      throw ValidationError("build_dataset: database '" + db.name + "' has " +
                            std::to_string(db.subjects.size()) + " subjects, " +
                            std::to_string(subjects_per_db) + " requested");
    }
    std::vector<std::size_t> pos_index;
    for (const auto& p : positions) {
      const std::size_t i = db.find_position(p);
      if (i == npos) {
        throw DimensionError("build_dataset: database '" + db.name + "' lacks position (" +
                             std::to_string(p.azimuth) + ", " + std::to_string(p.elevation) + ")");
      }
      pos_index.push_back(i);
    }
    std::vector<std::size_t> chosen(db.subjects.size());
    std::iota(chosen.begin(), chosen.end(), 0);
    Rng rng = root.split(d);
    rng.shuffle(chosen.begin(), chosen.end());
    chosen.resize(subjects_per_db);
    std::sort(chosen.begin(), chosen.end());

    ds.label_names.push_back(db.name);
    for (std::size_t s : chosen) {
      for (std::size_t p : pos_index) {
        for (std::size_t e = 0; e < kEars; ++e) {
          auto spec = db.spectrum(s, p, static_cast<Ear>(e));
          ds.features.emplace_back(spec.begin(), spec.end());
          ds.labels.push_back(static_cast<int>(d));
          ds.groups.push_back(group_key(db, s));
        }
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// SMO

DualSolution solve_svm_dual(std::span<const double> kernel, std::span<const int> y, double C,
                            const SmoOptions& options) {
  const std::size_t n = y.size();
  if (kernel.size() != n * n) throw DimensionError("solve_svm_dual: kernel is not n x n");
  if (!(C > 0.0)) throw ValidationError("solve_svm_dual: C must be positive");
  for (double k : kernel) {
    if (!std::isfinite(k)) throw NumericError("solve_svm_dual: non-finite kernel value");
  }
  constexpr double kTau = 1e-12;
  const auto K = [&](std::size_t i, std::size_t j) { return kernel[i * n + j]; };
  const auto Q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * K(i, j); };

  DualSolution sol;
  sol.alpha.assign(n, 0.0);
  std::vector<double> grad(n, -1.0);  // gradient of 1/2 a'Qa - e'a
  auto& alpha = sol.alpha;
  const auto upper = [&](std::size_t t) { return alpha[t] >= C; };
  const auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

  for (;;) {
    // Working-set selection (second-order, Fan, Chen & Lin 2005).
    double gmax = -std::numeric_limits<double>::infinity();
    double gmax2 = -std::numeric_limits<double>::infinity();
    std::size_t i = npos;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (!upper(t) && -grad[t] >= gmax) {
          gmax = -grad[t];
          i = t;
        }
      } else if (!lower(t) && grad[t] >= gmax) {
        gmax = grad[t];
        i = t;
      }
    }
    std::size_t j = npos;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n && i != npos; ++t) {
      double diff = 0.0;
      double quad = 0.0;
      if (y[t] == 1) {
        if (lower(t)) continue;
        gmax2 = std::max(gmax2, grad[t]);
        diff = gmax + grad[t];
        quad = K(i, i) + K(t, t) - 2.0 * y[i] * Q(i, t);
      } else {
        if (upper(t)) continue;
        gmax2 = std::max(gmax2, -grad[t]);
        diff = gmax - grad[t];
        quad = K(i, i) + K(t, t) + 2.0 * y[i] * Q(i, t);
      }
      if (diff > 0.0) {
        const double obj = -(diff * diff) / (quad > 0.0 ? quad : kTau);
        if (obj <= best) {
          best = obj;
          j = t;
        }
      }
    }
    sol.kkt_gap = (i == npos) ? 0.0 : std::max(0.0, gmax + gmax2);
    if (i == npos || j == npos || gmax + gmax2 < options.tolerance) break;

    if (sol.iterations >= options.max_iterations) {
      std::ostringstream msg;
      msg << "SMO did not converge within " << options.max_iterations
          << " pair updates (KKT gap " << gmax + gmax2 << ", tolerance " << options.tolerance
          << ", n = " << n << ", C = " << C << ")";
      throw NumericError(msg.str());
    }
    ++sol.iterations;

    const double old_i = alpha[i];
    const double old_j = alpha[j];
    if (y[i] != y[j]) {
      double quad = K(i, i) + K(j, j) + 2.0 * Q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = K(i, i) + K(j, j) - 2.0 * Q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }
    const double di = alpha[i] - old_i;
    const double dj = alpha[j] - old_j;
    for (std::size_t t = 0; t < n; ++t) grad[t] += Q(i, t) * di + Q(j, t) * dj;
  }

  // Bias from free vectors, or the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (upper(t)) {
      if (y[t] == -1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (y[t] == 1) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++free;
      sum_free += yg;
    }
  }
  sol.rho = free > 0 ? sum_free / static_cast<double>(free) : 0.5 * (ub + lb);

  double obj = 0.0;
  for (std::size_t t = 0; t < n; ++t) obj += alpha[t] * (grad[t] - 1.0);
  sol.objective = -0.5 * obj;
  return sol;
}

double svm_dual_objective(std::span<const double> kernel, std::span<const int> y,
                          std::span<const double> alpha) {
  const std::size_t n = y.size();
  double linear = 0.0;
  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    linear += alpha[i];
    for (std::size_t j = 0; j < n; ++j) quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel[i * n + j];
  }
  return linear - 0.5 * quad;
}

// ---------------------------------------------------------------------------
// Model

namespace {

double rbf(std::span<const double> a, std::span<const double> b, double gamma) {
  double d2 = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

}  // namespace

Standardizer Standardizer::fit(const std::vector<std::vector<double>>& x) {
  Standardizer s;
  if (x.empty()) return s;
  const std::size_t d = x.front().size();
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 0.0);
  for (const auto& row : x) {
    for (std::size_t k = 0; k < d; ++k) s.mean[k] += row[k];
  }
  for (auto& m : s.mean) m /= static_cast<double>(x.size());
  for (const auto& row : x) {
    for (std::size_t k = 0; k < d; ++k) {
      const double c = row[k] - s.mean[k];
      s.scale[k] += c * c;
    }
  }
  for (auto& v : s.scale) {
    v = std::sqrt(v / static_cast<double>(x.size()));
    if (!(v > 1e-12)) v = 1.0;
  }
  return s;
}

std::vector<double> Standardizer::apply(std::span<const double> x) const {
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - mean[k]) / scale[k];
  return out;
}

std::vector<double> SvmModel::decision_values(std::span<const double> x) const {
  if (x.size() != dimension()) {
    throw DimensionError("predict: feature dimension " + std::to_string(x.size()) +
                         " does not match model dimension " + std::to_string(dimension()));
  }
  const auto z = standardizer.apply(x);
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& pair : pairs) {
    double f = -pair.rho;
    for (std::size_t i = 0; i < pair.support_vectors.size(); ++i) {
      f += pair.coef[i] * rbf(pair.support_vectors[i], z, gamma);
    }
    out.push_back(f);
  }
  return out;
}

int SvmModel::predict(std::span<const double> x) const {
  const auto f = decision_values(x);
  std::map<int, int> votes;
  for (int c : classes) votes[c] = 0;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    ++votes[f[p] > 0.0 ? pairs[p].positive : pairs[p].negative];
  }
  int best = classes.front();
  for (const auto& [label, count] : votes) {
    if (count > votes[best]) best = label;  // ascending iteration keeps the lowest label on ties
  }
  return best;
}

SvmModel train_csvc(const LabeledDataset& train, double C, std::optional<double> gamma,
                    const SmoOptions& options) {
  train.validate();
  if (!(C > 0.0)) throw ValidationError("train_csvc: C must be positive");
  if (gamma && !(*gamma > 0.0)) throw ValidationError("train_csvc: gamma must be positive");

  SvmModel model;
  model.C = C;
  model.standardizer = Standardizer::fit(train.features);
  std::vector<std::vector<double>> z;
  z.reserve(train.size());
  for (const auto& x : train.features) z.push_back(model.standardizer.apply(x));

  const std::size_t d = train.dimension();
  if (gamma) {
    model.gamma = *gamma;
  } else {
    double mean_var = 0.0;
    std::vector<double> mu(d, 0.0);
    for (const auto& row : z) {
      for (std::size_t k = 0; k < d; ++k) mu[k] += row[k];
    }
    for (auto& m : mu) m /= static_cast<double>(z.size());
    for (const auto& row : z) {
      for (std::size_t k = 0; k < d; ++k) mean_var += (row[k] - mu[k]) * (row[k] - mu[k]);
    }
    mean_var /= static_cast<double>(z.size() * d);
    model.gamma = mean_var > 0.0 ? 1.0 / (static_cast<double>(d) * mean_var) : 1.0 / static_cast<double>(d);
  }

  for (int l : train.labels) {
    if (std::find(model.classes.begin(), model.classes.end(), l) == model.classes.end()) {
      model.classes.push_back(l);
    }
  }
  std::sort(model.classes.begin(), model.classes.end());
  if (model.classes.size() < 2) throw ValidationError("train_csvc: need at least two classes");

  for (std::size_t a = 0; a < model.classes.size(); ++a) {
    for (std::size_t b = a + 1; b < model.classes.size(); ++b) {
      std::vector<std::size_t> idx;
      std::vector<int> y;
      for (std::size_t i = 0; i < train.size(); ++i) {
        if (train.labels[i] == model.classes[a]) {
          idx.push_back(i);
          y.push_back(1);
        } else if (train.labels[i] == model.classes[b]) {
          idx.push_back(i);
          y.push_back(-1);
        }
      }
      const std::size_t n = idx.size();
      std::vector<double> kernel(n * n);
      for (std::size_t i = 0; i < n; ++i) {
        kernel[i * n + i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
          const double k = rbf(z[idx[i]], z[idx[j]], model.gamma);
          kernel[i * n + j] = k;
          kernel[j * n + i] = k;
        }
      }
      const DualSolution sol = solve_svm_dual(kernel, y, C, options);

      BinarySvm pair;
      pair.positive = model.classes[a];
      pair.negative = model.classes[b];
      pair.rho = sol.rho;
      pair.kkt_gap = sol.kkt_gap;
      pair.iterations = sol.iterations;
      for (std::size_t i = 0; i < n; ++i) {
        if (sol.alpha[i] > 0.0) {
          pair.support_vectors.push_back(z[idx[i]]);
          pair.alpha.push_back(sol.alpha[i]);
          pair.sign.push_back(y[i]);
          pair.coef.push_back(sol.alpha[i] * y[i]);
        }
      }
      model.pairs.push_back(std::move(pair));
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Cross-validation

std::string_view to_string(FoldStrategy s) {
  return s == FoldStrategy::SubjectDisjoint ? "subject-disjoint" : "sample-stratified";
}

FoldStrategy parse_fold_strategy(std::string_view text) {
  if (text == "subject-disjoint") return FoldStrategy::SubjectDisjoint;
  if (text == "sample-stratified") return FoldStrategy::SampleStratified;
  throw ValidationError("unknown fold strategy '" + std::string(text) + "'");
}

std::vector<std::size_t> assign_folds(const LabeledDataset& ds, std::size_t k, FoldStrategy strategy,
                                      std::uint64_t seed) {
  if (k < 2) throw ValidationError("cross-validation needs at least 2 folds");
  std::vector<std::size_t> fold(ds.size(), 0);
  const Rng root(seed, "cv-folds");
  if (strategy == FoldStrategy::SubjectDisjoint) {
    // Whole subjects go to one fold. Subjects are dealt class by class with a
    // running counter, so folds stay balanced; a subject seen in an earlier
    // class keeps its fold.
    std::map<std::string, std::size_t> unit_fold;
    std::size_t dealt = 0;
    for (std::size_t c = 0; c < ds.label_names.size(); ++c) {
      std::vector<std::string> units;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (static_cast<std::size_t>(ds.labels[i]) == c && !unit_fold.contains(ds.groups[i]) &&
            std::find(units.begin(), units.end(), ds.groups[i]) == units.end()) {
          units.push_back(ds.groups[i]);
        }
      }
      Rng rng = root.split(c);
      rng.shuffle(units.begin(), units.end());
      for (const auto& u : units) unit_fold[u] = dealt++ % k;
    }
    for (std::size_t i = 0; i < ds.size(); ++i) fold[i] = unit_fold[ds.groups[i]];
  } else {
    for (std::size_t c = 0; c < ds.label_names.size(); ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (static_cast<std::size_t>(ds.labels[i]) == c) members.push_back(i);
      }
      Rng rng = root.split(c);
      rng.shuffle(members.begin(), members.end());
      for (std::size_t u = 0; u < members.size(); ++u) fold[members[u]] = u % k;
    }
  }
  return fold;
}

CvReport cross_validate(const LabeledDataset& ds, std::size_t k, FoldStrategy strategy, double C,
                        std::optional<double> gamma, std::uint64_t seed, const SmoOptions& options) {
  ds.validate();
  if (!ds.usable_for_cv()) {
    throw ValidationError("cross-validation needs samples from at least two databases");
  }
  const auto fold = assign_folds(ds, k, strategy, seed);
  const std::size_t classes = ds.label_names.size();

  CvReport report;
  report.folds = k;
  report.strategy = strategy;
  report.seed = seed;
  report.C = C;
  report.gamma = gamma;
  report.label_names = ds.label_names;
  report.confusion.assign(classes, std::vector<std::size_t>(classes, 0));

  const auto counts = ds.class_counts();
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
    for (std::size_t i = 0; i < ds.size(); ++i) (fold[i] == f ? test_idx : train_idx).push_back(i);
    if (test_idx.empty()) {
      throw ValidationError("fold " + std::to_string(f) + " has no held-out samples; use fewer folds");
    }
    const LabeledDataset train = ds.subset(train_idx);
    const auto train_counts = train.class_counts();
    for (std::size_t c = 0; c < classes; ++c) {
      if (counts[c] > 0 && train_counts[c] == 0) {
        throw ValidationError("class '" + ds.label_names[c] + "' is absent from the training part of fold " +
                              std::to_string(f) + "; use fewer folds");
      }
    }
    const SvmModel model = train_csvc(train, C, gamma, options);
    std::size_t correct = 0;
    for (std::size_t i : test_idx) {
      const int predicted = model.predict(ds.features[i]);
      ++report.confusion[static_cast<std::size_t>(ds.labels[i])][static_cast<std::size_t>(predicted)];
      if (predicted == ds.labels[i]) ++correct;
    }
    report.fold_accuracies.push_back(static_cast<double>(correct) / static_cast<double>(test_idx.size()));
  }
  std::size_t trace = 0;
  std::size_t total = 0;
  for (std::size_t r = 0; r < classes; ++r) {
    for (std::size_t c = 0; c < classes; ++c) {
      total += report.confusion[r][c];
      if (r == c) trace += report.confusion[r][c];
    }
  }
  report.mean_accuracy = static_cast<double>(trace) / static_cast<double>(total);
  return report;
}

std::string CvReport::to_text() const {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "cross_validation:\n";
  out << "  folds: " << folds << "\n";
  out << "  strategy: " << to_string(strategy) << "\n";
  out << "  seed: " << seed << "\n";
  out << "  C: " << C << "\n";
  out << "  gamma: ";
  if (gamma) out << *gamma;
  else out << "auto";
  out << "\n";
  out << "  mean_accuracy: " << mean_accuracy << "\n";
  out << "  fold_accuracies: [";
  for (std::size_t i = 0; i < fold_accuracies.size(); ++i) out << (i ? ", " : "") << fold_accuracies[i];
  out << "]\n";
  out << "  confusion:  # rows = true database, columns = predicted\n";
  for (std::size_t r = 0; r < confusion.size(); ++r) {
    out << "    " << label_names[r] << ": [";
    for (std::size_t c = 0; c < confusion[r].size(); ++c) out << (c ? ", " : "") << confusion[r][c];
    out << "]\n";
  }
  return out.str();
}

std::string CvReport::confusion_csv() const {
  std::ostringstream out;
  out << "true\\predicted";
  for (const auto& name : label_names) out << "," << name;
  out << "\n";
  for (std::size_t r = 0; r < confusion.size(); ++r) {
    out << label_names[r];
    for (std::size_t v : confusion[r]) out << "," << v;
    out << "\n";
  }
  return out.str();
}

}  // namespace hrtfnorm
