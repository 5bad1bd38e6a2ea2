#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hrtfnorm/core.hpp"

namespace hrtfnorm {

// Feature vectors with a database label and a subject group per sample.
struct LabeledDataset {
  std::vector<std::vector<double>> features;
  std::vector<int> labels;
  std::vector<std::string> groups;
  std::vector<std::string> label_names;

  std::size_t size() const { return features.size(); }
  std::size_t dimension() const { return features.empty() ? 0 : features.front().size(); }
  std::vector<std::size_t> class_counts() const;
  // Cross-validation needs at least two populated classes.
  bool usable_for_cv() const;
  void validate() const;

  LabeledDataset subset(std::span<const std::size_t> index) const;
};

// One sample per (selected subject, position, ear), dB spectrum as features.
// Subjects are drawn per database without replacement from a seeded stream.
LabeledDataset build_dataset(std::span<const Database> dbs, std::span<const SourcePosition> positions,
                             std::size_t subjects_per_db, std::uint64_t seed);

// Solution of one soft-margin dual: max sum(a) - 1/2 a'Qa, 0 <= a <= C, y'a = 0,
// with Q_ij = y_i y_j K_ij.
struct DualSolution {
  std::vector<double> alpha;
  double rho = 0.0;        // decision f(x) = sum a_i y_i K(x_i, x) - rho
  double objective = 0.0;  // dual objective value (maximisation form)
  double kkt_gap = 0.0;    // max violating-pair gap at exit
  std::size_t iterations = 0;
};

struct SmoOptions {
  double tolerance = 1e-3;
  std::size_t max_iterations = 1'000'000;
};

// SMO with second-order working-set selection on a dense kernel matrix
// (row-major n x n). Labels are +1 / -1.
DualSolution solve_svm_dual(std::span<const double> kernel, std::span<const int> y, double C,
                            const SmoOptions& options = {});

// Dual objective evaluated directly from alpha.
double svm_dual_objective(std::span<const double> kernel, std::span<const int> y,
                          std::span<const double> alpha);

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // population std; 1 for constant dimensions

  static Standardizer fit(const std::vector<std::vector<double>>& x);
  std::vector<double> apply(std::span<const double> x) const;
};

struct BinarySvm {
  int positive = 0;  // label voted for when f(x) > 0
  int negative = 0;
  std::vector<std::vector<double>> support_vectors;  // standardized
  std::vector<double> coef;                          // alpha_i * y_i
  std::vector<double> alpha;
  std::vector<int> sign;  // y_i of each support vector
  double rho = 0.0;
  double kkt_gap = 0.0;
  std::size_t iterations = 0;
};

struct SvmModel {
  double C = 1.0;
  double gamma = 0.0;
  Standardizer standardizer;
  std::vector<int> classes;  // ascending labels seen in training
  std::vector<BinarySvm> pairs;  // (classes[i], classes[j]) for i < j, lexicographic

  std::size_t dimension() const { return standardizer.mean.size(); }

  // Pairwise decision values f(x), same order as `pairs`.
  std::vector<double> decision_values(std::span<const double> x) const;
  // One-vs-one vote; a tie goes to the lowest class label.
  int predict(std::span<const double> x) const;
};

// gamma == nullopt selects 1 / (d * mean variance of the standardized features).
SvmModel train_csvc(const LabeledDataset& train, double C = 1.0, std::optional<double> gamma = {},
                    const SmoOptions& options = {});

enum class FoldStrategy { SubjectDisjoint, SampleStratified };
std::string_view to_string(FoldStrategy s);
FoldStrategy parse_fold_strategy(std::string_view text);

struct CvReport {
  std::size_t folds = 0;
  FoldStrategy strategy = FoldStrategy::SubjectDisjoint;
  std::uint64_t seed = 0;
  double C = 1.0;
  std::optional<double> gamma;
  std::vector<std::string> label_names;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<double> fold_accuracies;
  double mean_accuracy = 0.0;  // trace / total

  std::string to_text() const;
  std::string confusion_csv() const;
  bool operator==(const CvReport&) const = default;
};

// Fold index per sample.
std::vector<std::size_t> assign_folds(const LabeledDataset& ds, std::size_t k, FoldStrategy strategy,
                                      std::uint64_t seed);

CvReport cross_validate(const LabeledDataset& ds, std::size_t k = 5,
                        FoldStrategy strategy = FoldStrategy::SubjectDisjoint, double C = 1.0,
                        std::optional<double> gamma = {}, std::uint64_t seed = 0,
                        const SmoOptions& options = {});

}  // namespace hrtfnorm
