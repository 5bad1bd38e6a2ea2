#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hrtfnorm/augment.hpp"
#include "hrtfnorm/core.hpp"
#include "hrtfnorm/metrics.hpp"
#include "hrtfnorm/normalize.hpp"

namespace hrtfnorm {

struct FieldHyperparams {
  std::size_t latent_dim = 16;
  std::size_t hidden_width = 128;
  std::size_t hidden_layers = 3;
  std::size_t frequencies = 4;  // sinusoidal encoding octaves per coordinate
  double generator_step = 1e-3;
  double latent_step = 1e-2;
  std::size_t epochs = 200;
  std::size_t train_latent_steps = 1;  // latent updates per subject per epoch
  std::size_t latent_steps = 200;      // latent updates when inferring an unseen subject
  std::uint64_t seed = 0;

  void validate() const;
  Json to_json() const;
  static FieldHyperparams from_json(const Json& j);
  bool operator==(const FieldHyperparams&) const = default;
};

// Direction (x front, y left, z up) followed by sin/cos(2^k * c) for each
// direction component c and k < frequencies. Length 3 + 6 * frequencies.
std::vector<double> encode_position(const SourcePosition& p, std::size_t frequencies);

// tanh MLP G(position, z) -> dB spectrum, plus the auto-decoder latent table.
struct FieldModel {
  FieldHyperparams hp;
  FrequencyGrid grid;
  // Layer widths, input first: [3 + 6F + latent_dim, hidden..., n_bins].
  std::vector<std::size_t> layer_sizes;
  // Per layer: weights (out x in, row-major) then bias (out).
  std::vector<double> params;
  std::vector<std::string> subject_ids;
  std::vector<double> latents;  // [subject][latent_dim]
  std::vector<double> loss_curve;  // epoch-mean training MSE
  Json provenance = Json::object();

  // Randomly initialised generator (seeded Xavier-uniform), zero latents.
  static FieldModel create(const FieldHyperparams& hp, const FrequencyGrid& grid,
                           std::vector<std::string> subject_ids = {});

  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::span<const double> latent(std::size_t subject) const {
    return {latents.data() + subject * hp.latent_dim, hp.latent_dim};
  }
  std::span<double> latent(std::size_t subject) {
    return {latents.data() + subject * hp.latent_dim, hp.latent_dim};
  }

  void validate() const;
  bool operator==(const FieldModel&) const = default;
};

std::vector<double> forward(const FieldModel& model, const SourcePosition& p,
                            std::span<const double> z);

struct FieldSample {
  SourcePosition position;
  std::vector<double> z;
  std::vector<double> target;
};

struct FieldGradients {
  double loss = 0.0;                     // MSE over batch and bins
  std::vector<double> params;            // same layout as FieldModel::params
  std::vector<std::vector<double>> latents;  // d loss / d z, one per sample
};

// Exact gradients of the batch MSE.
FieldGradients gradients(const FieldModel& model, std::span<const FieldSample> batch);

// Auto-decoder training on left-ear data of the given databases (augmented
// databases are the intended input). Latents start at zero and persist
// across epochs.
FieldModel train_field(std::span<const Database> training_dbs, const FieldHyperparams& hp);

struct LatentFit {
  std::vector<double> z;
  double mse = 0.0;
};

// Gradient descent on z with the generator frozen, from `start` (zero when
// absent). Returns the best iterate, so mse never exceeds the start's.
LatentFit infer_latent(const FieldModel& model, std::span<const SourcePosition> positions,
                       std::span<const std::vector<double>> spectra,
                       std::optional<std::span<const double>> start = {});

// Left-ear spectra of one database subject, one row per position.
std::vector<std::vector<double>> left_ear_rows(const Database& db, std::size_t subject);

// Single-subject database with G(p, z) at every position (right slot copies
// left). `normalization` is copied into the provenance for de-normalization.
Database reconstruct(const FieldModel& model, std::span<const double> z,
                     std::span<const SourcePosition> positions, const Json& normalization = nullptr);

void save_field_model(const FieldModel& model, const std::filesystem::path& path);
FieldModel load_field_model(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_field_model(const FieldModel& model);
FieldModel decode_field_model(std::span<const std::uint8_t> bytes);

std::string loss_curve_csv(std::span<const double> curve);

struct SubjectLsd {
  std::string subject;
  double lsd = 0.0;
  double latent_mse = 0.0;
};

struct ExperimentReport {
  std::string mode;  // "none" or a normalization mode
  std::string test_database;
  std::vector<std::string> train_databases;
  std::size_t positions = 0;
  double mean_lsd = 0.0;
  std::vector<SubjectLsd> subjects;
  std::vector<double> loss_curve;

  std::string to_text() const;
  std::string subjects_csv() const;
};

// Infer + reconstruct every subject of `db` (left ear) and score it with LSD.
ExperimentReport evaluate_reconstruction(const FieldModel& model, const Database& db,
                                         const BandSelection& band = {});

// Cross-database reconstruction: normalise each database by its own average
// (skipped when mode is nullopt), mirror-augment, train on the training
// databases and score reconstructions of the test database.
ExperimentReport cross_db_experiment(std::span<const Database> train_dbs, const Database& test_db,
                                     std::optional<NormalizationMode> mode,
                                     const FieldHyperparams& hp, const BandSelection& band = {});

}  // namespace hrtfnorm
