#include "hrtfnorm/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "hrtfnorm/augment.hpp"
#include "hrtfnorm/classify.hpp"
#include "hrtfnorm/core.hpp"
#include "hrtfnorm/error.hpp"
#include "hrtfnorm/field.hpp"
#include "hrtfnorm/metrics.hpp"
#include "hrtfnorm/normalize.hpp"
#include "hrtfnorm/synth.hpp"

namespace hrtfnorm {

namespace {

namespace fs = std::filesystem;

// Every flag of every subcommand; only the active subcommand's fields matter.
struct RunConfig {
  std::vector<std::string> inputs;
  std::string input;
  std::string output;
  std::string average;
  std::string average_output;
  std::string truth;
  std::string pred;
  std::string model;
  std::string loss_csv;
  std::vector<std::string> train;
  std::string test;
  std::uint64_t seed = 0;
  std::string mode;
  std::string avg_mode = "per-position-per-ear";
  std::vector<std::string> modes = {"none", "per-position-per-ear", "ear-independent",
                                    "position-independent"};
  std::string positions;
  double c = 1.0;
  std::string gamma = "auto";
  std::size_t folds = 5;
  std::string fold_strategy = "subject-disjoint";
  double band_low = 200.0;
  double band_high = 18000.0;
  std::size_t databases = 4;
  std::size_t subjects = 18;
  bool distinct_pools = false;
  std::uint32_t sample_rate = 48000;
  std::size_t bins = 129;
  FieldHyperparams hp;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

void print_config(std::ostream& out, const CLI::App& sub) {
  out << "config:\n";
  std::istringstream lines(sub.config_to_str(true, false));
  for (std::string line; std::getline(lines, line);) {
    if (!line.empty()) out << "  " << line << "\n";
  }
}

std::optional<double> parse_gamma(const std::string& text) {
  if (text == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    const double g = std::stod(text, &used);
    if (used == text.size() && g > 0.0) return g;
  } catch (const std::exception&) {
  }
  throw ValidationError("--gamma must be 'auto' or a positive number, got '" + text + "'");
}

std::optional<NormalizationMode> parse_mode_or_none(const std::string& text) {
  if (text == "none") return std::nullopt;
  return parse_normalization_mode(text);
}

void add_field_flags(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--latent-dim", cfg.hp.latent_dim, "Latent vector size")->capture_default_str();
  sub->add_option("--hidden-width", cfg.hp.hidden_width, "Hidden layer width")->capture_default_str();
  sub->add_option("--hidden-layers", cfg.hp.hidden_layers, "Hidden layer count")->capture_default_str();
  sub->add_option("--frequencies", cfg.hp.frequencies, "Positional-encoding octaves")->capture_default_str();
  sub->add_option("--generator-step", cfg.hp.generator_step, "Generator step size")->capture_default_str();
  sub->add_option("--latent-step", cfg.hp.latent_step, "Latent step size")->capture_default_str();
  sub->add_option("--epochs", cfg.hp.epochs, "Training epochs")->capture_default_str();
  sub->add_option("--train-latent-steps", cfg.hp.train_latent_steps,
                  "Latent updates per subject per epoch")->capture_default_str();
  sub->add_option("--latent-steps", cfg.hp.latent_steps, "Latent updates at inference")->capture_default_str();
}

BandSelection band_of(const RunConfig& cfg) { return {cfg.band_low, cfg.band_high}; }

// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  CorpusOptions options;
  options.databases = cfg.databases;
  options.subjects = cfg.subjects;
  options.shared_pool = !cfg.distinct_pools;
  options.positions = cfg.positions.empty() ? "grid12" : cfg.positions;
  options.grid = {cfg.sample_rate, cfg.bins};
  options.seed = cfg.seed;
  const SyntheticCorpus corpus = synth_corpus(options);

  fs::create_directories(cfg.output);
  out << "synth:\n  files:\n";
  for (std::size_t i = 0; i < corpus.pools.size(); ++i) {
    const std::string name = corpus.pools.size() == 1 ? "pool" : "pool" + std::to_string(i);
    const fs::path path = fs::path(cfg.output) / (name + ".hrtfdb");
    save_database(corpus.pools[i].to_database(name), path);
    out << "    - " << path.filename().string() << "  # system-free listeners\n";
  }
  for (const auto& db : corpus.databases) {
    const fs::path path = fs::path(cfg.output) / (db.name + ".hrtfdb");
    save_database(db, path);
    out << "    - " << path.filename().string() << "  # system seed "
        << db.provenance.at("system_seed").get<std::uint64_t>() << "\n";
  }
  return kExitOk;
}

int cmd_augment(const RunConfig& cfg, std::ostream& out) {
  const Database db = load_database(cfg.input);
  const AugmentedDatabase aug = mirror_augment(db);
  save_database(aug.db, cfg.output);
  out << "augment:\n  source_subjects: " << db.subjects.size()
      << "\n  augmented_subjects: " << aug.subject_count() << "\n";
  return kExitOk;
}

int cmd_avg(const RunConfig& cfg, std::ostream& out) {
  const Database db = load_database(cfg.input);
  const NormalizationMode mode = parse_normalization_mode(cfg.avg_mode);
  AverageHrtf avg;
  if (cfg.positions.empty()) {
    avg = compute_average_hrtf(db, mode);
  } else {
    const auto restrict = builtin_grid(cfg.positions);
    avg = compute_average_hrtf(db, mode, std::span<const SourcePosition>(restrict));
  }
  save_database(avg.to_database(), cfg.output);
  out << "average:\n  source: " << avg.source << "\n  mode: " << to_string(avg.mode)
      << "\n  subjects: " << avg.subject_count << "\n  positions: " << avg.positions.size()
      << "\n  average_id: " << avg.id() << "\n";
  return kExitOk;
}

int cmd_normalize(const RunConfig& cfg, std::ostream& out) {
  const Database db = load_database(cfg.input);
  AverageHrtf avg;
  if (!cfg.average.empty()) {
    avg = AverageHrtf::from_database(load_database(cfg.average));
  } else if (!cfg.mode.empty()) {
    avg = compute_average_hrtf(db, parse_normalization_mode(cfg.mode));
    // Round-trip through f32 so the recorded id matches the stored average.
    avg = AverageHrtf::from_database(decode_database(encode_database(avg.to_database())));
    if (!cfg.average_output.empty()) save_database(avg.to_database(), cfg.average_output);
  } else {
    throw ValidationError("normalize needs --average or --mode");
  }
  save_database(normalize(db, avg), cfg.output);
  out << "normalize:\n  database: " << db.name << "\n  mode: " << to_string(avg.mode)
      << "\n  average_id: " << avg.id() << "\n";
  return kExitOk;
}

int cmd_denormalize(const RunConfig& cfg, std::ostream& out) {
  const Database db = load_database(cfg.input);
  const AverageHrtf avg = AverageHrtf::from_database(load_database(cfg.average));
  save_database(denormalize(db, avg), cfg.output);
  out << "denormalize:\n  database: " << db.name << "\n  average_id: " << avg.id() << "\n";
  return kExitOk;
}

int cmd_lsd(const RunConfig& cfg, std::ostream& out) {
  const Database truth = load_database(cfg.truth);
  const Database pred = load_database(cfg.pred);
  if (truth.subjects.size() != pred.subjects.size() || truth.positions.size() != pred.positions.size()) {
    throw DimensionError("lsd: truth and prediction differ in subject or position count");
  }
  if (truth.grid != pred.grid) throw DimensionError("lsd: truth and prediction use different grids");
  const BandSelection band = band_of(cfg);
  std::ostringstream csv;
  csv.precision(10);
  csv << "subject,position,azimuth,elevation,ear,lsd_db\n";
  out.precision(6);
  out << std::fixed << "lsd:\n  subjects:\n";
  double squared = 0.0;
  for (std::size_t s = 0; s < truth.subjects.size(); ++s) {
    const auto t = subject_spectra(truth, s);
    const auto p = subject_spectra(pred, s);
    const auto rows = lsd_per_position(t, p, truth.grid, band);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& pos = truth.positions[r / kEars];
      csv << truth.subjects[s].id << "," << r / kEars << "," << pos.azimuth << "," << pos.elevation << ","
          << to_string(static_cast<Ear>(r % kEars)) << "," << rows[r] << "\n";
    }
    const double value = lsd(t, p, truth.grid, band);
    squared += value * value;
    out << "    " << truth.subjects[s].id << ": " << value << "\n";
  }
  out << "  overall_db: " << std::sqrt(squared / static_cast<double>(truth.subjects.size())) << "\n";
  if (!cfg.output.empty()) write_text(cfg.output, csv.str());
  return kExitOk;
}

int cmd_classify(const RunConfig& cfg, std::ostream& out) {
  std::vector<Database> dbs;
  for (const auto& path : cfg.inputs) dbs.push_back(load_database(path));
  std::vector<SourcePosition> positions;
  if (dbs.size() >= 2) {
    positions = find_common_positions(dbs);
  } else {
    positions = dbs.front().positions;
  }
  if (positions.empty()) throw ValidationError("classify: the databases share no positions");
  const LabeledDataset ds = build_dataset(dbs, positions, cfg.subjects, cfg.seed);
  if (!ds.usable_for_cv()) throw ValidationError("classify: a single database cannot be cross-validated");
  const CvReport report = cross_validate(ds, cfg.folds, parse_fold_strategy(cfg.fold_strategy), cfg.c,
                                         parse_gamma(cfg.gamma), cfg.seed);
  out << "dataset:\n  samples: " << ds.size() << "\n  positions: " << positions.size()
      << "\n  dimension: " << ds.dimension() << "\n";
  out << report.to_text();
  if (!cfg.output.empty()) {
    fs::create_directories(cfg.output);
    write_text(fs::path(cfg.output) / "confusion.csv", report.confusion_csv());
    write_text(fs::path(cfg.output) / "report.txt", report.to_text());
  }
  return kExitOk;
}

int cmd_train(RunConfig cfg, std::ostream& out) {
  std::vector<Database> dbs;
  for (const auto& path : cfg.inputs) dbs.push_back(load_database(path));
  cfg.hp.seed = cfg.seed;
  const FieldModel model = train_field(dbs, cfg.hp);
  save_field_model(model, cfg.output);
  if (!cfg.loss_csv.empty()) write_text(cfg.loss_csv, loss_curve_csv(model.loss_curve));
  out.precision(6);
  out << std::fixed << "train:\n  subjects: " << model.subject_ids.size()
      << "\n  parameters: " << model.params.size() << "\n  initial_mse: " << model.loss_curve.front()
      << "\n  final_mse: " << model.loss_curve.back() << "\n";
  return kExitOk;
}

int cmd_reconstruct(const RunConfig& cfg, std::ostream& out) {
  const FieldModel model = load_field_model(cfg.model);
  const Database db = load_database(cfg.input);
  if (db.grid != model.grid) throw DimensionError("reconstruct: database grid differs from the model's");
  const Json normalization = db.provenance.value("normalization", Json());
  Database result;
  result.name = db.name + ".reconstruction";
  result.grid = db.grid;
  result.positions = db.positions;
  result.provenance = {{"generator", "field"}, {"model_seed", model.hp.seed}, {"source", db.name}};
  if (!normalization.is_null()) result.provenance["normalization"] = normalization;
  out.precision(6);
  out << std::fixed << "reconstruct:\n  subjects:\n";
  for (std::size_t s = 0; s < db.subjects.size(); ++s) {
    const LatentFit fit = infer_latent(model, db.positions, left_ear_rows(db, s));
    Database one = reconstruct(model, fit.z, db.positions);
    one.subjects.front().id = db.subjects[s].id;
    result.subjects.push_back(std::move(one.subjects.front()));
    out << "    " << db.subjects[s].id << ": {latent_mse: " << fit.mse << "}\n";
  }
  save_database(result, cfg.output);
  return kExitOk;
}

int cmd_experiment(RunConfig cfg, std::ostream& out) {
  cfg.hp.seed = cfg.seed;
  std::vector<Database> train;
  Database test;
  if (!cfg.train.empty() || !cfg.test.empty()) {
    if (cfg.train.empty() || cfg.test.empty()) throw ValidationError("experiment needs both --train and --test");
    for (const auto& path : cfg.train) train.push_back(load_database(path));
    test = load_database(cfg.test);
  } else {
    CorpusOptions options;
    options.databases = cfg.databases + 1;
    options.subjects = cfg.subjects;
    options.shared_pool = false;
    options.positions = cfg.positions.empty() ? "grid24" : cfg.positions;
    options.grid = {cfg.sample_rate, cfg.bins};
    options.seed = cfg.seed;
    auto corpus = synth_corpus(options);
    test = corpus.databases.back();
    corpus.databases.pop_back();
    train = std::move(corpus.databases);
  }
  const BandSelection band = band_of(cfg);
  if (!cfg.output.empty()) fs::create_directories(cfg.output);
  for (const auto& mode_text : cfg.modes) {
    const auto report = cross_db_experiment(train, test, parse_mode_or_none(mode_text), cfg.hp, band);
    out << report.to_text();
    if (!cfg.output.empty()) {
      write_text(fs::path(cfg.output) / ("lsd_" + report.mode + ".csv"), report.subjects_csv());
      write_text(fs::path(cfg.output) / ("loss_" + report.mode + ".csv"), loss_curve_csv(report.loss_curve));
    }
  }
  return kExitOk;
}

int cmd_info(const RunConfig& cfg, std::ostream& out) {
  std::ifstream in(cfg.input, std::ios::binary);
  char magic[8] = {};
  in.read(magic, sizeof magic);
  if (std::string(magic, 7) == "HRTFNF1") {
    const FieldModel m = load_field_model(cfg.input);
    Json summary = {{"format", "HRTFNF v1"},
                    {"hyperparams", m.hp.to_json()},
                    {"sample_rate", m.grid.sample_rate},
                    {"n_bins", m.grid.n_bins},
                    {"layer_sizes", m.layer_sizes},
                    {"subjects", m.subject_ids},
                    {"provenance", m.provenance},
                    {"epochs_trained", m.loss_curve.size()}};
    out << summary.dump(2) << "\n";
    return kExitOk;
  }
  const Database db = load_database(cfg.input);
  Json positions = Json::array();
  for (const auto& p : db.positions) positions.push_back({p.azimuth, p.elevation, p.distance});
  Json ids = Json::array();
  for (const auto& s : db.subjects) ids.push_back(s.id);
  Json summary = {{"format", "HRTFDB v1"},     {"name", db.name},        {"sample_rate", db.grid.sample_rate},
                  {"n_bins", db.grid.n_bins},  {"positions", positions}, {"subjects", ids},
                  {"provenance", db.provenance}};
  out << summary.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"HRTF cross-database normalization toolkit", "hrtfnorm"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Write a synthetic listener pool and N measured databases");
  synth->add_option("--output", cfg.output, "Output directory")->required();
  synth->add_option("--databases", cfg.databases, "Number of databases")->capture_default_str();
  synth->add_option("--subjects", cfg.subjects, "Subjects per database")->capture_default_str();
  synth->add_option("--positions", cfg.positions, "Built-in position grid")->default_str("grid12");
  synth->add_flag("--distinct-pools", cfg.distinct_pools, "Draw a separate listener pool per database");
  synth->add_option("--sample-rate", cfg.sample_rate, "Sample rate (Hz)")->capture_default_str();
  synth->add_option("--bins", cfg.bins, "Magnitude bins from DC to Nyquist")->capture_default_str();
  synth->add_option("--seed", cfg.seed, "Seed")->capture_default_str();

  auto* augment = app.add_subcommand("augment", "Fold right ears onto mirrored left-ear subjects");
  augment->add_option("--input", cfg.input)->required()->check(CLI::ExistingFile);
  augment->add_option("--output", cfg.output)->required();

  auto* avg = app.add_subcommand("avg", "Compute a database's average-person HRTF");
  avg->add_option("--input", cfg.input)->required()->check(CLI::ExistingFile);
  avg->add_option("--output", cfg.output)->required();
  avg->add_option("--mode", cfg.avg_mode)->capture_default_str();
  avg->add_option("--positions", cfg.positions, "Restrict to a built-in grid");

  auto* norm = app.add_subcommand("normalize", "Subtract an average-person HRTF (dB)");
  norm->add_option("--input", cfg.input)->required()->check(CLI::ExistingFile);
  norm->add_option("--output", cfg.output)->required();
  norm->add_option("--average", cfg.average, "Average written by `avg`")->check(CLI::ExistingFile);
  norm->add_option("--mode", cfg.mode, "Normalize by the database's own average in this mode");
  norm->add_option("--average-output", cfg.average_output, "Where to store the computed average");

  auto* denorm = app.add_subcommand("denormalize", "Add the recorded average back");
  denorm->add_option("--input", cfg.input)->required()->check(CLI::ExistingFile);
  denorm->add_option("--average", cfg.average)->required()->check(CLI::ExistingFile);
  denorm->add_option("--output", cfg.output)->required();

  auto* lsd_cmd = app.add_subcommand("lsd", "Log-spectral distortion between two databases");
  lsd_cmd->add_option("--truth", cfg.truth)->required()->check(CLI::ExistingFile);
  lsd_cmd->add_option("--pred", cfg.pred)->required()->check(CLI::ExistingFile);
  lsd_cmd->add_option("--band-low", cfg.band_low)->capture_default_str();
  lsd_cmd->add_option("--band-high", cfg.band_high)->capture_default_str();
  lsd_cmd->add_option("--output", cfg.output, "Per-position CSV");

  auto* classify = app.add_subcommand("classify", "Database identification by RBF SVM cross-validation");
  classify->add_option("--input", cfg.inputs)->required()->check(CLI::ExistingFile);
  classify->add_option("--subjects", cfg.subjects, "Subjects drawn per database")->capture_default_str();
  classify->add_option("--folds", cfg.folds)->capture_default_str();
  classify->add_option("--fold-strategy", cfg.fold_strategy)
      ->check(CLI::IsMember({"subject-disjoint", "sample-stratified"}))
      ->capture_default_str();
  classify->add_option("--c", cfg.c, "Soft-margin penalty")->capture_default_str();
  classify->add_option("--gamma", cfg.gamma, "RBF width or 'auto'")->capture_default_str();
  classify->add_option("--seed", cfg.seed)->capture_default_str();
  classify->add_option("--output", cfg.output, "Directory for confusion.csv and report.txt");

  auto* train = app.add_subcommand("train", "Train the neural-field generator");
  train->add_option("--input", cfg.inputs)->required()->check(CLI::ExistingFile);
  train->add_option("--output", cfg.output, "Model file")->required();
  train->add_option("--loss-csv", cfg.loss_csv, "Loss curve CSV");
  train->add_option("--seed", cfg.seed)->capture_default_str();
  add_field_flags(train, cfg);

  auto* recon = app.add_subcommand("reconstruct", "Infer latents for a database and reconstruct it");
  recon->add_option("--model", cfg.model)->required()->check(CLI::ExistingFile);
  recon->add_option("--input", cfg.input)->required()->check(CLI::ExistingFile);
  recon->add_option("--output", cfg.output)->required();

  auto* experiment = app.add_subcommand("experiment", "Cross-database reconstruction experiment");
  experiment->add_option("--train", cfg.train, "Training databases")->check(CLI::ExistingFile);
  experiment->add_option("--test", cfg.test, "Held-out database")->check(CLI::ExistingFile);
  experiment->add_option("--modes", cfg.modes, "Normalization modes ('none' = raw)")->capture_default_str();
  experiment->add_option("--databases", cfg.databases, "Synthetic training databases")->capture_default_str();
  experiment->add_option("--subjects", cfg.subjects, "Synthetic subjects per database")->capture_default_str();
  experiment->add_option("--positions", cfg.positions, "Synthetic position grid")->default_str("grid24");
  experiment->add_option("--sample-rate", cfg.sample_rate)->capture_default_str();
  experiment->add_option("--bins", cfg.bins)->capture_default_str();
  experiment->add_option("--band-low", cfg.band_low)->capture_default_str();
  experiment->add_option("--band-high", cfg.band_high)->capture_default_str();
  experiment->add_option("--seed", cfg.seed)->capture_default_str();
  experiment->add_option("--output", cfg.output, "Directory for per-mode CSVs");
  add_field_flags(experiment, cfg);

  auto* info = app.add_subcommand("info", "Print a container's header");
  info->add_option("--input", cfg.input)->required()->check(CLI::ExistingFile);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "experiment" && cfg.modes.empty()) throw ValidationError("--modes is empty");
    if (name != "info") print_config(out, *sub);
    if (name == "synth") return cmd_synth(cfg, out);
    if (name == "augment") return cmd_augment(cfg, out);
    if (name == "avg") return cmd_avg(cfg, out);
    if (name == "normalize") return cmd_normalize(cfg, out);
    if (name == "denormalize") return cmd_denormalize(cfg, out);
    if (name == "lsd") return cmd_lsd(cfg, out);
    if (name == "classify") return cmd_classify(cfg, out);
    if (name == "train") return cmd_train(cfg, out);
    if (name == "reconstruct") return cmd_reconstruct(cfg, out);
    if (name == "experiment") return cmd_experiment(cfg, out);
    if (name == "info") return cmd_info(cfg, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitUsage;
}

}  // namespace hrtfnorm
