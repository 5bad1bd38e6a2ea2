#include "hrtfnorm/field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "container.hpp"
#include "hrtfnorm/error.hpp"
#include "hrtfnorm/rng.hpp"

namespace hrtfnorm {

void FieldHyperparams::validate() const {
  if (latent_dim == 0 || hidden_width == 0 || hidden_layers == 0 || frequencies == 0 ||
      epochs == 0 || latent_steps == 0 || train_latent_steps == 0) {
    throw ValidationError("field hyperparameters: sizes and step counts must be positive");
  }
  if (!(generator_step > 0.0) || !(latent_step > 0.0)) {
    throw ValidationError("field hyperparameters: step sizes must be positive");
  }
}

Json FieldHyperparams::to_json() const {
  return {{"latent_dim", latent_dim},       {"hidden_width", hidden_width},
          {"hidden_layers", hidden_layers}, {"frequencies", frequencies},
          {"generator_step", generator_step}, {"latent_step", latent_step},
          {"epochs", epochs},               {"train_latent_steps", train_latent_steps},
          {"latent_steps", latent_steps},   {"seed", seed}};
}

FieldHyperparams FieldHyperparams::from_json(const Json& j) {
  FieldHyperparams hp;
  hp.latent_dim = j.at("latent_dim").get<std::size_t>();
  hp.hidden_width = j.at("hidden_width").get<std::size_t>();
  hp.hidden_layers = j.at("hidden_layers").get<std::size_t>();
  hp.frequencies = j.at("frequencies").get<std::size_t>();
  hp.generator_step = j.at("generator_step").get<double>();
  hp.latent_step = j.at("latent_step").get<double>();
  hp.epochs = j.at("epochs").get<std::size_t>();
  hp.train_latent_steps = j.at("train_latent_steps").get<std::size_t>();
  hp.latent_steps = j.at("latent_steps").get<std::size_t>();
  hp.seed = j.at("seed").get<std::uint64_t>();
  return hp;
}

std::vector<double> encode_position(const SourcePosition& p, std::size_t frequencies) {
  const auto dir = direction(p);
  std::vector<double> out(dir.begin(), dir.end());
  out.reserve(3 + 6 * frequencies);
  for (double c : dir) {
    for (std::size_t k = 0; k < frequencies; ++k) {
      const double arg = std::ldexp(c, static_cast<int>(k));
      out.push_back(std::sin(arg));
      out.push_back(std::cos(arg));
    }
  }
  return out;
}

FieldModel FieldModel::create(const FieldHyperparams& hp, const FrequencyGrid& grid,
                              std::vector<std::string> subject_ids) {
  hp.validate();
  grid.validate();
  FieldModel m;
  m.hp = hp;
  m.grid = grid;
  m.layer_sizes.push_back(3 + 6 * hp.frequencies + hp.latent_dim);
  for (std::size_t l = 0; l < hp.hidden_layers; ++l) m.layer_sizes.push_back(hp.hidden_width);
  m.layer_sizes.push_back(grid.n_bins);

  Rng rng(hp.seed, "field-init");
  for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
    const std::size_t in = m.layer_sizes[l];
    const std::size_t out = m.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (std::size_t i = 0; i < in * out; ++i) m.params.push_back(rng.uniform(-limit, limit));
    m.params.insert(m.params.end(), out, 0.0);
  }
  m.subject_ids = std::move(subject_ids);
  m.latents.assign(m.subject_ids.size() * hp.latent_dim, 0.0);
  return m;
}

void FieldModel::validate() const {
  hp.validate();
  if (layer_sizes.size() != hp.hidden_layers + 2 || layer_sizes.front() != 3 + 6 * hp.frequencies + hp.latent_dim ||
      layer_sizes.back() != grid.n_bins) {
    throw DimensionError("field model: layer sizes inconsistent with hyperparameters");
  }
  std::size_t expected = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    expected += layer_sizes[l + 1] * (layer_sizes[l] + 1);
  }
  if (params.size() != expected) throw DimensionError("field model: parameter count mismatch");
  if (latents.size() != subject_ids.size() * hp.latent_dim) {
    throw DimensionError("field model: latent table does not match subject list");
  }
  for (double v : params) {
    if (!std::isfinite(v)) throw ValidationError("field model: non-finite parameter");
  }
  for (double v : latents) {
    if (!std::isfinite(v)) throw ValidationError("field model: non-finite latent");
  }
}

namespace {

// Activations of one forward pass; acts[0] is the input, acts.back() the output.
struct Pass {
  std::vector<std::vector<double>> acts;
};

std::vector<double> make_input(const FieldModel& m, const SourcePosition& p, std::span<const double> z) {
  if (z.size() != m.hp.latent_dim) {
    throw DimensionError("field: latent has " + std::to_string(z.size()) + " entries, expected " +
                         std::to_string(m.hp.latent_dim));
  }
  auto in = encode_position(p, m.hp.frequencies);
  in.insert(in.end(), z.begin(), z.end());
  return in;
}

Pass run_forward(const FieldModel& m, std::vector<double> input) {
  Pass pass;
  pass.acts.push_back(std::move(input));
  const double* w = m.params.data();
  const std::size_t layers = m.layer_sizes.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = m.layer_sizes[l];
    const std::size_t out = m.layer_sizes[l + 1];
    const double* b = w + in * out;
    const auto& a = pass.acts.back();
    std::vector<double> next(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = w + o * in;
      double s = b[o];
      for (std::size_t i = 0; i < in; ++i) s += row[i] * a[i];
      next[o] = (l + 1 < layers) ? std::tanh(s) : s;
      if (!std::isfinite(next[o])) {
        throw NumericError("field forward: non-finite activation in layer " + std::to_string(l));
      }
    }
    pass.acts.push_back(std::move(next));
    w = b + out;
  }
  return pass;
}

// Back-propagates d loss / d output. Accumulates into grad_params when given
// and returns d loss / d input.
std::vector<double> run_backward(const FieldModel& m, const Pass& pass, std::vector<double> delta,
                                 double* grad_params) {
  const std::size_t layers = m.layer_sizes.size() - 1;
  std::vector<std::size_t> offset(layers);
  std::size_t acc = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offset[l] = acc;
    acc += m.layer_sizes[l + 1] * (m.layer_sizes[l] + 1);
  }
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = m.layer_sizes[l];
    const std::size_t out = m.layer_sizes[l + 1];
    const double* w = m.params.data() + offset[l];
    const auto& a = pass.acts[l];
    if (grad_params != nullptr) {
      double* gw = grad_params + offset[l];
      double* gb = gw + in * out;
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        double* grow = gw + o * in;
        for (std::size_t i = 0; i < in; ++i) grow[i] += d * a[i];
        gb[o] += d;
      }
    }
    std::vector<double> prev(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) prev[i] += row[i] * d;
    }
    if (l > 0) {
      for (std::size_t i = 0; i < in; ++i) prev[i] *= 1.0 - a[i] * a[i];  // tanh'
    }
    delta = std::move(prev);
  }
  return delta;
}

FieldGradients compute_gradients(const FieldModel& model, std::span<const FieldSample> batch,
                                 bool want_params) {
  FieldGradients g;
  if (want_params) g.params.assign(model.params.size(), 0.0);
  const std::size_t n = model.output_size();
  const double scale = 1.0 / static_cast<double>(batch.size() * n);
  const std::size_t encoded = 3 + 6 * model.hp.frequencies;
  double sse = 0.0;
  for (const auto& sample : batch) {
    if (sample.target.size() != n) throw DimensionError("field: target length differs from n_bins");
    const Pass pass = run_forward(model, make_input(model, sample.position, sample.z));
    const auto& out = pass.acts.back();
    std::vector<double> delta(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double r = out[k] - sample.target[k];
      sse += r * r;
      delta[k] = 2.0 * r * scale;
    }
    auto d_in = run_backward(model, pass, std::move(delta), want_params ? g.params.data() : nullptr);
    g.latents.emplace_back(d_in.begin() + static_cast<std::ptrdiff_t>(encoded), d_in.end());
  }
  g.loss = sse * scale;
  return g;
}

std::vector<double> summed_latent_gradient(const FieldGradients& g, std::size_t dim) {
  std::vector<double> sum(dim, 0.0);
  for (const auto& gz : g.latents) {
    for (std::size_t k = 0; k < dim; ++k) sum[k] += gz[k];
  }
  return sum;
}

}  // namespace

std::vector<double> forward(const FieldModel& model, const SourcePosition& p, std::span<const double> z) {
  return run_forward(model, make_input(model, p, z)).acts.back();
}

FieldGradients gradients(const FieldModel& model, std::span<const FieldSample> batch) {
  if (batch.empty()) throw ValidationError("field gradients: empty batch");
  return compute_gradients(model, batch, true);
}

std::vector<std::vector<double>> left_ear_rows(const Database& db, std::size_t subject) {
  std::vector<std::vector<double>> rows;
  for (std::size_t p = 0; p < db.positions.size(); ++p) {
    auto s = db.spectrum(subject, p, Ear::Left);
    rows.emplace_back(s.begin(), s.end());
  }
  return rows;
}

FieldModel train_field(std::span<const Database> training_dbs, const FieldHyperparams& hp) {
  hp.validate();
  if (training_dbs.empty()) throw ValidationError("train_field: no training databases");
  const FrequencyGrid grid = training_dbs.front().grid;

  struct Subject {
    const Database* db;
    std::size_t index;
  };
  std::vector<Subject> subjects;
  std::vector<std::string> ids;
  for (const auto& db : training_dbs) {
    db.validate();
    if (db.grid != grid) throw DimensionError("train_field: databases use different frequency grids");
    for (std::size_t s = 0; s < db.subjects.size(); ++s) {
      subjects.push_back({&db, s});
      ids.push_back(db.name + "/" + db.subjects[s].id);
    }
  }
  if (subjects.empty()) throw ValidationError("train_field: no training subjects");

  FieldModel model = FieldModel::create(hp, grid, ids);
  Json sources = Json::array();
  for (const auto& db : training_dbs) {
    sources.push_back({{"name", db.name}, {"normalization", db.provenance.value("normalization", Json())}});
  }
  model.provenance = {{"training_databases", sources}};

  // Targets are fixed; build each subject's batch once.
  std::vector<std::vector<FieldSample>> batches(subjects.size());
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const auto& db = *subjects[s].db;
    auto rows = left_ear_rows(db, subjects[s].index);
    for (std::size_t p = 0; p < db.positions.size(); ++p) {
      batches[s].push_back({db.positions[p], {}, std::move(rows[p])});
    }
  }

  const Rng order_root(hp.seed, "field-epoch-order");
  std::vector<std::size_t> order(subjects.size());
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng = order_root.split(epoch);
    order_rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t s : order) {
      auto& batch = batches[s];
      if (batch.empty()) continue;
      auto z = model.latent(s);
      // Step 1: latent descent with the generator frozen.
      for (std::size_t t = 0; t < hp.train_latent_steps; ++t) {
        for (auto& sample : batch) sample.z.assign(z.begin(), z.end());
        const auto g = compute_gradients(model, batch, false);
        const auto gz = summed_latent_gradient(g, hp.latent_dim);
        for (std::size_t k = 0; k < hp.latent_dim; ++k) z[k] -= hp.latent_step * gz[k];
      }
      // Step 2: generator update at the refreshed latent.
      for (auto& sample : batch) sample.z.assign(z.begin(), z.end());
      const auto g = compute_gradients(model, batch, true);
      for (std::size_t i = 0; i < model.params.size(); ++i) model.params[i] -= hp.generator_step * g.params[i];
      epoch_loss += g.loss;
    }
    epoch_loss /= static_cast<double>(subjects.size());
    if (!std::isfinite(epoch_loss)) {
      throw NumericError("field training diverged at epoch " + std::to_string(epoch));
    }
    model.loss_curve.push_back(epoch_loss);
  }
  return model;
}

LatentFit infer_latent(const FieldModel& model, std::span<const SourcePosition> positions,
                       std::span<const std::vector<double>> spectra,
                       std::optional<std::span<const double>> start) {
  if (positions.size() != spectra.size()) {
    throw DimensionError("infer_latent: positions and spectra differ in count");
  }
  if (positions.empty()) throw ValidationError("infer_latent: no observations");
  const std::size_t dim = model.hp.latent_dim;
  std::vector<double> z(dim, 0.0);
  if (start) {
    if (start->size() != dim) throw DimensionError("infer_latent: start latent has wrong size");
    z.assign(start->begin(), start->end());
  }
  std::vector<FieldSample> batch;
  for (std::size_t p = 0; p < positions.size(); ++p) batch.push_back({positions[p], z, spectra[p]});

  LatentFit best{z, std::numeric_limits<double>::infinity()};
  for (std::size_t step = 0;; ++step) {
    for (auto& sample : batch) sample.z = z;
    const auto g = compute_gradients(model, batch, false);
    if (!std::isfinite(g.loss)) throw NumericError("infer_latent diverged at step " + std::to_string(step));
    if (g.loss < best.mse) best = {z, g.loss};
    if (step == model.hp.latent_steps) break;
    const auto gz = summed_latent_gradient(g, dim);
    for (std::size_t k = 0; k < dim; ++k) z[k] -= model.hp.latent_step * gz[k];
  }
  return best;
}

Database reconstruct(const FieldModel& model, std::span<const double> z,
                     std::span<const SourcePosition> positions, const Json& normalization) {
  Database db;
  db.name = "reconstruction";
  db.grid = model.grid;
  db.positions.assign(positions.begin(), positions.end());
  db.provenance = {{"generator", "field"}, {"model_seed", model.hp.seed}};
  if (!normalization.is_null()) db.provenance["normalization"] = normalization;
  if (positions.empty()) db.provenance["empty"] = true;
  SubjectHrtf s{"reconstruction", std::vector<double>(db.values_per_subject())};
  for (std::size_t p = 0; p < positions.size(); ++p) {
    const auto out = forward(model, positions[p], z);
    for (std::size_t e = 0; e < kEars; ++e) {
      std::copy(out.begin(), out.end(), s.spectrum(p, static_cast<Ear>(e), db.grid.n_bins).begin());
    }
  }
  db.subjects.push_back(std::move(s));
  return db;
}

std::vector<std::uint8_t> encode_field_model(const FieldModel& model) {
  model.validate();
  Json header;
  header["hyperparams"] = model.hp.to_json();
  header["sample_rate"] = model.grid.sample_rate;
  header["n_bins"] = model.grid.n_bins;
  header["layer_sizes"] = model.layer_sizes;
  header["subjects"] = model.subject_ids;
  header["provenance"] = model.provenance;
  header["epochs_trained"] = model.loss_curve.size();
  header["payload"] = "f64 LE: per layer weights (out x in, row-major) then bias; then latents [subject][latent_dim]";
  auto w = detail::begin_container(detail::kFieldMagic, header);
  for (double v : model.params) w.f64(v);
  for (double v : model.latents) w.f64(v);
  for (double v : model.loss_curve) w.f64(v);
  return w.take();
}

FieldModel decode_field_model(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  const Json header = detail::read_container_header(r, detail::kFieldMagic);
  FieldModel m;
  std::size_t epochs = 0;
  try {
    m.hp = FieldHyperparams::from_json(header.at("hyperparams"));
    m.grid.sample_rate = header.at("sample_rate").get<std::uint32_t>();
    m.grid.n_bins = header.at("n_bins").get<std::size_t>();
    m.layer_sizes = header.at("layer_sizes").get<std::vector<std::size_t>>();
    m.subject_ids = header.at("subjects").get<std::vector<std::string>>();
    m.provenance = header.value("provenance", Json::object());
    epochs = header.value("epochs_trained", std::size_t{0});
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed field-model header: ") + e.what());
  }
  std::size_t n_params = 0;
  for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
    n_params += m.layer_sizes[l + 1] * (m.layer_sizes[l] + 1);
  }
  const std::size_t n_latents = m.subject_ids.size() * m.hp.latent_dim;
  const std::size_t expected = (n_params + n_latents + epochs) * sizeof(double);
  if (r.remaining() < expected) {
    throw ParseError("truncated payload: header declares " + std::to_string(expected) + " bytes, found " +
                     std::to_string(r.remaining()));
  }
  if (r.remaining() > expected) throw ParseError("dimension mismatch: trailing bytes after payload");
  m.params.resize(n_params);
  for (auto& v : m.params) v = r.f64("parameters");
  m.latents.resize(n_latents);
  for (auto& v : m.latents) v = r.f64("latents");
  m.loss_curve.resize(epochs);
  for (auto& v : m.loss_curve) v = r.f64("loss curve");
  m.validate();
  return m;
}

void save_field_model(const FieldModel& model, const std::filesystem::path& path) {
  detail::write_file(path, encode_field_model(model));
}

FieldModel load_field_model(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  try {
    return decode_field_model(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string loss_curve_csv(std::span<const double> curve) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,mse\n";
  for (std::size_t i = 0; i < curve.size(); ++i) out << i << "," << curve[i] << "\n";
  return out.str();
}

ExperimentReport evaluate_reconstruction(const FieldModel& model, const Database& db,
                                         const BandSelection& band) {
  if (db.grid != model.grid) throw DimensionError("evaluate: database grid differs from the model's");
  ExperimentReport report;
  report.test_database = db.name;
  report.positions = db.positions.size();
  const Json normalization = db.provenance.value("normalization", Json());
  double total = 0.0;
  for (std::size_t s = 0; s < db.subjects.size(); ++s) {
    const auto rows = left_ear_rows(db, s);
    const LatentFit fit = infer_latent(model, db.positions, rows);
    const Database pred = reconstruct(model, fit.z, db.positions, normalization);
    const double value = lsd(subject_spectra(db, s, false), subject_spectra(pred, 0, false), db.grid, band);
    report.subjects.push_back({db.subjects[s].id, value, fit.mse});
    total += value;
  }
  report.mean_lsd = db.subjects.empty() ? 0.0 : total / static_cast<double>(db.subjects.size());
  return report;
}

ExperimentReport cross_db_experiment(std::span<const Database> train_dbs, const Database& test_db,
                                     std::optional<NormalizationMode> mode, const FieldHyperparams& hp,
                                     const BandSelection& band) {
  if (train_dbs.empty()) throw ValidationError("cross_db_experiment: no training databases");
  std::vector<Database> all(train_dbs.begin(), train_dbs.end());
  all.push_back(test_db);
  const auto common = find_common_positions(all, kPositionTolerance);
  if (common.empty()) {
    throw ValidationError("cross_db_experiment: test database shares no positions with the training set");
  }

  auto prepare = [&](const Database& db) {
    Database d = select_positions(db, common);
    if (mode) d = normalize(d, compute_average_hrtf(d, *mode));
    return mirror_augment(d).db;
  };
  std::vector<Database> train;
  for (const auto& db : train_dbs) train.push_back(prepare(db));
  const Database test = prepare(test_db);

  const FieldModel model = train_field(train, hp);
  ExperimentReport report = evaluate_reconstruction(model, test, band);
  report.mode = mode ? std::string(to_string(*mode)) : "none";
  for (const auto& db : train_dbs) report.train_databases.push_back(db.name);
  report.loss_curve = model.loss_curve;
  return report;
}

std::string ExperimentReport::to_text() const {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "cross_database_reconstruction:\n";
  out << "  normalization: " << mode << "\n";
  out << "  train: [";
  for (std::size_t i = 0; i < train_databases.size(); ++i) out << (i ? ", " : "") << train_databases[i];
  out << "]\n";
  out << "  test: " << test_database << "\n";
  out << "  positions: " << positions << "\n";
  out << "  subjects: " << subjects.size() << "\n";
  out << "  mean_lsd_db: " << mean_lsd << "\n";
  if (!loss_curve.empty()) out << "  final_training_mse: " << loss_curve.back() << "\n";
  return out.str();
}

std::string ExperimentReport::subjects_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "subject,lsd_db,latent_mse\n";
  for (const auto& s : subjects) out << s.subject << "," << s.lsd << "," << s.latent_mse << "\n";
  return out.str();
}

}  // namespace hrtfnorm
