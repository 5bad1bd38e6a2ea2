#include <algorithm>

#include "doctest.h"
#include "hrtfnorm/augment.hpp"
#include "hrtfnorm/error.hpp"
#include "hrtfnorm/field.hpp"
#include "hrtfnorm/metrics.hpp"
#include "hrtfnorm/synth.hpp"
#include "support.hpp"

using namespace hrtfnorm;

namespace {

FieldHyperparams tiny(std::size_t width = 8) {
  FieldHyperparams hp;
  hp.latent_dim = 3;
  hp.hidden_width = width;
  hp.hidden_layers = 2;
  hp.frequencies = 2;
  hp.seed = 4;
  return hp;
}

std::vector<FieldSample> random_batch(const FieldModel& m, std::size_t count, std::uint64_t seed) {
  Rng rng(seed, "batch");
  std::vector<FieldSample> batch;
  for (std::size_t i = 0; i < count; ++i) {
    FieldSample s;
    s.position = SourcePosition::make(rng.uniform(0, 360), rng.uniform(-60, 60));
    s.z.resize(m.hp.latent_dim);
    for (auto& v : s.z) v = rng.normal();
    s.target.resize(m.grid.n_bins);
    for (auto& v : s.target) v = rng.uniform(-3, 3);
    batch.push_back(std::move(s));
  }
  return batch;
}

double batch_loss(const FieldModel& m, const std::vector<FieldSample>& batch) {
  double total = 0.0;
  for (const auto& s : batch) {
    auto out = forward(m, s.position, s.z);
    for (std::size_t k = 0; k < out.size(); ++k) total += (out[k] - s.target[k]) * (out[k] - s.target[k]);
  }
  return total / static_cast<double>(batch.size() * m.grid.n_bins);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

}  // namespace

TEST_SUITE("field") {

TEST_CASE("position encoding") {
  auto e = encode_position(SourcePosition::make(0, 0), 4);
  REQUIRE(e.size() == 3 + 2 * 3 * 4);
  CHECK(e[0] == doctest::Approx(1.0));
  CHECK(e[1] == doctest::Approx(0.0));
  CHECK(e[2] == doctest::Approx(0.0));
  const auto p = SourcePosition::make(123, -17);
  const auto mm = mirror_position(mirror_position(p));
  CHECK(encode_position(p, 3) == encode_position(mm, 3));
}

TEST_CASE("hyperparameters validate and round trip") {
  FieldHyperparams hp;
  CHECK(hp.latent_dim == 16);
  CHECK(hp.hidden_width == 128);
  CHECK(hp.hidden_layers == 3);
  CHECK(FieldHyperparams::from_json(hp.to_json()) == hp);
  hp.latent_steps = 0;
  CHECK_THROWS_AS(hp.validate(), ValidationError);
}

TEST_CASE("analytic gradients match central differences") {
  auto m = FieldModel::create(tiny(8), FrequencyGrid{48000, 5});
  for (auto& v : m.params) v *= 1.5;  // move away from the linear regime
  auto batch = random_batch(m, 4, 1);
  auto g = gradients(m, batch);
  CHECK(g.loss == doctest::Approx(batch_loss(m, batch)).epsilon(1e-12));
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    auto mp = m, mn = m;
    mp.params[i] += h;
    mn.params[i] -= h;
    const double fd = (batch_loss(mp, batch) - batch_loss(mn, batch)) / (2 * h);
    worst = std::max(worst, rel_err(fd, g.params[i]));
  }
  for (std::size_t s = 0; s < batch.size(); ++s)
    for (std::size_t k = 0; k < m.hp.latent_dim; ++k) {
      auto bp = batch, bn = batch;
      bp[s].z[k] += h;
      bn[s].z[k] -= h;
      const double fd = (batch_loss(m, bp) - batch_loss(m, bn)) / (2 * h);
      worst = std::max(worst, rel_err(fd, g.latents[s][k]));
    }
  CHECK(worst <= 1e-4);
}

TEST_CASE("gradient zero at the target and linear in the residual") {
  auto m = FieldModel::create(tiny(8), FrequencyGrid{48000, 5});
  auto batch = random_batch(m, 3, 2);
  for (auto& s : batch) s.target = forward(m, s.position, s.z);
  auto g0 = gradients(m, batch);
  CHECK(g0.loss == 0.0);
  for (double v : g0.params) CHECK(v == 0.0);

  auto shifted = batch, doubled = batch;
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (std::size_t k = 0; k < batch[i].target.size(); ++k) {
      shifted[i].target[k] += 1.0 + 0.1 * k;
      doubled[i].target[k] += 2.0 * (1.0 + 0.1 * k);
    }
  auto g1 = gradients(m, shifted), g2 = gradients(m, doubled);
  for (std::size_t i = 0; i < g1.params.size(); ++i) CHECK(g2.params[i] == doctest::Approx(2.0 * g1.params[i]).epsilon(1e-9));
}

TEST_CASE("zero network outputs its bias") {
  auto m = FieldModel::create(tiny(8), FrequencyGrid{48000, 5});
  std::fill(m.params.begin(), m.params.end(), 0.0);
  for (std::size_t k = 0; k < 5; ++k) m.params[m.params.size() - 5 + k] = 0.5 * k;
  std::vector<double> z{1.0, -2.0, 0.5};
  for (double az : {0.0, 77.0, 300.0}) {
    auto out = forward(m, SourcePosition::make(az, 10), z);
    for (std::size_t k = 0; k < 5; ++k) CHECK(out[k] == 0.5 * k);
  }
  // zero observation of the zero network: z stays at zero
  std::fill(m.params.begin(), m.params.end(), 0.0);
  std::vector<SourcePosition> pos{SourcePosition::make(0, 0), SourcePosition::make(90, 0)};
  std::vector<std::vector<double>> obs(2, std::vector<double>(5, 0.0));
  auto fit = infer_latent(m, pos, obs);
  for (double v : fit.z) CHECK(v == 0.0);
  CHECK(fit.mse == 0.0);
}

TEST_CASE("forward is deterministic and shaped") {
  auto m = FieldModel::create(tiny(8), FrequencyGrid{48000, 7});
  std::vector<double> z{0.1, 0.2, 0.3};
  auto a = forward(m, SourcePosition::make(40, 5), z);
  CHECK(a.size() == 7);
  CHECK(a == forward(m, SourcePosition::make(40, 5), z));
  CHECK_THROWS_AS(forward(m, SourcePosition::make(40, 5), std::vector<double>{1.0}), DimensionError);
}

TEST_CASE("single subject overfits") {
  auto pos = builtin_grid("grid24");
  pos.resize(10);
  const FrequencyGrid grid{48000, 17};
  std::vector<Database> dbs{synth_subject_pool(1, pos, grid, 1).to_database("one")};
  FieldHyperparams hp;
  hp.latent_dim = 4;
  hp.hidden_width = 16;
  hp.hidden_layers = 2;
  hp.generator_step = 3e-2;
  hp.epochs = 2000;
  hp.seed = 1;
  auto model = train_field(dbs, hp);
  CHECK(model.loss_curve.back() < 1e-2);

  // reconstruction at the training positions
  auto rec = reconstruct(model, model.latent(0), pos);
  CHECK(lsd(subject_spectra(dbs[0], 0, false), subject_spectra(rec, 0, false), grid) < 0.5);
  CHECK(reconstruct(model, model.latent(0), pos) == rec);

  // inference started at the stored latent cannot end above it
  std::vector<std::vector<double>> observed;
  for (const auto& p : pos) observed.push_back(forward(model, p, model.latent(0)));
  auto fit = infer_latent(model, pos, observed, model.latent(0));
  CHECK(fit.mse <= 0.0 + 1e-6);
  auto real = left_ear_rows(dbs[0], 0);
  const double stored = gradients(model, [&] {
    std::vector<FieldSample> b;
    for (std::size_t p = 0; p < pos.size(); ++p)
      b.push_back({pos[p], std::vector<double>(model.latent(0).begin(), model.latent(0).end()), real[p]});
    return b;
  }()).loss;
  CHECK(infer_latent(model, pos, real, model.latent(0)).mse <= stored + 1e-6);
}

TEST_CASE("training and inference are deterministic") {
  CorpusOptions o;
  o.databases = 2;
  o.subjects = 3;
  o.grid = {48000, 9};
  o.seed = 2;
  auto corpus = synth_corpus(o);
  auto hp = tiny(6);
  hp.epochs = 20;
  hp.latent_steps = 30;
  auto a = train_field(corpus.databases, hp), b = train_field(corpus.databases, hp);
  CHECK(a == b);
  CHECK(encode_field_model(a) == encode_field_model(b));
  CHECK(a.subject_ids.front() == "db0/S0");
  auto rows = left_ear_rows(corpus.databases[1], 2);
  auto fa = infer_latent(a, corpus.databases[1].positions, rows);
  auto fb = infer_latent(a, corpus.databases[1].positions, rows);
  CHECK(fa.z == fb.z);
  CHECK(fa.mse == fb.mse);
}

TEST_CASE("empty reconstruction is flagged") {
  auto m = FieldModel::create(tiny(8), FrequencyGrid{48000, 5});
  std::vector<SourcePosition> none;
  auto db = reconstruct(m, std::vector<double>(3, 0.0), none);
  CHECK(db.positions.empty());
  CHECK(db.provenance.at("empty") == true);
  CHECK_NOTHROW(db.validate(true));
}

TEST_CASE("model container round trip") {
  auto dir = testing::scratch_dir("field_io");
  auto m = FieldModel::create(tiny(8), FrequencyGrid{48000, 5}, {"a/S0", "a/S1"});
  m.latents[4] = 0.25;
  m.loss_curve = {3.0, 2.0, 1.5};
  m.provenance = {{"training_databases", Json::array({{{"name", "a"}}})}};
  save_field_model(m, dir / "m.hrtfnf");
  CHECK(load_field_model(dir / "m.hrtfnf") == m);
  auto bytes = encode_field_model(m);
  CHECK(std::string(bytes.begin(), bytes.begin() + 7) == "HRTFNF1");
  bytes[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_field_model(bytes), doctest::Contains("bad magic"), ParseError);
  auto cut = encode_field_model(m);
  cut.resize(cut.size() - 8);
  CHECK_THROWS_AS(decode_field_model(cut), ParseError);
  CHECK(loss_curve_csv(m.loss_curve).rfind("epoch,mse\n0,", 0) == 0);
}

TEST_CASE("smoothed training loss does not increase") {
  CorpusOptions o;
  o.databases = 3;
  o.subjects = 4;
  o.shared_pool = false;
  o.positions = "grid24";
  o.grid = {48000, 33};
  o.seed = 5;
  auto corpus = synth_corpus(o);
  std::vector<Database> train;
  for (const auto& db : corpus.databases) train.push_back(mirror_augment(db).db);
  FieldHyperparams hp;
  hp.latent_dim = 8;
  hp.hidden_width = 32;
  hp.hidden_layers = 2;
  hp.generator_step = 1e-2;
  hp.latent_step = 1e-1;
  hp.epochs = 100;
  auto model = train_field(train, hp);
  std::vector<double> smooth;
  for (std::size_t w = 0; w + 10 <= model.loss_curve.size(); w += 10) {
    double s = 0.0;
    for (std::size_t i = w; i < w + 10; ++i) s += model.loss_curve[i];
    smooth.push_back(s / 10);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) CHECK(smooth[i] <= smooth[i - 1]);
}

TEST_CASE("a training database is reconstructed no worse than a held-out one") {
  CorpusOptions o;
  o.databases = 3;
  o.subjects = 4;
  o.shared_pool = false;
  o.positions = "grid24";
  o.grid = {48000, 33};
  o.seed = 6;
  auto corpus = synth_corpus(o);
  std::vector<Database> train{corpus.databases[0], corpus.databases[1]};
  FieldHyperparams hp;
  hp.latent_dim = 8;
  hp.hidden_width = 32;
  hp.hidden_layers = 2;
  hp.generator_step = 1e-2;
  hp.latent_step = 1e-1;
  hp.epochs = 60;
  hp.latent_steps = 100;
  auto inside = cross_db_experiment(train, corpus.databases[0], NormalizationMode::PerPositionPerEar, hp);
  auto held = cross_db_experiment(train, corpus.databases[2], NormalizationMode::PerPositionPerEar, hp);
  CHECK(inside.loss_curve == held.loss_curve);  // same training run
  CHECK(inside.mean_lsd <= held.mean_lsd);
  CHECK(inside.subjects.size() == 8);  // augmented test subjects
}

}
