#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "hrtfnorm/augment.hpp"
#include "hrtfnorm/classify.hpp"
#include "hrtfnorm/cli.hpp"
#include "hrtfnorm/error.hpp"
#include "hrtfnorm/field.hpp"
#include "hrtfnorm/metrics.hpp"
#include "hrtfnorm/normalize.hpp"
#include "hrtfnorm/synth.hpp"

namespace py = pybind11;
using namespace hrtfnorm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::object to_py(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }
Json from_py(const py::object& o) {
  return Json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

// (S, P, 2, N) copy of the spectra.
Array spectra_of(const Database& db) {
  const auto S = db.subjects.size(), P = db.positions.size(), N = db.grid.n_bins;
  Array out({S, P, kEars, N});
  double* dst = out.mutable_data();
  for (const auto& s : db.subjects) dst = std::copy(s.spectra.begin(), s.spectra.end(), dst);
  return out;
}

void set_spectra(Database& db, const Array& a) {
  if (a.ndim() != 4 || a.shape(1) != static_cast<py::ssize_t>(db.positions.size()) || a.shape(2) != 2 ||
      a.shape(3) != static_cast<py::ssize_t>(db.grid.n_bins)) {
    throw DimensionError("spectra must have shape (subjects, positions, 2, n_bins)");
  }
  const auto S = static_cast<std::size_t>(a.shape(0));
  if (db.subjects.size() != S) {
    db.subjects.resize(S);
    for (std::size_t s = 0; s < S; ++s)
      if (db.subjects[s].id.empty()) db.subjects[s].id = "S" + std::to_string(s);
  }
  const double* src = a.data();
  const std::size_t per = db.values_per_subject();
  for (auto& s : db.subjects) {
    s.spectra.assign(src, src + per);
    src += per;
  }
}

Array positions_of(const std::vector<SourcePosition>& ps) {
  Array out({ps.size(), std::size_t{3}});
  auto v = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    v(i, 0) = ps[i].azimuth;
    v(i, 1) = ps[i].elevation;
    v(i, 2) = ps[i].distance;
  }
  return out;
}

std::vector<SourcePosition> positions_from(const Array& a) {
  if (a.ndim() != 2 || (a.shape(1) != 2 && a.shape(1) != 3)) {
    throw DimensionError("positions must have shape (P, 3) or (P, 2)");
  }
  std::vector<SourcePosition> out;
  auto v = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out.push_back(SourcePosition::make(v(i, 0), v(i, 1), a.shape(1) == 3 ? v(i, 2) : 1.0));
  return out;
}

std::optional<NormalizationMode> mode_or_none(const std::optional<std::string>& m) {
  if (!m || *m == "none") return std::nullopt;
  return parse_normalization_mode(*m);
}

FieldHyperparams hyperparams_from(const py::dict& d) {
  Json j = FieldHyperparams{}.to_json();
  for (auto item : d) j[item.first.cast<std::string>()] = from_py(py::reinterpret_borrow<py::object>(item.second));
  return FieldHyperparams::from_json(j);
}

SpectrumSet rows_from(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("spectra must have shape (rows, n_bins)");
  SpectrumSet s;
  s.n_bins = static_cast<std::size_t>(a.shape(1));
  s.values.assign(a.data(), a.data() + a.size());
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "HRTF cross-database normalization";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());

  py::class_<Database>(m, "Database")
      .def(py::init([](std::string name, Array positions, Array spectra, std::uint32_t sample_rate,
                       std::vector<std::string> subject_ids, py::object provenance) {
             Database db;
             db.name = std::move(name);
             db.positions = positions_from(positions);
             if (spectra.ndim() != 4) throw DimensionError("spectra must have shape (subjects, positions, 2, n_bins)");
             db.grid = {sample_rate, static_cast<std::size_t>(spectra.shape(3))};
             for (auto& id : subject_ids) db.subjects.push_back({std::move(id), {}});
             set_spectra(db, spectra);
             if (!provenance.is_none()) db.provenance = from_py(provenance);
             db.validate();
             return db;
           }),
           py::arg("name"), py::arg("positions"), py::arg("spectra"), py::arg("sample_rate") = 48000,
           py::arg("subject_ids") = std::vector<std::string>{}, py::arg("provenance") = py::none())
      .def_readwrite("name", &Database::name)
      .def_property_readonly("sample_rate", [](const Database& d) { return d.grid.sample_rate; })
      .def_property_readonly("n_bins", [](const Database& d) { return d.grid.n_bins; })
      .def_property_readonly("frequencies", [](const Database& d) {
        Array f(d.grid.n_bins);
        for (std::size_t k = 0; k < d.grid.n_bins; ++k) f.mutable_data()[k] = d.grid.frequency(k);
        return f;
      })
      .def_property_readonly("positions", [](const Database& d) { return positions_of(d.positions); })
      .def_property_readonly("subject_ids", [](const Database& d) {
        std::vector<std::string> ids;
        for (const auto& s : d.subjects) ids.push_back(s.id);
        return ids;
      })
      .def_property("spectra", &spectra_of, &set_spectra)
      .def_property("provenance", [](const Database& d) { return to_py(d.provenance); },
                    [](Database& d, py::object o) { d.provenance = from_py(o); })
      .def("validate", [](const Database& d) { d.validate(); })
      .def("__eq__", [](const Database& a, const Database& b) { return a == b; })
      .def("__repr__", [](const Database& d) {
        std::ostringstream s;
        s << "<Database '" << d.name << "': " << d.subjects.size() << " subjects, " << d.positions.size()
          << " positions, " << d.grid.n_bins << " bins>";
        return s.str();
      });

  m.def("load_database", [](const std::string& path) { return load_database(path); }, py::arg("path"));
  m.def("save_database", [](const Database& db, const std::string& path) { save_database(db, path); },
        py::arg("db"), py::arg("path"));
  m.def("builtin_grid", [](const std::string& name) { return positions_of(builtin_grid(name)); }, py::arg("name"));
  m.def("common_positions", [](const std::vector<Database>& dbs) { return positions_of(find_common_positions(dbs)); },
        py::arg("dbs"));

  m.def("synth_corpus",
        [](std::size_t databases, std::size_t subjects, const std::string& positions, bool shared_pool,
           std::size_t n_bins, std::uint32_t sample_rate, std::uint64_t seed) {
          CorpusOptions o;
          o.databases = databases;
          o.subjects = subjects;
          o.positions = positions;
          o.shared_pool = shared_pool;
          o.grid = {sample_rate, n_bins};
          o.seed = seed;
          return synth_corpus(o).databases;
        },
        py::arg("databases") = 4, py::arg("subjects") = 18, py::arg("positions") = "grid12",
        py::arg("shared_pool") = true, py::arg("n_bins") = 129, py::arg("sample_rate") = 48000,
        py::arg("seed") = 0);

  m.def("mirror_augment", [](const Database& db) { return mirror_augment(db).db; }, py::arg("db"));

  py::class_<AverageHrtf>(m, "AverageHrtf")
      .def_property_readonly("mode", [](const AverageHrtf& a) { return std::string(to_string(a.mode)); })
      .def_readonly("source", &AverageHrtf::source)
      .def_readonly("subject_count", &AverageHrtf::subject_count)
      .def_property_readonly("id", &AverageHrtf::id)
      .def_property_readonly("table", [](const AverageHrtf& a) {
        Array t({a.position_slots(), a.ear_slots(), a.grid.n_bins});
        std::copy(a.table.begin(), a.table.end(), t.mutable_data());
        return t;
      })
      .def("to_database", &AverageHrtf::to_database)
      .def_static("from_database", &AverageHrtf::from_database);

  m.def("compute_average",
        [](const Database& db, const std::string& mode) { return compute_average_hrtf(db, parse_normalization_mode(mode)); },
        py::arg("db"), py::arg("mode") = "per-position-per-ear");
  m.def("normalize", &normalize, py::arg("db"), py::arg("average"));
  m.def("denormalize", &denormalize, py::arg("db"), py::arg("average"));

  m.def("lsd",
        [](Array truth, Array pred, std::uint32_t sample_rate, double band_low, double band_high) {
          auto t = rows_from(truth), p = rows_from(pred);
          return lsd(t, p, FrequencyGrid{sample_rate, t.n_bins}, BandSelection{band_low, band_high});
        },
        py::arg("truth"), py::arg("pred"), py::arg("sample_rate") = 48000, py::arg("band_low") = 200.0,
        py::arg("band_high") = 18000.0);

  m.def("cross_validate",
        [](const std::vector<Database>& dbs, std::size_t subjects, std::size_t folds, const std::string& strategy,
           double C, std::optional<double> gamma, std::uint64_t seed) {
          const auto pos = find_common_positions(dbs);
          const auto ds = build_dataset(dbs, pos, subjects, seed);
          const auto r = cross_validate(ds, folds, parse_fold_strategy(strategy), C, gamma, seed);
          py::array_t<std::int64_t> confusion({r.confusion.size(), r.confusion.size()});
          auto v = confusion.mutable_unchecked<2>();
          for (std::size_t i = 0; i < r.confusion.size(); ++i)
            for (std::size_t j = 0; j < r.confusion.size(); ++j) v(i, j) = static_cast<std::int64_t>(r.confusion[i][j]);
          py::dict out;
          out["mean_accuracy"] = r.mean_accuracy;
          out["fold_accuracies"] = r.fold_accuracies;
          out["labels"] = r.label_names;
          out["confusion"] = confusion;
          out["report"] = r.to_text();
          return out;
        },
        py::arg("dbs"), py::arg("subjects") = 18, py::arg("folds") = 5, py::arg("strategy") = "subject-disjoint",
        py::arg("C") = 1.0, py::arg("gamma") = py::none(), py::arg("seed") = 0);

  m.def("cross_db_experiment",
        [](const std::vector<Database>& train, const Database& test, std::optional<std::string> mode,
           py::dict hyperparams, double band_low, double band_high) {
          const auto r = cross_db_experiment(train, test, mode_or_none(mode), hyperparams_from(hyperparams),
                                             BandSelection{band_low, band_high});
          py::dict out;
          out["mode"] = r.mode;
          out["mean_lsd"] = r.mean_lsd;
          std::vector<double> per;
          for (const auto& s : r.subjects) per.push_back(s.lsd);
          out["subject_lsd"] = Array(per.size(), per.data());
          out["loss_curve"] = Array(r.loss_curve.size(), r.loss_curve.data());
          return out;
        },
        py::arg("train"), py::arg("test"), py::arg("mode") = "per-position-per-ear",
        py::arg("hyperparams") = py::dict(), py::arg("band_low") = 200.0, py::arg("band_high") = 18000.0);

  m.def("run_cli",
        [](std::vector<std::string> args) {
          args.insert(args.begin(), "hrtfnorm");
          std::ostringstream out, err;
          const int code = run_cli(args, out, err);
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
