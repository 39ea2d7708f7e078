#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "stddp/error.hpp"
#include "stddp/experiment.hpp"
#include "stddp/geodata.hpp"
#include "stddp/ingest.hpp"
#include "stddp/model.hpp"
#include "stddp/synthetic.hpp"

namespace py = pybind11;
using namespace stddp;

namespace {

ExperimentConfig make_config(const py::dict& settings) {
  ExperimentConfig config;
  for (const auto& [key, value] : settings) {
    std::string text;
    if (py::isinstance<py::bool_>(value)) {
      text = value.cast<bool>() ? "true" : "false";
    } else if (py::isinstance<py::list>(value) || py::isinstance<py::tuple>(value)) {
      for (const auto& item : value) {
        if (!text.empty()) text += ',';
        text += py::str(item).cast<std::string>();
      }
    } else {
      text = py::str(value).cast<std::string>();
    }
    config.set(py::str(key).cast<std::string>(), text);
  }
  return config;
}

py::dict report_dict(const MetricsReport& r) {
  py::dict d;
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    d[py::str("recall@" + std::to_string(r.ks[i]))] = r.recall[i];
    d[py::str("f1@" + std::to_string(r.ks[i]))] = r.f1[i];
  }
  d["map"] = r.map;
  d["instances"] = r.count;
  return d;
}

py::dict stats_dict(const CorpusStats& s) {
  py::dict d;
  d["raw_users"] = s.raw_users;
  d["raw_pois"] = s.raw_pois;
  d["raw_checkins"] = s.raw_checkins;
  d["malformed_lines"] = s.malformed_lines;
  d["users"] = s.users;
  d["pois"] = s.pois;
  d["checkins"] = s.checkins;
  d["sparsity"] = s.sparsity;
  d["train_samples"] = s.train_samples;
  d["validation_samples"] = s.validation_samples;
  d["test_samples"] = s.test_samples;
  return d;
}

py::dict rows_dict(const std::vector<NamedReport>& rows) {
  py::dict d;
  for (const auto& row : rows) d[py::str(row.name)] = report_dict(row.report);
  return d;
}

// Scores samples of one split with a trained checkpoint.
class Predictor {
 public:
  explicit Predictor(const py::dict& settings) : config_(make_config(settings)) {
    config_.validate();
    prepared_ = load_corpus(config_);
    const auto path = config_.checkpoint.empty() ? config_.out / "checkpoint.bin"
                                                 : std::filesystem::path(config_.checkpoint);
    params_ = load_checkpoint(path);
    check_compatible(params_, prepared_.corpus.num_users(), prepared_.corpus.num_pois(),
                     config_.hyper);
    spatial_ = std::make_unique<SpatialRowCache>(prepared_.corpus.pois, config_.cache_rows);
    samples_ = select_split(prepared_.samples, config_.split);
  }

  std::size_t size() const { return samples_.size(); }
  std::size_t num_pois() const { return prepared_.corpus.num_pois(); }

  std::vector<double> probabilities(std::size_t i) const {
    return forward(at(i), params_, *spatial_, config_.variant).probabilities;
  }

  std::vector<std::string> topk(std::size_t i, std::size_t k) const {
    const auto trace = forward(at(i), params_, *spatial_, config_.variant);
    std::vector<std::string> ids;
    for (PoiIndex p : predict_topk(trace, k)) ids.push_back(prepared_.corpus.pois.id(p));
    return ids;
  }

  py::dict sample(std::size_t i) const {
    const Sample& s = at(i);
    py::dict d;
    d["user"] = prepared_.corpus.users[s.user].id;
    d["target"] = prepared_.corpus.pois.id(s.target);
    d["target_utc"] = s.target_utc;
    d["interval_before"] = s.interval_before;
    d["interval_after"] = s.interval_after;
    return d;
  }

  double loss(std::size_t i) const {
    return cross_entropy(forward(at(i), params_, *spatial_, config_.variant), at(i).target);
  }

 private:
  const Sample& at(std::size_t i) const {
    if (i >= samples_.size()) throw py::index_error("sample index out of range");
    return samples_[i];
  }

  ExperimentConfig config_;
  PreparedCorpus prepared_;
  ModelParams params_;
  std::unique_ptr<SpatialRowCache> spatial_;
  std::vector<Sample> samples_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bi-STDDP missing check-in identification";

  auto base = py::register_exception<Error>(m, "StddpError");
  py::register_exception<InvalidInput>(m, "InvalidInput", base.ptr());
  py::register_exception<ShapeMismatch>(m, "ShapeMismatch", base.ptr());
  py::register_exception<EmptyCorpus>(m, "EmptyCorpus", base.ptr());
  py::register_exception<DegenerateGeometry>(m, "DegenerateGeometry", base.ptr());
  py::register_exception<EmptyTrainSet>(m, "EmptyTrainSet", base.ptr());

  m.def(
      "haversine_km",
      [](double lat1, double lon1, double lat2, double lon2) {
        return haversine_km(GeoPoint::checked(lat1, lon1), GeoPoint::checked(lat2, lon2));
      },
      py::arg("lat1"), py::arg("lon1"), py::arg("lat2"), py::arg("lon2"));

  m.def("config_keys", &ExperimentConfig::keys);
  m.def(
      "resolve_config",
      [](const py::dict& settings) { return make_config(settings).to_map(); },
      py::arg("settings"), "Canonical settings after applying overrides to the defaults.");
  m.def(
      "load_config_file",
      [](const std::filesystem::path& path) {
        ExperimentConfig c;
        c.load_file(path);
        return c.to_map();
      },
      py::arg("path"));

  m.def(
      "write_planted_corpus",
      [](const std::filesystem::path& path, std::size_t users, std::size_t checkins_per_user,
         std::uint64_t seed, std::size_t window) {
        synthetic::PlantedOptions options;
        options.users = users;
        options.checkins_per_user = checkins_per_user;
        options.seed = seed;
        write_prepared(path, prepare_corpus(synthetic::planted_corpus(options), window));
      },
      py::arg("path"), py::arg("users") = 40, py::arg("checkins_per_user") = 100,
      py::arg("seed") = 1, py::arg("window") = 1,
      "Writes a synthetic STDDP1 corpus with a planted spatio-temporal structure.");

  m.def(
      "prepare",
      [](const py::dict& settings) {
        const auto config = make_config(settings);
        std::ostringstream log;
        py::gil_scoped_release release;
        return cmd_prepare(config, log);
      },
      py::arg("settings"));
  m.def(
      "train",
      [](const py::dict& settings) {
        const auto config = make_config(settings);
        std::ostringstream log;
        TrainOutcome outcome;
        {
          py::gil_scoped_release release;
          outcome = cmd_train(config, log);
        }
        py::dict d;
        d["checkpoint"] = outcome.checkpoint;
        d["best_epoch"] = outcome.fit.best_epoch;
        d["best_metric"] = outcome.fit.best_metric;
        d["stopped_early"] = outcome.fit.stopped_early;
        py::list epochs;
        for (const auto& e : outcome.fit.log) {
          py::dict row = report_dict(e.validation);
          row["epoch"] = e.epoch;
          row["train_loss"] = e.train_loss;
          epochs.append(row);
        }
        d["epochs"] = epochs;
        return d;
      },
      py::arg("settings"));
  m.def(
      "evaluate",
      [](const py::dict& settings) {
        const auto config = make_config(settings);
        std::ostringstream log;
        MetricsReport report;
        {
          py::gil_scoped_release release;
          report = cmd_evaluate(config, log);
        }
        return report_dict(report);
      },
      py::arg("settings"));
  m.def(
      "baselines",
      [](const py::dict& settings) {
        const auto config = make_config(settings);
        std::ostringstream log;
        std::vector<NamedReport> rows;
        {
          py::gil_scoped_release release;
          rows = cmd_baselines(config, log);
        }
        return rows_dict(rows);
      },
      py::arg("settings"));
  m.def(
      "ablate",
      [](const py::dict& settings) {
        const auto config = make_config(settings);
        std::ostringstream log;
        std::vector<NamedReport> rows;
        {
          py::gil_scoped_release release;
          rows = cmd_ablate(config, log);
        }
        return rows_dict(rows);
      },
      py::arg("settings"));
  m.def(
      "sweep",
      [](const py::dict& settings) {
        const auto config = make_config(settings);
        std::ostringstream log;
        std::vector<SweepRow> rows;
        {
          py::gil_scoped_release release;
          rows = cmd_sweep(config, log);
        }
        py::list out;
        for (const auto& row : rows) {
          py::dict d = row.ok ? report_dict(row.report) : py::dict();
          d["value"] = row.value;
          d["ok"] = row.ok;
          d["error"] = row.error;
          out.append(d);
        }
        return out;
      },
      py::arg("settings"));
  m.def(
      "selfcheck",
      [](const py::dict& settings) {
        const auto config = make_config(settings);
        std::ostringstream log;
        bool ok = false;
        {
          py::gil_scoped_release release;
          ok = cmd_selfcheck(config, log);
        }
        return py::make_tuple(ok, log.str());
      },
      py::arg("settings") = py::dict());

  py::class_<CorpusStats>(m, "CorpusStats")
      .def("as_dict", &stats_dict)
      .def_readonly("users", &CorpusStats::users)
      .def_readonly("pois", &CorpusStats::pois)
      .def_readonly("checkins", &CorpusStats::checkins)
      .def_readonly("sparsity", &CorpusStats::sparsity)
      .def_readonly("train_samples", &CorpusStats::train_samples)
      .def_readonly("validation_samples", &CorpusStats::validation_samples)
      .def_readonly("test_samples", &CorpusStats::test_samples);

  py::class_<Predictor>(m, "Predictor")
      .def(py::init<const py::dict&>(), py::arg("settings"))
      .def("__len__", &Predictor::size)
      .def_property_readonly("num_pois", &Predictor::num_pois)
      .def("sample", &Predictor::sample, py::arg("index"))
      .def("probabilities", &Predictor::probabilities, py::arg("index"))
      .def("topk", &Predictor::topk, py::arg("index"), py::arg("k") = 10)
      .def("loss", &Predictor::loss, py::arg("index"));
}
