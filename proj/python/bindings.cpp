#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <string>
#include <variant>

#include "bellamy/baselines.hpp"
#include "bellamy/dataio.hpp"
#include "bellamy/error.hpp"
#include "bellamy/eval.hpp"
#include "bellamy/model.hpp"
#include "bellamy/synthetic.hpp"
#include "bellamy/training.hpp"

namespace py = pybind11;
using namespace bellamy;

namespace {

using PyProperty = std::variant<std::uint64_t, std::string>;

PropertyValue to_value(const PyProperty& v) {
  if (const auto* n = std::get_if<std::uint64_t>(&v)) return PropertyValue::natural(*n);
  return PropertyValue::text(std::get<std::string>(v));
}

PropertyMap to_properties(const std::map<std::string, PyProperty>& props) {
  PropertyMap out;
  for (const auto& [k, v] : props) out.emplace(k, to_value(v));
  return out;
}

py::dict from_properties(const PropertyMap& props) {
  py::dict d;
  for (const auto& [k, v] : props) {
    if (v.kind() == PropertyKind::natural)
      d[py::str(k)] = v.as_natural();
    else
      d[py::str(k)] = v.as_text();
  }
  return d;
}

std::vector<ScalePoint> to_points(const std::vector<std::pair<double, double>>& pts) {
  std::vector<ScalePoint> out;
  for (const auto& [x, y] : pts) out.push_back({x, y});
  return out;
}

const std::map<std::string, std::string> kRoles{{"node_type", "node_type"},
                                                {"job_parameters", "job_parameters"},
                                                {"dataset_size", "dataset_size"},
                                                {"dataset_characteristics", "dataset_characteristics"}};

py::dict report_dict(const FineTuneReport& r) {
  py::dict d;
  d["epochs_run"] = r.epochs_run;
  d["best_epoch"] = r.best_epoch;
  d["best_mae_seconds"] = r.best_mae_seconds;
  d["stopping_reason"] = to_string(r.stopping_reason);
  d["wall_time_s"] = r.wall_time_s;
  d["unfreeze_epoch"] = r.unfreeze_epoch;
  d["mae_history"] = r.mae_history;
  return d;
}

}  // namespace

PYBIND11_MODULE(_bellamy, m) {
  m.doc() = "Runtime prediction for distributed dataflow jobs";

  static py::exception<Error> error(m, "BellamyError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  // encoding
  m.def("binarize", [](std::uint64_t n) { return binarize(n); }, py::arg("n"));
  m.def("debinarize", [](const Vector& bits) { return debinarize(bits); }, py::arg("bits"));
  m.def("binarizer_capacity", [] { return binarizer_capacity(); });
  m.def("hash_text", [](const std::string& s) { return hash_text(s); }, py::arg("text"));
  m.def("fnv1a64", [](const std::string& s) { return fnv1a64(s); }, py::arg("data"));
  m.def("encode_property", [](const PyProperty& v) { return encode_property(to_value(v)); },
        py::arg("value"));
  m.def("scaleout_features", &scaleout_features, py::arg("machines"));

  // baselines
  m.def(
      "nnls",
      [](const std::vector<std::vector<double>>& rows, const Vector& b) {
        if (rows.empty()) throw Error(ErrorKind::shape, "nnls: empty design matrix");
        Matrix a(rows.size(), rows[0].size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (rows[i].size() != a.cols()) throw Error(ErrorKind::shape, "nnls: ragged matrix");
          for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) = rows[i][j];
        }
        const auto r = nnls(a, b);
        return py::make_tuple(r.x, r.residual_norm);
      },
      py::arg("a"), py::arg("b"), "Returns (x, residual_norm) for min |Ax - b| with x >= 0.");
  m.def(
      "ernest_fit",
      [](const std::vector<std::pair<double, double>>& pts) { return ernest_fit(to_points(pts)).theta; },
      py::arg("points"));
  m.def(
      "ernest_predict",
      [](const std::array<double, 4>& theta, double x) { return ernest_predict(ErnestModel{theta}, x); },
      py::arg("theta"), py::arg("scale_out"));

  py::class_<BellModel>(m, "BellModel")
      .def_property_readonly("chosen",
                             [](const BellModel& b) {
                               return b.chosen == BellChoice::parametric ? "parametric" : "nonparametric";
                             })
      .def_readonly("parametric_cv_error", &BellModel::parametric_cv_error)
      .def_readonly("nonparametric_cv_error", &BellModel::nonparametric_cv_error)
      .def("predict", [](const BellModel& b, double x) { return bell_predict(b, x); }, py::arg("scale_out"));
  m.def(
      "bell_fit", [](const std::vector<std::pair<double, double>>& pts) { return bell_fit(to_points(pts)); },
      py::arg("points"));

  // records
  py::class_<RunRecord>(m, "RunRecord")
      .def(py::init([](std::string algorithm, long long scale_out, double runtime,
                       const std::map<std::string, PyProperty>& props) {
             RunRecord r;
             r.algorithm = std::move(algorithm);
             r.scale_out = scale_out;
             r.runtime_seconds = runtime;
             r.properties = to_properties(props);
             r.context = make_context_key(r.properties, kRoles);
             return r;
           }),
           py::arg("algorithm"), py::arg("scale_out"), py::arg("runtime_seconds"), py::arg("properties"))
      .def_readonly("algorithm", &RunRecord::algorithm)
      .def_readonly("scale_out", &RunRecord::scale_out)
      .def_readonly("runtime_seconds", &RunRecord::runtime_seconds)
      .def_property_readonly("properties", [](const RunRecord& r) { return from_properties(r.properties); })
      .def_property_readonly("context", [](const RunRecord& r) { return r.context.to_string(); });

  m.def(
      "synthetic_runs",
      [](std::size_t contexts, std::uint64_t seed) {
        const auto ctx = synthetic_contexts(contexts, seed);
        return generate_runs(ctx, {}, seed);
      },
      py::arg("contexts"), py::arg("seed") = 0);
  m.def(
      "load_dataset",
      [](const std::filesystem::path& csv, const std::filesystem::path& manifest) {
        return load_dataset(csv, DatasetManifest::load(manifest));
      },
      py::arg("csv"), py::arg("manifest"));

  // model
  py::class_<ModelState, std::shared_ptr<ModelState>>(m, "Model")
      .def_static(
          "create",
          [](std::uint64_t seed) {
            const std::vector<long long> xs{2, 12};
            return std::make_shared<ModelState>(
                ModelState::create(synthetic_schema(), Normalizer::fit_scaleouts(xs), seed));
          },
          py::arg("seed") = 0, "Untrained model over the synthetic property schema.")
      .def_static("load", [](const std::filesystem::path& p) { return std::make_shared<ModelState>(load(p)); },
                  py::arg("path"))
      .def("save", [](const ModelState& s, const std::filesystem::path& p) { save(s, p); }, py::arg("path"))
      .def("to_bytes",
           [](const ModelState& s) {
             const auto b = serialize(s);
             return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
           })
      .def_static("from_bytes",
                  [](const py::bytes& data) {
                    const std::string s = data;
                    const std::vector<std::uint8_t> b(s.begin(), s.end());
                    return std::make_shared<ModelState>(deserialize(b));
                  })
      .def(
          "predict",
          [](const ModelState& s, long long x, const std::map<std::string, PyProperty>& props) {
            return predict_runtime(s, x, to_properties(props));
          },
          py::arg("scale_out"), py::arg("properties"))
      .def_property_readonly("fingerprint", [](const ModelState& s) { return fingerprint_hex(s.fingerprint()); })
      .def_property_readonly("essential", [](const ModelState& s) {
        std::vector<std::string> names;
        for (const auto& p : s.schema.essential) names.push_back(p.name);
        return names;
      });

  m.def(
      "pretrain",
      [](const std::vector<RunRecord>& records, std::size_t samples, int epochs, std::uint64_t seed,
         unsigned workers) {
        SearchSpace space;
        space.sample_count = samples;
        space.epochs = epochs;
        py::gil_scoped_release release;
        auto r = pretrain(records, synthetic_schema(), space, seed, workers);
        return std::make_shared<ModelState>(std::move(r.state));
      },
      py::arg("records"), py::arg("samples") = 12, py::arg("epochs") = 2500, py::arg("seed") = 0,
      py::arg("workers") = 1);
  m.def(
      "finetune",
      [](const ModelState& base, const std::vector<RunRecord>& samples, const std::string& strategy,
         const std::string& reuse, std::uint64_t seed, int max_epochs) {
        FineTuneOptions options;
        options.max_epochs = max_epochs;
        FineTuneResult r = [&] {
          py::gil_scoped_release release;
          return finetune(base, samples, parse_strategy(strategy), parse_reuse(reuse), seed, options);
        }();
        return py::make_tuple(std::make_shared<ModelState>(std::move(r.state)), report_dict(r.report));
      },
      py::arg("model"), py::arg("samples"), py::arg("strategy") = "pretrained",
      py::arg("reuse") = "partial-unfreeze", py::arg("seed") = 0, py::arg("max_epochs") = 2500);

  // evaluation helpers
  m.def(
      "ecdf", [](const std::vector<int>& v) { return ecdf(v); }, py::arg("values"));
  m.def(
      "lr_at",
      [](int epoch, double lo, double hi, int period) { return lr_at(epoch, {lo, hi, period}); },
      py::arg("epoch"), py::arg("lo") = 1e-3, py::arg("hi") = 1e-2, py::arg("period") = 200);
}
