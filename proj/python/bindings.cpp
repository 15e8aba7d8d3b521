#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "peergrade/comparison.hpp"
#include "peergrade/dataset.hpp"
#include "peergrade/diagnostics.hpp"
#include "peergrade/error.hpp"
#include "peergrade/fit_io.hpp"
#include "peergrade/posterior.hpp"
#include "peergrade/simulation.hpp"

namespace py = pybind11;
using namespace peergrade;

namespace {

// Configs cross the boundary as JSON text; the Python layer converts to and from dicts.
nlohmann::json parse(const std::string& text) { return nlohmann::json::parse(text); }

std::string loo_json(const LooResult& r) {
  std::vector<double> k(r.pareto_k.data(), r.pareto_k.data() + r.pareto_k.size());
  nlohmann::json ks = nlohmann::json::array();
  for (double v : k) ks.push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
  return nlohmann::json{{"elpd_loo", r.elpd_loo},
                        {"se", r.se},
                        {"p_loo", r.p_loo},
                        {"lppd", r.lppd},
                        {"pointwise_elpd", std::vector<double>(r.pointwise_elpd.data(),
                                                               r.pointwise_elpd.data() + r.pointwise_elpd.size())},
                        {"pareto_k", ks}}
      .dump();
}

std::string report_json(const RecoveryReport& r) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : r.parameters) {
    params.push_back({{"name", p.name}, {"truth", p.truth}, {"mean", p.mean}, {"lower", p.lower},
                      {"upper", p.upper}, {"covered", p.covered}});
  }
  return nlohmann::json{{"replication", r.replication},
                        {"seed", r.seed},
                        {"ok", r.ok},
                        {"error", r.error},
                        {"coverage", r.coverage},
                        {"rmse_model", r.rmse_model},
                        {"mae_model", r.mae_model},
                        {"rmse_mean_baseline", r.rmse_mean_baseline},
                        {"mae_mean_baseline", r.mae_mean_baseline},
                        {"max_rhat", r.max_rhat},
                        {"min_ess_ratio", r.min_ess_ratio},
                        {"converged", r.converged},
                        {"divergent_fraction", r.divergent_fraction},
                        {"parameters", params}}
      .dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bayesian latent-variable models for peer grading";
  m.attr("__version__") = library_version();

  static py::exception<Error> error(m, "PeerGradeError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  py::class_<PeerGradingDataset>(m, "Dataset")
      .def_property_readonly("students", &PeerGradingDataset::students)
      .def_property_readonly("assessments", &PeerGradingDataset::assessments)
      .def_property_readonly("size", &PeerGradingDataset::size)
      .def_property_readonly("scale_json", [](const PeerGradingDataset& d) { return scale_to_json(d.scale()).dump(); })
      .def_property_readonly("hash", [](const PeerGradingDataset& d) { return dataset_hash(d); })
      .def("records",
           [](const PeerGradingDataset& d) {
             std::vector<std::tuple<std::string, std::string, std::string, double>> out;
             for (const auto& o : d.observations()) out.emplace_back(o.examinee_id, o.grader_id, o.assessment_id, o.grade);
             return out;
           })
      .def("to_csv",
           [](const PeerGradingDataset& d) {
             std::ostringstream out;
             write_grades_csv(out, d);
             return out.str();
           })
      .def("__len__", &PeerGradingDataset::size);

  m.def(
      "dataset_from_records",
      [](const std::vector<std::tuple<std::string, std::string, std::string, double>>& records,
         const std::string& scale, const std::vector<std::string>& students) {
        std::vector<GradeObservation> raw;
        for (const auto& [e, g, a, y] : records) raw.push_back({e, g, a, y});
        return validate_dataset(std::move(raw), scale_from_json(parse(scale)), students);
      },
      py::arg("records"), py::arg("scale_json"), py::arg("students") = std::vector<std::string>{});
  m.def(
      "read_dataset",
      [](const std::string& path, const std::string& meta_path) {
        Scale scale = meta_path.empty() ? Scale::unbounded() : read_scale_json(meta_path);
        return validate_dataset(read_grades_csv(path), scale);
      },
      py::arg("path"), py::arg("meta_path") = "");

  m.def(
      "simulate",
      [](const std::string& config) {
        GeneratorConfig c = generator_config_from_json(parse(config));
        SimulatedData sim = generate(c);
        return py::make_tuple(sim.data, truth_csv(c, sim.truth));
      },
      py::arg("config_json"));

  py::class_<FitResult>(m, "Fit")
      .def_property_readonly("names", [](const FitResult& f) { return f.structural.names; })
      .def_property_readonly("draws", [](const FitResult& f) { return f.structural.values; })
      .def_property_readonly("chains", [](const FitResult& f) { return f.structural.chains; })
      .def_property_readonly("flagged", &FitResult::flagged)
      .def_property_readonly("converged", &FitResult::converged)
      .def("student_draws",
           [](const FitResult& f) {
             DrawTable t = student_draws(f.layout, f.run);
             return py::make_tuple(t.names, t.values);
           })
      .def("pointwise_loglik", [](const FitResult& f) { return stacked_pointwise(f.run); })
      .def("summary_json",
           [](const FitResult& f) {
             nlohmann::json rows = nlohmann::json::array();
             for (const auto& s : f.structural_summary) rows.push_back(summary_to_json(s));
             return rows.dump();
           })
      .def("diagnostics_json", [](const FitResult& f) { return diagnostics_json(f).dump(); })
      .def(
          "write",
          [](const FitResult& f, const std::filesystem::path& dir, const PeerGradingDataset& data,
             const std::string& sampler) {
            RunManifest manifest = make_manifest("python", f.layout.spec, sampler_config_from_json(parse(sampler)), data);
            manifest.files = write_fit_outputs(dir, f, data, manifest);
            manifest.status = f.flagged().empty() ? "ok" : "flagged";
            write_manifest(dir, manifest);
            return manifest.id;
          },
          py::arg("directory"), py::arg("data"), py::arg("sampler_json"));

  m.def(
      "fit",
      [](const PeerGradingDataset& data, const std::string& model, const std::string& sampler) {
        ModelSpec spec = model_spec_from_json(parse(model));
        SamplerConfig config = sampler_config_from_json(parse(sampler));
        py::gil_scoped_release release;
        return fit_model(spec, data, config);
      },
      py::arg("data"), py::arg("model_json"), py::arg("sampler_json"));

  m.def("score_fit_dir", [](const std::filesystem::path& dir) { return score_fit_dir(dir); });

  m.def("psis_loo", [](const Eigen::MatrixXd& pll) { return loo_json(psis_loo(pll)); });
  m.def("waic", [](const Eigen::MatrixXd& pll) {
    WaicResult w = waic(pll);
    return nlohmann::json{{"waic", w.waic}, {"lppd", w.lppd}, {"p_waic", w.p_waic}, {"se", w.se_waic}}.dump();
  });
  m.def("compare", [](const std::vector<std::pair<std::string, Eigen::MatrixXd>>& models) {
    std::vector<ModelPredictive> summaries;
    for (const auto& [name, pll] : models) summaries.push_back(predictive_summary(name, pll));
    return compare(summaries).to_json().dump();
  });

  m.def("split_rhat", [](const Eigen::MatrixXd& draws) { return split_rhat(draws).value; },
        py::arg("draws"), "Split R-hat of a draws x chains matrix.");
  m.def("ess_bulk", [](const Eigen::MatrixXd& draws) { return ess_bulk(draws).value; }, py::arg("draws"));

  m.def(
      "recovery",
      [](const std::string& experiment) {
        std::vector<std::string> out;
        for (const auto& config : recovery_configs_from_json(parse(experiment))) {
          for (int r = 0; r < config.replications; ++r) {
            RecoveryReport report;
            {
              py::gil_scoped_release release;
              report = run_replication(config, r);
            }
            nlohmann::json j = nlohmann::json::parse(report_json(report));
            j["scenario"] = config.label;
            out.push_back(j.dump());
          }
        }
        return out;
      },
      py::arg("experiment_json"));
}
