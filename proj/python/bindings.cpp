#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <string>
#include <vector>

#include "rjm/accuracy.hpp"
#include "rjm/cohort_io.hpp"
#include "rjm/config.hpp"
#include "rjm/distributions.hpp"
#include "rjm/error.hpp"
#include "rjm/fit.hpp"
#include "rjm/service.hpp"
#include "rjm/simulate.hpp"

namespace py = pybind11;

namespace {

rjm::RunConfig config_from(const std::map<std::string, std::string>& settings) {
  rjm::RunConfig config;
  for (const auto& [key, value] : settings) rjm::apply_config_value(key, value, config);
  config.validate();
  return config;
}

std::vector<rjm::Outcome> outcomes(const std::vector<double>& times, const std::vector<int>& events) {
  if (times.size() != events.size()) throw rjm::ValidationError("times and events differ in length");
  std::vector<rjm::Outcome> out(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) out[i] = {times[i], events[i] != 0};
  return out;
}

void simulate(const std::string& long_csv, const std::string& surv_csv, const std::string& regime, int n,
              double df, std::uint64_t seed) {
  rjm::SimulationSpec spec = rjm::SimulationSpec::defaults(rjm::parse_regime(regime), df);
  spec.n = n;
  const auto cohort = rjm::simulate_cohort(spec, seed);
  rjm::write_cohort(cohort.records, long_csv, surv_csv);
}

py::dict fit(const std::string& long_csv, const std::string& surv_csv, const std::string& out_dir,
             const std::map<std::string, std::string>& settings) {
  const rjm::RunConfig config = config_from(settings);
  const auto records = rjm::read_cohort(long_csv, surv_csv);
  rjm::FitOptions options;
  options.sampler = config.sampler;
  options.keep_latents = config.keep_latents;
  options.rhat_warn = config.rhat_warn;
  options.rhat_fail = config.rhat_fail;
  rjm::FitResult result;
  {
    py::gil_scoped_release release;
    result = rjm::fit_model(records, config.model, options);
  }
  rjm::save_fit(result, out_dir);
  py::dict out;
  out["verdict"] = rjm::to_string(result.verdict);
  out["max_rhat"] = result.max_rhat();
  out["divergences"] = result.divergences;
  out["draws"] = result.draws.rows();
  py::dict medians;
  for (const auto& d : result.diagnostics) medians[py::str(d.name)] = d.summary.p50;
  out["medians"] = medians;
  return out;
}

class Service {
 public:
  Service(const std::string& fit_dir, const std::map<std::string, std::string>& settings)
      : service_(config_from(settings)) {
    service_.load(fit_dir);
  }
  py::tuple handle(const std::string& method, const std::string& path, const std::string& body,
                   const std::map<std::string, std::string>& query) const {
    rjm::HttpResponse r;
    {
      py::gil_scoped_release release;
      r = service_.handle(method, path, body, query);
    }
    return py::make_tuple(r.status, r.body);
  }
  std::string digest() const { return service_.model_digest(); }

 private:
  rjm::PredictionService service_;
};

}  // namespace

PYBIND11_MODULE(_rjm, m) {
  m.doc() = "Robust shared-parameter joint models";
  py::register_exception<rjm::ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<rjm::DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<rjm::UndefinedMetricError>(m, "UndefinedMetricError", PyExc_ArithmeticError);

  m.def("log_density_t", &rjm::log_density_t_marginal, py::arg("y"), py::arg("loc"), py::arg("scale"),
        py::arg("df"));
  m.def("log_density_normal", &rjm::log_density_scaled_normal, py::arg("y"), py::arg("mean"), py::arg("sd"));
  m.def("config_keys", &rjm::config_keys);
  m.def("simulate", &simulate, py::arg("long_csv"), py::arg("surv_csv"), py::arg("regime") = "tt",
        py::arg("n") = 500, py::arg("df") = 4.0, py::arg("seed") = 1);
  m.def("fit", &fit, py::arg("long_csv"), py::arg("surv_csv"), py::arg("out_dir"),
        py::arg("settings") = std::map<std::string, std::string>{});
  m.def(
      "auc",
      [](const std::vector<double>& pi, const std::vector<double>& times, const std::vector<int>& events, double s,
         double u) {
        const auto o = outcomes(times, events);
        return rjm::auc_ipcw(pi, o, s, u, rjm::censoring_km(o));
      },
      py::arg("pi"), py::arg("times"), py::arg("events"), py::arg("s"), py::arg("u"));
  m.def(
      "brier",
      [](const std::vector<double>& pi, const std::vector<double>& times, const std::vector<int>& events, double s,
         double u) {
        const auto o = outcomes(times, events);
        return rjm::brier_ipcw(pi, o, s, u, rjm::censoring_km(o));
      },
      py::arg("pi"), py::arg("times"), py::arg("events"), py::arg("s"), py::arg("u"));
  m.def(
      "r2",
      [](const std::vector<double>& pi, const std::vector<double>& times, const std::vector<int>& events, double s,
         double u) {
        const auto o = outcomes(times, events);
        return rjm::r2_criterion(pi, o, s, u, rjm::censoring_km(o));
      },
      py::arg("pi"), py::arg("times"), py::arg("events"), py::arg("s"), py::arg("u"));

  py::class_<Service>(m, "Service")
      .def(py::init<const std::string&, const std::map<std::string, std::string>&>(), py::arg("fit_dir"),
           py::arg("settings") = std::map<std::string, std::string>{})
      .def("handle", &Service::handle, py::arg("method"), py::arg("path"), py::arg("body") = "",
           py::arg("query") = std::map<std::string, std::string>{})
      .def("digest", &Service::digest);
}
