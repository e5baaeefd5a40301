#include <CLI11.hpp>
#include <atomic>
#include <csignal>
#include <deque>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "rjm/accuracy.hpp"
#include "rjm/cohort_io.hpp"
#include "rjm/config.hpp"
#include "rjm/dynpred.hpp"
#include "rjm/error.hpp"
#include "rjm/fit.hpp"
#include "rjm/http_server.hpp"
#include "rjm/service.hpp"
#include "rjm/simulate.hpp"

namespace fs = std::filesystem;
using namespace rjm;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitConvergence = 3;

// Flags that map one-to-one onto config keys; set flags override the file.
struct Overrides {
  std::deque<std::pair<std::string, std::string>> values;
  std::string config_path;

  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    values.emplace_back(key, "");
    auto& slot = values.back().second;
    app->add_option(flag, slot, help);
  }
  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const auto& [key, value] : values) {
      if (!value.empty()) apply_config_value(key, value, c);
    }
    c.validate();
    return c;
  }
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_path, "key = value settings file");
  o.add(app, "--seed", "seed", "RNG seed");
  o.add(app, "--out", "out", "output directory");
}

void add_data(CLI::App* app, Overrides& o) {
  o.add(app, "--long", "long", "longitudinal CSV (id,time,value)");
  o.add(app, "--surv", "surv", "survival CSV (id,event_time,event,covariates...)");
}

void add_prediction(CLI::App* app, Overrides& o) {
  o.add(app, "--fit", "fit", "fit directory");
  o.add(app, "--landmarks", "landmarks", "comma-separated landmark times s");
  o.add(app, "--horizon", "horizon", "comma-separated horizons u");
  o.add(app, "--thin", "thin", "use every k-th posterior draw");
  o.add(app, "--max-draws", "max_draws", "cap on posterior draws used");
  o.add(app, "--latent-warmup", "latent_warmup", "latent adaptation iterations per draw");
  o.add(app, "--prediction-seed", "prediction_seed", "seed for latent sampling");
  o.add(app, "--threads", "threads", "worker threads");
}

std::string require(const std::string& value, const std::string& what) {
  if (value.empty()) throw ValidationError("missing " + what);
  return value;
}

std::vector<SubjectRecord> read_data(const RunConfig& c, bool fitting) {
  CohortReport report;
  auto records = read_cohort(require(c.long_path, "--long"), require(c.surv_path, "--surv"), &report);
  validate_cohort(records, fitting);
  std::fprintf(stderr, "read %d subjects, %d longitudinal rows\n", report.subjects, report.longitudinal_rows);
  return records;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << text;
}

struct SimulateArgs {
  int n = 500;
  double df = 4.0;
  std::string schedule = "grid";
  double visit_rate = 1.0;
  bool split = false;
  double outliers = 0.0;
  double outlier_shift = 1.0;
};

int run_simulate(const RunConfig& c, const SimulateArgs& a) {
  SimulationSpec spec = SimulationSpec::defaults(c.model.regime, a.df);
  spec.n = a.n;
  const int n = a.n;
  const bool split = a.split;
  if (a.schedule == "poisson") {
    spec.schedule = SimulationSpec::Schedule::Poisson;
    spec.visit_rate = a.visit_rate;
  } else if (a.schedule != "grid") {
    throw ValidationError("--schedule must be grid or poisson");
  }
  if (!(a.outliers >= 0.0 && a.outliers <= 1.0)) throw ValidationError("--outliers must be in [0, 1]");
  const fs::path out = require(c.out, "--out");
  fs::create_directories(out);
  SimulatedCohort cohort = simulate_cohort(spec, c.sampler.seed);
  int altered = 0;
  if (a.outliers > 0.0) altered = inject_outliers(cohort.records, a.outliers, a.outlier_shift, c.sampler.seed);
  write_cohort(cohort.records, (out / "long.csv").string(), (out / "surv.csv").string());
  if (split) {
    const auto [learn, valid] = split_cohort(cohort.records, c.learning_fraction, c.sampler.seed);
    write_cohort(learn, (out / "learn_long.csv").string(), (out / "learn_surv.csv").string());
    write_cohort(valid, (out / "valid_long.csv").string(), (out / "valid_surv.csv").string());
  }
  std::vector<double> truth;
  append_globals(spec.truth, spec.model, truth);
  nlohmann::json j{{"regime", to_string(spec.model.regime)},
                   {"n", n},
                   {"seed", c.sampler.seed},
                   {"administratively_censored", cohort.administratively_censored},
                   {"outliers", altered}};
  const auto names = global_columns(spec.model);
  for (std::size_t k = 0; k < names.size(); ++k) j["truth"][names[k]] = truth[k];
  write_text(out / "truth.json", j.dump(2) + "\n");
  std::fprintf(stderr, "simulated %d subjects (%d administratively censored) into %s\n", n,
               cohort.administratively_censored, out.string().c_str());
  return 0;
}

int run_fit(const RunConfig& c) {
  const auto records = read_data(c, true);
  const fs::path out = require(c.out, "--out");
  fs::create_directories(out);
  write_text(out / "design_audit.csv", design_audit_csv(records, c.model));
  FitOptions opts;
  opts.sampler = c.sampler;
  opts.keep_latents = c.keep_latents;
  opts.rhat_warn = c.rhat_warn;
  opts.rhat_fail = c.rhat_fail;
  const int iters = c.sampler.iterations;
  std::vector<std::atomic<int>> last(c.sampler.chains);
  const FitResult fit = fit_model(records, c.model, opts, [&](int chain, int it) {
    const int pct = (it + 1) * 10 / iters;
    if (pct > last[chain].load()) {
      last[chain] = pct;
      std::fprintf(stderr, "chain %d: %d%%\n", chain + 1, pct * 10);
    }
  });
  save_fit(fit, out.string());
  std::fprintf(stderr, "fit %s: %d draws, %d divergences, max R-hat %.4f, %s (%.1f s)\n",
               to_string(c.model.regime).c_str(), fit.draws.rows(), fit.divergences, fit.max_rhat(),
               to_string(fit.verdict).c_str(), fit.seconds);
  if (fit.verdict == Convergence::Fail && !c.allow_unconverged) {
    std::fprintf(stderr, "R-hat at or above %.3g: convergence failure (use --allow-unconverged to accept)\n",
                 c.rhat_fail);
    return kExitConvergence;
  }
  return 0;
}

Predictor make_predictor(const RunConfig& c) {
  FitResult fit = load_fit(require(c.fit_dir, "--fit"));
  return Predictor(std::move(fit.draws), fit.spec, c.prediction);
}

int run_predict(const RunConfig& c) {
  const auto records = read_data(c, false);
  const Predictor predictor = make_predictor(c);
  const fs::path out = require(c.out, "--out");
  fs::create_directories(out);
  nlohmann::json bodies = nlohmann::json::array();
  std::vector<PredictionResult> results;
  for (double s : c.landmarks) {
    for (const auto& r : records) {
      if (!(r.event_time > s)) {
        std::fprintf(stderr, "warning: %s not at risk at s=%g (event or censoring at %g); excluded\n", r.id.c_str(),
                     s, r.event_time);
        continue;
      }
      NewcomerData subject = NewcomerData::from_record(r);
      const auto n_before = subject.measurements.size();
      std::erase_if(subject.measurements, [s](const Measurement& m) { return m.time > s; });
      if (subject.measurements.size() < n_before) {
        std::fprintf(stderr, "note: %s: %zu measurement(s) after s=%g not used\n", r.id.c_str(),
                     n_before - subject.measurements.size(), s);
      }
      PredictionResult res;
      bodies.push_back(prediction_body(predictor, subject, s, c.horizons, &res));
      const auto h = static_cast<Eigen::Index>(c.horizons.size());
      res.pi = res.pi.leftCols(h).eval();
      res.horizons.resize(c.horizons.size());
      results.push_back(std::move(res));
    }
  }
  write_prediction_summary(results, (out / "predictions_summary.csv").string());
  write_prediction_draws(results, (out / "predictions_draws.csv").string());
  write_text(out / "predictions.json", bodies.dump() + "\n");
  std::fprintf(stderr, "wrote %zu predictions using %zu posterior draws\n", results.size(),
               predictor.used_rows().size());
  return 0;
}

int run_validate(const RunConfig& c) {
  const auto records = read_data(c, false);
  const Predictor predictor = make_predictor(c);
  const fs::path out = require(c.out, "--out");
  fs::create_directories(out);
  const CensoringEstimate g = censoring_km(outcomes_of(records));
  std::vector<LandmarkMetrics> metrics;
  for (double s : c.landmarks) {
    std::vector<std::string> excluded;
    const auto preds = predict_cohort(predictor, records, {s}, c.horizons, &excluded, c.threads);
    if (preds.empty()) {
      std::fprintf(stderr, "warning: nobody at risk at s=%g\n", s);
      continue;
    }
    for (std::size_t h = 0; h < c.horizons.size(); ++h) {
      LandmarkMetrics m = evaluate_landmark(preds, records, s, static_cast<int>(h), g);
      for (const auto& w : m.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      std::fprintf(stderr, "s=%g u=%g: %d at risk, %d cases, %d controls, median AUC %.4f, R2 %.4f\n", s,
                   c.horizons[h], m.at_risk, m.cases, m.controls, median_of(m.auc), median_of(m.r2));
      metrics.push_back(std::move(m));
    }
  }
  write_metric_summary(metrics, (out / "metrics.csv").string());
  write_calibration_summary(metrics, (out / "calibration.csv").string());
  return 0;
}

int run_diagnose(const RunConfig& c) {
  const FitResult fit = load_fit(require(c.fit_dir, "--fit"));
  const fs::path out = require(c.out, "--out");
  fs::create_directories(out);
  {
    std::ofstream rh(out / "rhat.csv");
    rh << "parameter,p2.5,p50,p97.5,mean,sd,rhat,ess,verdict\n";
    for (const auto& d : fit.diagnostics) {
      const bool fixed = d.summary.sd == 0.0;
      char line[512];
      std::snprintf(line, sizeof line, "%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.6g,%.6g,%s\n", d.name.c_str(),
                    d.summary.p025, d.summary.p50, d.summary.p975, d.summary.mean, d.summary.sd, d.rhat, d.ess,
                    fixed ? "fixed" : to_string(convergence_verdict(d.rhat, c.rhat_warn, c.rhat_fail)).c_str());
      rh << line;
    }
  }
  std::fprintf(stderr, "max R-hat %.4f (%s), %d divergences\n", fit.max_rhat(), to_string(fit.verdict).c_str(),
               fit.divergences);
  if (!c.long_path.empty()) {
    const auto records = read_data(c, true);
    const auto qq = marginal_residual_qq(posterior_median_state(fit.draws, fit.spec), records, fit.spec);
    std::ofstream q(out / "qq.csv");
    q << "theoretical,empirical\n";
    char line[64];
    for (const auto& p : qq) {
      std::snprintf(line, sizeof line, "%.10g,%.10g\n", p.theoretical, p.empirical);
      q << line;
    }
  }
  return 0;
}

HttpServer* g_server = nullptr;

int run_serve(const RunConfig& c) {
  PredictionService service(c);
  if (!c.fit_dir.empty()) service.load(c.fit_dir);
  HttpServer server(service, c.cors_origin);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  const bool ok = server.listen(c.host, c.port, [&](int port) {
    std::fprintf(stderr, "serving on http://%s:%d (model %s)\n", c.host.c_str(), port,
                 service.loaded() ? "loaded" : "not loaded");
  });
  g_server = nullptr;
  if (!ok) {
    std::fprintf(stderr, "cannot bind %s:%d\n", c.host.c_str(), c.port);
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust joint models of longitudinal markers and event times"};
  app.require_subcommand(1);

  Overrides sim_o, fit_o, pred_o, val_o, diag_o, serve_o;

  auto* sim = app.add_subcommand("simulate", "simulate a cohort");
  add_common(sim, sim_o);
  sim_o.add(sim, "--model", "model", "generating regime {nn,nt,tn,tt}");
  sim_o.add(sim, "--learning-fraction", "learning_fraction", "learning share for --split");
  SimulateArgs sa;
  sim->add_option("--n", sa.n, "number of subjects")->check(CLI::PositiveNumber);
  sim->add_option("--df", sa.df, "degrees of freedom for t parts");
  sim->add_option("--schedule", sa.schedule, "visit schedule: grid or poisson");
  sim->add_option("--visit-rate", sa.visit_rate, "Poisson visits per year");
  sim->add_flag("--split", sa.split, "also write learning/validation halves");
  sim->add_option("--outliers", sa.outliers, "fraction of measurements shifted as outliers");
  sim->add_option("--outlier-shift", sa.outlier_shift, "size of the outlier shift (random sign)");

  auto* fit = app.add_subcommand("fit", "fit a joint model");
  add_common(fit, fit_o);
  add_data(fit, fit_o);
  fit_o.add(fit, "--model", "model", "regime {nn,nt,tn,tt}");
  fit_o.add(fit, "--chains", "chains", "number of chains");
  fit_o.add(fit, "--iter", "iter", "iterations per chain (warmup included)");
  fit_o.add(fit, "--warmup", "warmup", "warmup iterations (default half)");
  fit_o.add(fit, "--survival-covariates", "survival_covariates", "comma-separated covariate names");
  fit_o.add(fit, "--allow-unconverged", "allow_unconverged", "true to exit 0 despite R-hat failure");

  auto* pred = app.add_subcommand("predict", "dynamic predictions for subjects");
  add_common(pred, pred_o);
  add_data(pred, pred_o);
  add_prediction(pred, pred_o);

  auto* val = app.add_subcommand("validate", "prediction accuracy on a validation cohort");
  add_common(val, val_o);
  add_data(val, val_o);
  add_prediction(val, val_o);

  auto* diag = app.add_subcommand("diagnose", "R-hat table and residual QQ data");
  add_common(diag, diag_o);
  add_data(diag, diag_o);
  diag_o.add(diag, "--fit", "fit", "fit directory");

  auto* serve = app.add_subcommand("serve", "run the prediction service");
  add_common(serve, serve_o);
  serve_o.add(serve, "--fit", "fit", "fit directory");
  serve_o.add(serve, "--port", "port", "TCP port");
  serve_o.add(serve, "--host", "host", "bind address");
  serve_o.add(serve, "--cors-origin", "cors_origin", "allowed CORS origin");
  serve_o.add(serve, "--thin", "thin", "use every k-th posterior draw");
  serve_o.add(serve, "--max-draws", "service_max_draws", "per-request draw cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*sim) return run_simulate(sim_o.resolve(), sa);
    if (*fit) return run_fit(fit_o.resolve());
    if (*pred) return run_predict(pred_o.resolve());
    if (*val) return run_validate(val_o.resolve());
    if (*diag) return run_diagnose(diag_o.resolve());
    if (*serve) return run_serve(serve_o.resolve());
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const SamplerError& e) {
    std::fprintf(stderr, "sampler failure: %s\n", e.what());
    return kExitConvergence;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
