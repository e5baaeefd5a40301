#include "rjm/service.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rjm/error.hpp"

namespace rjm {
namespace {

using nlohmann::json;

constexpr int kCurvePoints = 21;

HttpResponse reply(int status, const json& body) { return {status, body.dump(), "application/json"}; }

HttpResponse error_reply(int status, const std::string& message, const json& errors = json::array()) {
  return reply(status, {{"schema_version", kSchemaVersion}, {"error", message}, {"errors", errors}});
}

void field_error(json& errors, const std::string& field, const std::string& message) {
  errors.push_back({{"field", field}, {"message", message}});
}

json band(const std::vector<double>& lo, const std::vector<double>& mid, const std::vector<double>& hi) {
  return {{"p2.5", lo}, {"p50", mid}, {"p97.5", hi}};
}

std::vector<double> grid(double hi) {
  if (!(hi > 0.0)) return {0.0};
  std::vector<double> g(kCurvePoints);
  for (int i = 0; i < kCurvePoints; ++i) g[i] = hi * i / (kCurvePoints - 1);
  return g;
}

struct ParsedRequest {
  NewcomerData subject;
  double landmark = 0.0;
  std::vector<double> horizons;
  std::optional<Measurement> hypothetical;
};

bool finite_number(const json& j) { return j.is_number() && std::isfinite(j.get<double>()); }

// Returns 400 errors in `errors`; ordering problems relative to the landmark
// go to `late` (422).
ParsedRequest parse_request(const json& p, const ModelSpec& spec, bool want_hypothetical, json& errors, json& late) {
  ParsedRequest r;
  if (!p.is_object()) {
    field_error(errors, "", "request body must be a JSON object");
    return r;
  }
  static const std::set<std::string> known{"id", "covariates", "measurements", "landmark", "horizons",
                                           "hypothetical"};
  for (const auto& [key, value] : p.items()) {
    if (!known.count(key) || (key == "hypothetical" && !want_hypothetical)) field_error(errors, key, "unknown field");
  }
  if (p.contains("id")) {
    if (p["id"].is_string()) {
      r.subject.id = p["id"].get<std::string>();
    } else {
      field_error(errors, "id", "must be a string");
    }
  }
  if (!p.contains("covariates") || !p["covariates"].is_object()) {
    field_error(errors, "covariates", "required object of numbers");
  } else {
    for (const auto& [name, value] : p["covariates"].items()) {
      if (!finite_number(value)) {
        field_error(errors, "covariates." + name, "must be a finite number");
      } else {
        r.subject.baseline[name] = value.get<double>();
      }
    }
    for (const auto& name : required_covariates(spec)) {
      if (!p["covariates"].contains(name)) field_error(errors, "covariates." + name, "required by the model");
    }
  }
  if (!p.contains("landmark") || !finite_number(p["landmark"]) || p["landmark"].get<double>() < 0.0) {
    field_error(errors, "landmark", "required finite number >= 0");
  } else {
    r.landmark = p["landmark"].get<double>();
  }
  if (!p.contains("horizons") || !p["horizons"].is_array() || p["horizons"].empty()) {
    field_error(errors, "horizons", "required non-empty array of numbers >= 0");
  } else {
    for (std::size_t i = 0; i < p["horizons"].size(); ++i) {
      const json& u = p["horizons"][i];
      if (!finite_number(u) || u.get<double>() < 0.0) {
        field_error(errors, "horizons[" + std::to_string(i) + "]", "must be a finite number >= 0");
      } else {
        r.horizons.push_back(u.get<double>());
      }
    }
  }
  auto parse_point = [&](const json& m, const std::string& field, Measurement& out) {
    if (!m.is_object()) {
      field_error(errors, field, "must be an object with time and value");
      return false;
    }
    bool ok = true;
    if (!m.contains("time") || !finite_number(m["time"]) || m["time"].get<double>() < 0.0) {
      field_error(errors, field + ".time", "required finite number >= 0");
      ok = false;
    }
    if (!m.contains("value") || !finite_number(m["value"])) {
      field_error(errors, field + ".value", "required finite number");
      ok = false;
    }
    if (ok) out = {m["time"].get<double>(), m["value"].get<double>()};
    return ok;
  };
  if (!p.contains("measurements") || !p["measurements"].is_array()) {
    field_error(errors, "measurements", "required array (may be empty)");
  } else {
    for (std::size_t i = 0; i < p["measurements"].size(); ++i) {
      const std::string field = "measurements[" + std::to_string(i) + "]";
      Measurement m;
      if (!parse_point(p["measurements"][i], field, m)) continue;
      if (!r.subject.measurements.empty() && m.time <= r.subject.measurements.back().time) {
        field_error(errors, field + ".time", "times must be strictly increasing");
        continue;
      }
      r.subject.measurements.push_back(m);
    }
  }
  if (want_hypothetical) {
    if (!p.contains("hypothetical")) {
      field_error(errors, "hypothetical", "required object with time and value");
    } else {
      Measurement h;
      if (parse_point(p["hypothetical"], "hypothetical", h)) r.hypothetical = h;
    }
  }
  if (!errors.empty()) return r;
  for (std::size_t i = 0; i < r.subject.measurements.size(); ++i) {
    if (r.subject.measurements[i].time > r.landmark) {
      field_error(late, "measurements[" + std::to_string(i) + "].time", "after the landmark");
    }
  }
  if (r.hypothetical) {
    if (!r.subject.measurements.empty() && r.hypothetical->time <= r.subject.measurements.back().time) {
      field_error(late, "hypothetical.time", "not after the last measurement");
    }
    if (r.hypothetical->time > r.landmark) field_error(late, "hypothetical.time", "after the landmark");
  }
  return r;
}

}  // namespace

std::vector<std::string> required_covariates(const ModelSpec& spec) {
  std::set<std::string> names(spec.survival_covariates.begin(), spec.survival_covariates.end());
  auto add = [&](const std::string& term) {
    if (term == "1" || term == "time") return;
    names.insert(term.rfind("time:", 0) == 0 ? term.substr(5) : term);
  };
  for (const auto& t : spec.fixed_terms) add(t);
  for (const auto& t : spec.random_terms) add(t);
  return {names.begin(), names.end()};
}

json prediction_body(const Predictor& predictor, const NewcomerData& subject, double landmark,
                     const std::vector<double>& horizons, PredictionResult* result) {
  const double max_u = horizons.empty() ? 0.0 : *std::max_element(horizons.begin(), horizons.end());
  const std::vector<double> curve_u = grid(max_u);
  std::vector<double> all = horizons;
  all.insert(all.end(), curve_u.begin(), curve_u.end());
  const PredictionResult res = predictor.predict(subject, landmark, all);

  json summaries = json::array();
  for (std::size_t h = 0; h < horizons.size(); ++h) {
    const TraceSummary t = res.summary(static_cast<int>(h));
    summaries.push_back(
        {{"u", horizons[h]}, {"p2.5", t.p025}, {"p50", t.p50}, {"p97.5", t.p975}, {"mean", t.mean}});
  }
  std::vector<double> lo, mid, hi;
  for (std::size_t c = 0; c < curve_u.size(); ++c) {
    const TraceSummary t = res.summary(static_cast<int>(horizons.size() + c));
    lo.push_back(t.p025);
    mid.push_back(t.p50);
    hi.push_back(t.p975);
  }
  json curve = band(lo, mid, hi);
  curve["u"] = curve_u;
  const TrajectoryBands tb = predictor.marker_bands(res, subject, grid(landmark + max_u));
  json trajectory = band(tb.p025, tb.p50, tb.p975);
  trajectory["times"] = tb.times;
  json observed = json::array();
  for (const auto& m : subject.measurements) {
    if (m.time <= landmark) observed.push_back({{"time", m.time}, {"value", m.value}});
  }
  json body{{"schema_version", kSchemaVersion},
            {"landmark", landmark},
            {"draws", static_cast<int>(res.draw_rows.size())},
            {"measurements_used", res.measurements_used},
            {"prior_only", res.prior_only},
            {"predictions", summaries},
            {"curve", curve},
            {"trajectory", trajectory},
            {"observed", observed},
            {"warnings", res.warnings}};
  if (!subject.id.empty()) body["id"] = subject.id;
  if (result) *result = res;
  return body;
}

PredictionService::PredictionService(RunConfig config) : config_(std::move(config)) {}

void PredictionService::load(const std::string& fit_dir) { load(load_fit(fit_dir)); }

void PredictionService::load(FitResult fit) {
  auto shared = std::make_shared<const FitResult>(std::move(fit));
  PredictionOptions opts = config_.prediction;
  opts.max_draws = opts.max_draws > 0 ? std::min(opts.max_draws, config_.service_max_draws) : config_.service_max_draws;
  default_predictor_ = std::make_shared<const Predictor>(shared->draws, shared->spec, opts);
  fit_ = std::move(shared);
  std::lock_guard<std::mutex> lock(cache_mutex_);
  cache_.clear();
}

std::string PredictionService::model_digest() const { return fit_ ? digest(fit_->draws) : ""; }

std::shared_ptr<const Predictor> PredictionService::predictor_for(const std::map<std::string, std::string>& query,
                                                                  json& errors) const {
  const auto it = query.find("draws");
  if (it == query.end()) return default_predictor_;
  int n = 0;
  try {
    std::size_t used = 0;
    n = std::stoi(it->second, &used);
    if (used != it->second.size()) n = 0;
  } catch (const std::exception&) {
    n = 0;
  }
  if (n < 1 || n > config_.service_max_draws) {
    field_error(errors, "draws", "query parameter must be an integer in [1, " +
                                     std::to_string(config_.service_max_draws) + "]");
    return nullptr;
  }
  std::lock_guard<std::mutex> lock(cache_mutex_);
  auto& slot = cache_[n];
  if (!slot) {
    PredictionOptions opts = config_.prediction;
    opts.max_draws = n;
    slot = std::make_shared<const Predictor>(fit_->draws, fit_->spec, opts);
  }
  return slot;
}

HttpResponse PredictionService::handle(const std::string& method, const std::string& path, const std::string& body,
                                       const std::map<std::string, std::string>& query) const {
  try {
    if (path == "/healthz") {
      if (method != "GET") return error_reply(405, "use GET");
      return reply(200, {{"schema_version", kSchemaVersion}, {"status", "ok"}, {"model_loaded", loaded()}});
    }
    if (path != "/predict" && path != "/whatif" && path != "/model") return error_reply(404, "no such endpoint");
    const bool post = path != "/model";
    if (method != (post ? "POST" : "GET")) return error_reply(405, post ? "use POST" : "use GET");
    if (!loaded()) return error_reply(503, "model artifact not loaded");
    if (path == "/model") return model();
    json payload;
    try {
      payload = json::parse(body);
    } catch (const json::exception& e) {
      return error_reply(400, std::string("malformed JSON: ") + e.what());
    }
    return path == "/predict" ? predict(payload, query) : whatif(payload, query);
  } catch (const ValidationError& e) {
    return error_reply(400, e.what());
  } catch (const DomainError& e) {
    return error_reply(400, e.what());
  } catch (const std::exception& e) {
    return error_reply(500, e.what());
  }
}

HttpResponse PredictionService::predict(const json& payload, const std::map<std::string, std::string>& query) const {
  json errors = json::array(), late = json::array();
  const ParsedRequest r = parse_request(payload, fit_->spec, false, errors, late);
  const auto predictor = predictor_for(query, errors);
  if (!errors.empty()) return error_reply(400, "invalid request", errors);
  if (!late.empty()) return error_reply(422, "measurements after the landmark", late);
  return reply(200, prediction_body(*predictor, r.subject, r.landmark, r.horizons));
}

HttpResponse PredictionService::whatif(const json& payload, const std::map<std::string, std::string>& query) const {
  json errors = json::array(), late = json::array();
  const ParsedRequest r = parse_request(payload, fit_->spec, true, errors, late);
  const auto predictor = predictor_for(query, errors);
  if (!errors.empty()) return error_reply(400, "invalid request", errors);
  if (!late.empty()) return error_reply(422, "hypothetical measurement out of order", late);
  NewcomerData with = r.subject;
  with.measurements.push_back(*r.hypothetical);
  return reply(200, {{"schema_version", kSchemaVersion},
                     {"landmark", r.landmark},
                     {"hypothetical", {{"time", r.hypothetical->time}, {"value", r.hypothetical->value}}},
                     {"without", prediction_body(*predictor, r.subject, r.landmark, r.horizons)},
                     {"with", prediction_body(*predictor, with, r.landmark, r.horizons)}});
}

HttpResponse PredictionService::model() const {
  json params = json::array();
  for (const auto& d : fit_->diagnostics) {
    params.push_back({{"name", d.name},
                      {"p2.5", d.summary.p025},
                      {"p50", d.summary.p50},
                      {"p97.5", d.summary.p975},
                      {"mean", d.summary.mean},
                      {"sd", d.summary.sd},
                      {"rhat", std::isfinite(d.rhat) ? json(d.rhat) : json(nullptr)},
                      {"ess", std::isfinite(d.ess) ? json(d.ess) : json(nullptr)}});
  }
  const ModelSpec& spec = fit_->spec;
  return reply(200, {{"schema_version", kSchemaVersion},
                     {"regime", to_string(spec.regime)},
                     {"fixed_terms", spec.fixed_terms},
                     {"random_terms", spec.random_terms},
                     {"survival_covariates", spec.survival_covariates},
                     {"required_covariates", required_covariates(spec)},
                     {"log_scale_marker", spec.log_scale_marker},
                     {"draws", fit_->draws.rows()},
                     {"prediction_draws", static_cast<int>(default_predictor_->used_rows().size())},
                     {"max_prediction_draws", config_.service_max_draws},
                     {"chains", fit_->draws.num_chains()},
                     {"divergences", fit_->divergences},
                     {"verdict", to_string(fit_->verdict)},
                     {"max_rhat", fit_->max_rhat()},
                     {"draws_digest", digest(fit_->draws)},
                     {"parameters", params}});
}

}  // namespace rjm
