#include "rjm/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "rjm/error.hpp"

namespace rjm {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || !std::isfinite(x)) {
    throw ValidationError("'" + key + "' expects a finite number, got '" + v + "'");
  }
  return x;
}

long long to_int(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  if (x != std::floor(x)) throw ValidationError("'" + key + "' expects an integer, got '" + v + "'");
  return static_cast<long long>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError("'" + key + "' expects true or false, got '" + v + "'");
}

using Setter = std::function<void(const std::string&, const std::string&, RunConfig&)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"long", [](auto&, auto& v, auto& c) { c.long_path = v; }},
      {"surv", [](auto&, auto& v, auto& c) { c.surv_path = v; }},
      {"out", [](auto&, auto& v, auto& c) { c.out = v; }},
      {"fit", [](auto&, auto& v, auto& c) { c.fit_dir = v; }},
      {"model", [](auto&, auto& v, auto& c) { c.model.regime = parse_regime(v); }},
      {"fixed_terms", [](auto&, auto& v, auto& c) { c.model.fixed_terms = parse_name_list(v); }},
      {"random_terms", [](auto&, auto& v, auto& c) { c.model.random_terms = parse_name_list(v); }},
      {"survival_covariates", [](auto&, auto& v, auto& c) { c.model.survival_covariates = parse_name_list(v); }},
      {"link_value", [](auto& k, auto& v, auto& c) { c.model.link.current_value = to_bool(k, v); }},
      {"link_slope", [](auto& k, auto& v, auto& c) { c.model.link.slope = to_bool(k, v); }},
      {"log_scale_marker", [](auto& k, auto& v, auto& c) { c.model.log_scale_marker = to_bool(k, v); }},
      {"quadrature_panels", [](auto& k, auto& v, auto& c) { c.model.quadrature_panels = int(to_int(k, v)); }},
      {"prior_intercept_scale", [](auto& k, auto& v, auto& c) { c.model.priors.intercept_scale = to_double(k, v); }},
      {"prior_coef_scale", [](auto& k, auto& v, auto& c) { c.model.priors.coef_scale = to_double(k, v); }},
      {"prior_scale_scale", [](auto& k, auto& v, auto& c) { c.model.priors.scale_scale = to_double(k, v); }},
      {"prior_lkj_shape", [](auto& k, auto& v, auto& c) { c.model.priors.lkj_shape = to_double(k, v); }},
      {"prior_df_lower", [](auto& k, auto& v, auto& c) { c.model.priors.df_lower = to_double(k, v); }},
      {"prior_df_upper", [](auto& k, auto& v, auto& c) { c.model.priors.df_upper = to_double(k, v); }},
      {"prior_hazard_scale", [](auto& k, auto& v, auto& c) { c.model.priors.hazard_scale = to_double(k, v); }},
      {"chains", [](auto& k, auto& v, auto& c) { c.sampler.chains = int(to_int(k, v)); }},
      {"iter", [](auto& k, auto& v, auto& c) { c.sampler.iterations = int(to_int(k, v)); }},
      {"warmup", [](auto& k, auto& v, auto& c) { c.sampler.warmup = int(to_int(k, v)); }},
      {"seed",
       [](auto& k, auto& v, auto& c) {
         const long long s = to_int(k, v);
         if (s < 0) throw ValidationError("'seed' must be >= 0");
         c.sampler.seed = static_cast<std::uint64_t>(s);
       }},
      {"target_accept", [](auto& k, auto& v, auto& c) { c.sampler.target_accept = to_double(k, v); }},
      {"max_depth", [](auto& k, auto& v, auto& c) { c.sampler.max_depth = int(to_int(k, v)); }},
      {"max_divergent_fraction",
       [](auto& k, auto& v, auto& c) { c.sampler.max_divergent_fraction = to_double(k, v); }},
      {"sampler_threads", [](auto& k, auto& v, auto& c) { c.sampler.threads = int(to_int(k, v)); }},
      {"rhat_warn", [](auto& k, auto& v, auto& c) { c.rhat_warn = to_double(k, v); }},
      {"rhat_fail", [](auto& k, auto& v, auto& c) { c.rhat_fail = to_double(k, v); }},
      {"allow_unconverged", [](auto& k, auto& v, auto& c) { c.allow_unconverged = to_bool(k, v); }},
      {"keep_latents", [](auto& k, auto& v, auto& c) { c.keep_latents = to_bool(k, v); }},
      {"thin", [](auto& k, auto& v, auto& c) { c.prediction.thin = int(to_int(k, v)); }},
      {"max_draws", [](auto& k, auto& v, auto& c) { c.prediction.max_draws = int(to_int(k, v)); }},
      {"latent_warmup", [](auto& k, auto& v, auto& c) { c.prediction.latent_warmup = int(to_int(k, v)); }},
      {"latent_max_depth", [](auto& k, auto& v, auto& c) { c.prediction.max_depth = int(to_int(k, v)); }},
      {"prediction_seed",
       [](auto& k, auto& v, auto& c) {
         const long long s = to_int(k, v);
         if (s < 0) throw ValidationError("'prediction_seed' must be >= 0");
         c.prediction.seed = static_cast<std::uint64_t>(s);
       }},
      {"landmarks", [](auto&, auto& v, auto& c) { c.landmarks = parse_number_list(v); }},
      {"horizon", [](auto&, auto& v, auto& c) { c.horizons = parse_number_list(v); }},
      {"learning_fraction", [](auto& k, auto& v, auto& c) { c.learning_fraction = to_double(k, v); }},
      {"threads", [](auto& k, auto& v, auto& c) { c.threads = int(to_int(k, v)); }},
      {"host", [](auto&, auto& v, auto& c) { c.host = v; }},
      {"port", [](auto& k, auto& v, auto& c) { c.port = int(to_int(k, v)); }},
      {"cors_origin", [](auto&, auto& v, auto& c) { c.cors_origin = v; }},
      {"service_max_draws", [](auto& k, auto& v, auto& c) { c.service_max_draws = int(to_int(k, v)); }},
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  sampler.validate();
  prediction.validate();
  if (!(rhat_warn > 1.0) || !(rhat_fail >= rhat_warn)) throw ValidationError("need 1 < rhat_warn <= rhat_fail");
  if (landmarks.empty()) throw ValidationError("at least one landmark is required");
  for (double s : landmarks) {
    if (s < 0.0) throw ValidationError("landmarks must be >= 0");
  }
  if (horizons.empty()) throw ValidationError("at least one horizon is required");
  for (double u : horizons) {
    if (!(u >= 0.0)) throw ValidationError("horizons must be >= 0");
  }
  if (!(learning_fraction > 0.0 && learning_fraction < 1.0)) throw ValidationError("learning_fraction must be in (0, 1)");
  if (threads < 1) throw ValidationError("threads must be >= 1");
  if (port < 0 || port > 65535) throw ValidationError("port must be in [0, 65535]");
  if (service_max_draws < 1) throw ValidationError("service_max_draws must be >= 1");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, setter] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply_config_value(const std::string& key, const std::string& value, RunConfig& config) {
  for (const auto& [name, setter] : setters()) {
    if (name == key) {
      setter(key, value, config);
      return;
    }
  }
  throw ValidationError("unknown config key '" + key + "'");
}

void apply_config_text(const std::string& text, RunConfig& config, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(number) + ": ";
    if (eq == std::string::npos) throw ValidationError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ValidationError(where + "key '" + key + "' repeated");
    try {
      apply_config_value(key, value, config);
    } catch (const std::exception& e) {
      throw ValidationError(where + e.what());
    }
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig config;
  apply_config_text(buf.str(), config, path);
  return config;
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : parse_name_list(text)) out.push_back(to_double("list", item));
  return out;
}

std::vector<std::string> parse_name_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ValidationError("empty item in list '" + text + "'");
    out.push_back(item);
  }
  return out;
}

}  // namespace rjm
