#pragma once

#include <string>
#include <vector>

#include "rjm/dynpred.hpp"
#include "rjm/nuts.hpp"
#include "rjm/types.hpp"

namespace rjm {

// Settings shared by the CLI and the service. Files use one `key = value`
// per line; `#` starts a comment; lists are comma-separated. Unknown or
// repeated keys are errors. See README for the key list.
struct RunConfig {
  std::string long_path, surv_path, out, fit_dir;
  ModelSpec model;
  SamplerConfig sampler;
  PredictionOptions prediction;
  double rhat_warn = 1.05;
  double rhat_fail = 1.1;
  bool allow_unconverged = false;
  bool keep_latents = false;
  std::vector<double> landmarks{1, 2, 3, 4, 5, 6};
  std::vector<double> horizons{5};
  double learning_fraction = 0.5;
  int threads = 1;
  // service
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string cors_origin = "*";
  int service_max_draws = 500;

  void validate() const;
};

// Keys accepted in config files, in documentation order.
const std::vector<std::string>& config_keys();

// Applies `key = value` lines to `config`; `source` labels error messages.
void apply_config_text(const std::string& text, RunConfig& config, const std::string& source = "config");
RunConfig load_config(const std::string& path);

// Applies one setting; throws ValidationError for unknown keys or bad values.
void apply_config_value(const std::string& key, const std::string& value, RunConfig& config);

std::vector<double> parse_number_list(const std::string& text);
std::vector<std::string> parse_name_list(const std::string& text);

}  // namespace rjm
