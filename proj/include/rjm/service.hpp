#pragma once

#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "rjm/config.hpp"
#include "rjm/dynpred.hpp"
#include "rjm/fit.hpp"

namespace rjm {

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

// Body shared by POST /predict and the CLI predict export: percentile
// summaries per horizon, a curve over [0, max u] and marker bands over
// [0, s + max u]. `result` receives the draws (requested horizons first,
// then the curve grid).
nlohmann::json prediction_body(const Predictor& predictor, const NewcomerData& subject, double landmark,
                               const std::vector<double>& horizons, PredictionResult* result = nullptr);

// Covariate names the model reads from a subject's baseline.
std::vector<std::string> required_covariates(const ModelSpec& spec);

// Stateless JSON request handling over one loaded fit. Thread-safe.
class PredictionService {
 public:
  explicit PredictionService(RunConfig config = {});

  void load(const std::string& fit_dir);
  void load(FitResult fit);
  bool loaded() const { return fit_ != nullptr; }
  std::string model_digest() const;
  const RunConfig& config() const { return config_; }

  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body,
                      const std::map<std::string, std::string>& query = {}) const;

 private:
  HttpResponse predict(const nlohmann::json& payload, const std::map<std::string, std::string>& query) const;
  HttpResponse whatif(const nlohmann::json& payload, const std::map<std::string, std::string>& query) const;
  HttpResponse model() const;
  std::shared_ptr<const Predictor> predictor_for(const std::map<std::string, std::string>& query,
                                                 nlohmann::json& errors) const;

  RunConfig config_;
  std::shared_ptr<const FitResult> fit_;
  std::shared_ptr<const Predictor> default_predictor_;
  mutable std::mutex cache_mutex_;
  mutable std::map<int, std::shared_ptr<const Predictor>> cache_;
};

}  // namespace rjm
