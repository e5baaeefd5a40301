#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rjm/diagnostics.hpp"
#include "rjm/draws.hpp"
#include "rjm/hazard.hpp"
#include "rjm/types.hpp"

namespace rjm {

struct NewcomerData {
  std::string id;
  std::map<std::string, double> baseline;
  std::vector<Measurement> measurements;

  static NewcomerData from_record(const SubjectRecord& record);
};

struct PredictionOptions {
  int thin = 8;           // use every thin-th retained draw
  int max_draws = 0;      // cap after thinning; 0 = no cap
  int latent_warmup = 200;
  int max_depth = 8;
  double target_accept = 0.8;
  std::uint64_t seed = 20240101;

  void validate() const;
};

// Per-(subject, landmark) Monte Carlo output: one latent draw and one
// pi(s, u) per used posterior draw.
struct PredictionResult {
  std::string id;
  double landmark = 0.0;
  std::vector<double> horizons;
  std::vector<int> draw_rows;            // rows of PosteriorDraws used
  Eigen::MatrixXd pi;                    // used draws x horizons
  std::vector<Eigen::VectorXd> effects;  // B_k per used draw
  std::vector<double> effect_mixing;     // V_k per used draw (t effects only)
  std::vector<std::string> warnings;
  bool prior_only = false;  // no data at all: latents drawn from the prior
  int measurements_used = 0;

  TraceSummary summary(int horizon_index) const;
};

// Percentile bands of Y*(t) over draws; exponentiated quantiles when the
// marker is modelled on the log scale.
struct TrajectoryBands {
  std::vector<double> times, p025, p50, p975;
};

// 1 - exp(-(H(s + u) - H(s))); exactly 0 for u = 0. Throws NumericalError
// when H decreases by more than 1e-12.
double conditional_failure_probability(const HazardContext& ctx, const ParameterState& theta, double s, double u,
                                       int panels = 1);

class Predictor {
 public:
  Predictor(PosteriorDraws draws, ModelSpec spec, PredictionOptions options = {});

  // Measurements after the landmark are dropped with a warning.
  PredictionResult predict(const NewcomerData& subject, double landmark, const std::vector<double>& horizons) const;

  // Y*(t) per used draw (rows) and time (columns).
  Eigen::MatrixXd marker_trajectories(const PredictionResult& result, const NewcomerData& subject,
                                      const std::vector<double>& times) const;
  TrajectoryBands marker_bands(const PredictionResult& result, const NewcomerData& subject,
                               const std::vector<double>& times) const;

  const std::vector<int>& used_rows() const { return rows_; }
  const ModelSpec& spec() const { return spec_; }
  const PosteriorDraws& draws() const { return draws_; }
  const PredictionOptions& options() const { return options_; }

 private:
  PosteriorDraws draws_;
  ModelSpec spec_;
  PredictionOptions options_;
  QuadratureRule rule_;
  std::vector<int> rows_;
  std::vector<ParameterState> states_;
};

// Stream key for a prediction: hashes the covariates, the measurements used
// and the landmark, so identical inputs draw identical random numbers
// wherever they are evaluated.
std::uint64_t prediction_stream(const NewcomerData& subject, double landmark);

// Predictions for every subject at risk (event_time > s) at each landmark,
// using measurements up to s. Subjects no longer at risk are skipped and
// listed in `excluded` as "id@s".
std::vector<PredictionResult> predict_cohort(const Predictor& predictor, const std::vector<SubjectRecord>& records,
                                             const std::vector<double>& landmarks, const std::vector<double>& horizons,
                                             std::vector<std::string>* excluded = nullptr, int threads = 1);

// CSV exports: per draw (subject,s,u,draw,pi) and summaries
// (subject,s,u,p2.5,p50,p97.5,mean).
void write_prediction_draws(const std::vector<PredictionResult>& results, const std::string& path);
void write_prediction_summary(const std::vector<PredictionResult>& results, const std::string& path);

}  // namespace rjm
