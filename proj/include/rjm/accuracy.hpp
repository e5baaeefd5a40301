#pragma once

#include <string>
#include <vector>

#include "rjm/diagnostics.hpp"
#include "rjm/draws.hpp"
#include "rjm/dynpred.hpp"
#include "rjm/types.hpp"

namespace rjm {

struct Outcome {
  double time = 0.0;
  int event = 0;
};

// Kaplan-Meier estimate of the censoring survival function (censorings are
// the events). Evaluation uses the left limit G(t-).
class CensoringEstimate {
 public:
  CensoringEstimate() = default;
  CensoringEstimate(std::vector<double> times, std::vector<double> survival);

  double at(double t) const;           // G(t), right-continuous
  double left_limit(double t) const;   // G(t-)
  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return survival_; }

 private:
  std::vector<double> times_;     // distinct censoring times, ascending
  std::vector<double> survival_;  // G just after each time
};

CensoringEstimate censoring_km(const std::vector<Outcome>& outcomes);

// Weights and metrics use subjects at risk at s (time > s); pi[k] is the
// prediction for outcomes[k]. Weights are conditional on being at risk:
// cases weigh G(s)/G(T-), controls G(s)/G(s+u).

// Throws UndefinedMetricError with no weighted cases or controls.
double auc_ipcw(const std::vector<double>& pi, const std::vector<Outcome>& outcomes, double s, double u,
                const CensoringEstimate& g);

double brier_ipcw(const std::vector<double>& pi, const std::vector<Outcome>& outcomes, double s, double u,
                  const CensoringEstimate& g);

// IPCW marginal probability of an event in (s, s + u] among those at risk.
double reference_risk(const std::vector<Outcome>& outcomes, double s, double u, const CensoringEstimate& g);

// 1 - BS(pi) / BS(pi0) with pi0 = reference_risk; may be negative.
double r2_criterion(const std::vector<double>& pi, const std::vector<Outcome>& outcomes, double s, double u,
                    const CensoringEstimate& g);

struct CalibrationTable {
  std::vector<double> predicted;  // mean prediction per decile
  std::vector<double> observed;   // 1 - KM survival at s + u per decile
  double slope = 0.0;             // NaN when the predictions do not vary
  bool ties = false;              // fewer than 10 distinct predictions
};

// Subjects at risk at s are split into ten rank groups by prediction.
CalibrationTable calibration_deciles(const std::vector<double>& pi, const std::vector<Outcome>& outcomes, double s,
                                     double u);

// Ordinary least-squares slope of y on x.
double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y);

struct QQPoint {
  double theoretical = 0.0;
  double empirical = 0.0;
};

// Standardised marginal residuals (Y - x'alpha) / sqrt(d' Sigma d + sigma^2)
// at the given estimate, sorted and paired with Normal quantiles
// at (i - 0.5) / n.
std::vector<QQPoint> marginal_residual_qq(const ParameterState& estimate, const std::vector<SubjectRecord>& records,
                                          const ModelSpec& spec);

// Posterior medians of the globals; Sigma is rebuilt from the median of
// each Sigma[a,b] entry.
ParameterState posterior_median_state(const PosteriorDraws& draws, const ModelSpec& spec);

// Per-draw metrics for one landmark and horizon.
struct LandmarkMetrics {
  double landmark = 0.0, horizon = 0.0;
  int at_risk = 0, cases = 0, controls = 0;
  std::vector<double> auc, brier, r2, slope;
  std::vector<CalibrationTable> calibration;  // per draw
  std::vector<std::string> warnings;
};

// `predictions` hold one PredictionResult per subject at risk at `landmark`
// (same draw rows for all); `records` supply the outcomes by id.
LandmarkMetrics evaluate_landmark(const std::vector<PredictionResult>& predictions,
                                  const std::vector<SubjectRecord>& records, double landmark, int horizon_index,
                                  const CensoringEstimate& g);

std::vector<Outcome> outcomes_of(const std::vector<SubjectRecord>& records);

// CSV with landmark,horizon,metric,p2.5,p50,p97.5 rows for auc, brier, r2,
// calibration_slope.
void write_metric_summary(const std::vector<LandmarkMetrics>& metrics, const std::string& path);

// CSV with landmark,horizon,decile and p2.5/p50/p97.5 over draws of the
// predicted and observed risks.
void write_calibration_summary(const std::vector<LandmarkMetrics>& metrics, const std::string& path);

// Median over draws, NaN when empty.
double median_of(const std::vector<double>& v);

}  // namespace rjm
