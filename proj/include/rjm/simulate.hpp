#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rjm/types.hpp"

namespace rjm {

struct CovariateSpec {
  std::string name;
  enum class Kind { Normal, Binary } kind = Kind::Normal;
  double mean = 0.0;  // Normal mean, or Binary success probability
  double sd = 1.0;
};

struct SimulationSpec {
  int n = 500;
  ModelSpec model;        // regime, design terms, survival covariates, links
  ParameterState truth;   // global parameters; latents are drawn
  std::vector<CovariateSpec> covariates;
  enum class Schedule { Grid, Poisson } schedule = Schedule::Grid;
  double visit_interval = 1.0;  // grid spacing (years)
  double visit_rate = 1.0;      // Poisson visits per year
  double first_visit = 0.0;
  double admin_censoring = 12.0;
  double censoring_hazard = 0.1;  // independent exponential censoring, per year

  void validate() const;

  // A t-t cohort on an annual grid with a single binary survival covariate.
  static SimulationSpec defaults(Regime regime = Regime::TT, double df = 4.0);
};

struct SimulatedCohort {
  std::vector<SubjectRecord> records;
  ParameterState truth;  // globals plus the drawn latents
  std::vector<double> true_event_times;  // uncensored, +inf beyond the horizon
  int administratively_censored = 0;     // no event before the horizon
};

// Draws V_i, B_i, W_ij per regime, event times by bisection on
// H(T) = -log U, then censors and truncates the visit schedule.
SimulatedCohort simulate_cohort(const SimulationSpec& spec, std::uint64_t seed);

// Conditional event probability P(T in (s, s+u] | T > s) under the true
// parameters and latents of subject i.
double true_conditional_risk(const SimulatedCohort& cohort, const SimulationSpec& spec, int i, double s,
                             double u);

// Adds `shift` (random sign) to a `fraction` of measurements, chosen per
// measurement with a seeded stream; returns the number altered.
int inject_outliers(std::vector<SubjectRecord>& records, double fraction, double shift, std::uint64_t seed);

}  // namespace rjm
