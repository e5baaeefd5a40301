#include "rjm/simulate.hpp"

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <cmath>
#include <limits>

#include "rjm/design.hpp"
#include "rjm/error.hpp"
#include "rjm/hazard.hpp"
#include "rjm/random.hpp"

namespace rjm {
namespace {

double inverse_gamma(Rng& rng, double shape, double rate) {
  boost::random::gamma_distribution<double> g(shape, 1.0);
  return rate / g(rng);
}

HazardContext context_for(const SubjectRecord& rec, const ModelSpec& model, const ParameterState& truth,
                          const Eigen::VectorXd& b) {
  const SubjectDesign d = build_subject_design(rec, model, true);
  return HazardContext::from_design(d, truth.alpha, b);
}

}  // namespace

void SimulationSpec::validate() const {
  if (n < 1) throw ValidationError("simulation: n must be positive");
  model.validate();
  const int p = model.num_fixed(), q = model.num_random(), r = model.num_covariates();
  if (truth.alpha.size() != p || truth.scales.size() != q || truth.corr_cholesky.rows() != q ||
      truth.omega.size() != r) {
    throw ValidationError("simulation: true parameter dimensions do not match the model");
  }
  if (!(truth.scales.array() > 0.0).all() || !(truth.sigma > 0.0)) {
    throw ValidationError("simulation: scales must be positive");
  }
  if (has_effect_mixing(model.regime) && !(truth.phi > 2.0 && truth.phi < 100.0)) {
    throw ValidationError("simulation: phi must lie in (2, 100)");
  }
  if (has_error_mixing(model.regime) && !(truth.delta > 2.0 && truth.delta < 100.0)) {
    throw ValidationError("simulation: delta must lie in (2, 100)");
  }
  if (!(admin_censoring > 0.0) || censoring_hazard < 0.0) throw ValidationError("simulation: bad censoring settings");
  if (schedule == Schedule::Grid && !(visit_interval > 0.0)) throw ValidationError("simulation: visit interval must be positive");
  if (schedule == Schedule::Poisson && !(visit_rate > 0.0)) throw ValidationError("simulation: visit rate must be positive");
  if (first_visit < 0.0) throw ValidationError("simulation: first visit must be >= 0");
  for (const auto& name : model.survival_covariates) {
    bool found = false;
    for (const auto& c : covariates) found = found || c.name == name;
    if (!found) throw ValidationError("simulation: no generator for covariate '" + name + "'");
  }
}

SimulationSpec SimulationSpec::defaults(Regime regime, double df) {
  SimulationSpec s;
  s.model.regime = regime;
  s.model.survival_covariates = {"group"};
  s.covariates = {{"group", CovariateSpec::Kind::Binary, 0.4, 0.0}};
  ParameterState& t = s.truth;
  t = ParameterState::zeros(s.model);
  t.alpha << 0.0, 0.05;
  t.scales << 0.5, 0.1;
  t.corr_cholesky << 1.0, 0.0, 0.3, std::sqrt(1.0 - 0.09);
  t.sigma = 0.15;
  t.phi = df;
  t.delta = df;
  t.log_lambda = -3.0;
  t.log_nu = std::log(1.3);
  t.omega << 0.5;
  t.eta_value = 1.0;
  t.eta_slope = 2.0;
  return s;
}

SimulatedCohort simulate_cohort(const SimulationSpec& spec, std::uint64_t seed) {
  spec.validate();
  const ModelSpec& model = spec.model;
  const int q = model.num_random();
  const bool t_effects = has_effect_mixing(model.regime);
  const bool t_errors = has_error_mixing(model.regime);
  const Eigen::MatrixXd rl = spec.truth.scales.asDiagonal() * spec.truth.corr_cholesky;
  const double inf = std::numeric_limits<double>::infinity();

  SimulatedCohort out;
  out.truth = spec.truth;
  out.truth.effects.clear();
  out.truth.effect_mixing.clear();
  out.truth.error_mixing.clear();

  for (int i = 0; i < spec.n; ++i) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(i) + 1);
    SubjectRecord rec;
    rec.id = "S" + std::to_string(i + 1);
    for (const auto& c : spec.covariates) {
      if (c.kind == CovariateSpec::Kind::Binary) {
        rec.baseline[c.name] = uniform01(rng) < c.mean ? 1.0 : 0.0;
      } else {
        rec.baseline[c.name] = c.mean + c.sd * std_normal(rng);
      }
    }

    const double v = t_effects ? inverse_gamma(rng, 0.5 * spec.truth.phi, 0.5 * spec.truth.phi) : 1.0;
    Eigen::VectorXd z(q);
    for (int k = 0; k < q; ++k) z[k] = std_normal(rng);
    const Eigen::VectorXd b = std::sqrt(v) * (rl * z);

    // Event time: bisection on H(T) = -log U over (0, horizon].
    const HazardContext ctx = context_for(rec, model, spec.truth, b);
    const double target = -std::log(uniform01(rng));
    const double horizon = spec.admin_censoring;
    double event_time = inf;
    if (cumulative_hazard(horizon, ctx, spec.truth, model.quadrature_panels) >= target) {
      double lo = 0.0, hi = horizon;
      while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        if (cumulative_hazard(mid, ctx, spec.truth, model.quadrature_panels) < target) lo = mid;
        else hi = mid;
      }
      event_time = 0.5 * (lo + hi);
    } else {
      ++out.administratively_censored;
    }
    const double censor = spec.censoring_hazard > 0.0 ? -std::log(uniform01(rng)) / spec.censoring_hazard : inf;
    const double end = std::min({event_time, censor, horizon});
    rec.event_time = end;
    rec.event = event_time <= std::min(censor, horizon) ? 1 : 0;

    // Visits up to the end of follow-up.
    std::vector<double> times;
    if (spec.schedule == SimulationSpec::Schedule::Grid) {
      for (double t = spec.first_visit; t < end; t += spec.visit_interval) times.push_back(t);
    } else {
      for (double t = spec.first_visit; t < end; t += -std::log(uniform01(rng)) / spec.visit_rate) times.push_back(t);
    }
    rec.measurements.clear();
    const SubjectDesign d = build_subject_design(rec, model, true);
    std::vector<double> w_i;
    for (double t : times) {
      const double w = t_errors ? inverse_gamma(rng, 0.5 * spec.truth.delta, 0.5 * spec.truth.delta) : 1.0;
      double mean = 0.0;
      for (int k = 0; k < d.p; ++k) mean += (d.x_const[k] + t * d.x_time[k]) * spec.truth.alpha[k];
      for (int k = 0; k < d.q; ++k) mean += (d.d_const[k] + t * d.d_time[k]) * b[k];
      rec.measurements.push_back({t, mean + std::sqrt(w) * spec.truth.sigma * std_normal(rng)});
      w_i.push_back(w);
    }

    out.truth.effects.push_back(b);
    if (t_effects) out.truth.effect_mixing.push_back(v);
    if (t_errors) out.truth.error_mixing.push_back(w_i);
    out.true_event_times.push_back(event_time);
    out.records.push_back(std::move(rec));
  }
  return out;
}

double true_conditional_risk(const SimulatedCohort& cohort, const SimulationSpec& spec, int i, double s,
                             double u) {
  const SubjectRecord& rec = cohort.records.at(i);
  const HazardContext ctx = context_for(rec, spec.model, cohort.truth, cohort.truth.effects.at(i));
  const int panels = spec.model.quadrature_panels;
  const double hs = s > 0.0 ? cumulative_hazard(s, ctx, cohort.truth, panels) : 0.0;
  const double hu = s + u > 0.0 ? cumulative_hazard(s + u, ctx, cohort.truth, panels) : 0.0;
  return -std::expm1(-(hu - hs));
}

int inject_outliers(std::vector<SubjectRecord>& records, double fraction, double shift, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ValidationError("outlier fraction must be in [0, 1]");
  Rng rng = make_rng(seed, 0);
  int altered = 0;
  for (auto& r : records) {
    for (auto& m : r.measurements) {
      const double u = uniform01(rng);
      const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
      if (u < fraction) {
        m.value += sign * shift;
        ++altered;
      }
    }
  }
  return altered;
}

}  // namespace rjm
