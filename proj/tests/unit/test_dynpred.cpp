#include <doctest.h>

#include <cmath>

#include "rjm/dynpred.hpp"
#include "rjm/error.hpp"
#include "rjm/fit.hpp"
#include "rjm/simulate.hpp"
#include "test_support.hpp"

using namespace rjm;
using rjm::testing::repeated_draws;

namespace {

ModelSpec nn_spec() {
  ModelSpec spec;
  spec.regime = Regime::NN;
  return spec;
}

// Defaults of the simulator with the regime swapped.
ParameterState truth_for(const ModelSpec& spec, double df = 4.0) {
  SimulationSpec sim = SimulationSpec::defaults(spec.regime, df);
  ParameterState s = sim.truth;
  s.omega.resize(spec.num_covariates());
  s.omega.setConstant(0.5);
  return s;
}

NewcomerData newcomer(std::vector<Measurement> ms) {
  NewcomerData d;
  d.id = "new";
  d.measurements = std::move(ms);
  return d;
}

Eigen::MatrixXd empirical_cov(const std::vector<Eigen::VectorXd>& xs) {
  const int q = static_cast<int>(xs.front().size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(q);
  for (const auto& x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(q, q);
  for (const auto& x : xs) c += (x - mean) * (x - mean).transpose();
  return c / static_cast<double>(xs.size() - 1);
}

}  // namespace

TEST_CASE("conditional failure probability") {
  ModelSpec spec = nn_spec();
  ParameterState theta = ParameterState::zeros(spec);
  HazardContext ctx;
  CHECK(conditional_failure_probability(ctx, theta, 1.0, 0.0) == 0.0);
  CHECK(std::abs(conditional_failure_probability(ctx, theta, 1.0, 5.0) - (1.0 - std::exp(-5.0))) < 1e-6);
  CHECK(conditional_failure_probability(ctx, theta, 1.0, 200.0) == doctest::Approx(1.0));
  theta.eta_value = 0.7;
  theta.eta_slope = -0.4;
  theta.log_nu = std::log(1.5);
  ctx.value_intercept = 0.3;
  ctx.value_slope = 0.2;
  double prev = 0.0;
  for (double u = 0.0; u < 30.0; u += 0.5) {
    const double p = conditional_failure_probability(ctx, theta, 2.0, u);
    CHECK(p >= prev);
    CHECK(p <= 1.0);
    prev = p;
  }
  CHECK(prev > 0.999);
  CHECK_THROWS_AS(conditional_failure_probability(ctx, theta, -1.0, 1.0), DomainError);
}

TEST_CASE("prior-only latents follow MVN(0, Sigma)") {
  const ModelSpec spec = nn_spec();
  ParameterState theta = truth_for(spec);
  theta.eta_value = theta.eta_slope = 0.0;
  PredictionOptions opts;
  opts.thin = 1;
  Predictor pred(repeated_draws(theta, spec, 10000), spec, opts);
  const PredictionResult r = pred.predict(newcomer({}), 0.0, {1.0});
  CHECK(r.prior_only);
  CHECK_FALSE(r.warnings.empty());
  const Eigen::MatrixXd c = empirical_cov(r.effects);
  const Eigen::MatrixXd sigma = theta.covariance();
  for (int a = 0; a < 2; ++a) CHECK(std::abs(c(a, a) / sigma(a, a) - 1.0) < 0.05);
  CHECK(std::abs(c(1, 0) - sigma(1, 0)) < 0.05 * std::sqrt(sigma(0, 0) * sigma(1, 1)));
}

TEST_CASE("latent NUTS recovers the prior when the data are uninformative") {
  const ModelSpec spec = nn_spec();
  ParameterState theta = truth_for(spec);
  theta.eta_value = theta.eta_slope = 0.0;
  PredictionOptions opts;
  opts.thin = 1;
  opts.latent_warmup = 3;
  Predictor pred(repeated_draws(theta, spec, 6000), spec, opts);
  // With eta = 0 survival to s carries no information about B.
  const PredictionResult r = pred.predict(newcomer({}), 2.0, {1.0});
  CHECK_FALSE(r.prior_only);
  const Eigen::MatrixXd c = empirical_cov(r.effects);
  const Eigen::MatrixXd sigma = theta.covariance();
  for (int a = 0; a < 2; ++a) CHECK(std::abs(c(a, a) / sigma(a, a) - 1.0) < 0.1);
}

TEST_CASE("a near-exact measurement pins the trajectory") {
  const ModelSpec spec = nn_spec();
  ParameterState theta = truth_for(spec);
  theta.sigma = 1e-4;
  PredictionOptions opts;
  opts.thin = 1;
  opts.max_depth = 10;
  Predictor pred(repeated_draws(theta, spec, 40), spec, opts);
  const NewcomerData subject = newcomer({{1.0, 0.8}});
  const PredictionResult r = pred.predict(subject, 1.0, {2.0});
  for (const auto& b : r.effects) {
    const double fitted = theta.alpha[0] + b[0] + 1.0 * (theta.alpha[1] + b[1]);
    CHECK(std::abs(fitted - 0.8) < 1e-3);
  }
  const TrajectoryBands bands = pred.marker_bands(r, subject, {1.0});
  CHECK(std::abs(bands.p50[0] - 0.8) < 1e-3);
}

TEST_CASE("predictions are coherent, deterministic and keyed by content") {
  ModelSpec spec;
  spec.survival_covariates = {"group"};
  const ParameterState theta = truth_for(spec);
  PredictionOptions opts;
  opts.thin = 1;
  opts.latent_warmup = 50;
  Predictor pred(repeated_draws(theta, spec, 60), spec, opts);
  NewcomerData a = newcomer({{0.0, 0.1}, {1.0, 0.3}, {2.0, 0.2}, {4.0, 9.0}});
  a.baseline["group"] = 1.0;
  const std::vector<double> horizons{0.0, 1.0, 2.5, 5.0, 10.0};
  const PredictionResult r = pred.predict(a, 3.0, horizons);
  CHECK(r.measurements_used == 3);
  CHECK_FALSE(r.warnings.empty());
  for (Eigen::Index k = 0; k < r.pi.rows(); ++k) {
    CHECK(r.pi(k, 0) == 0.0);
    for (Eigen::Index h = 1; h < r.pi.cols(); ++h) {
      CHECK(r.pi(k, h) >= r.pi(k, h - 1));
      CHECK(r.pi(k, h) <= 1.0);
    }
  }
  const PredictionResult again = pred.predict(a, 3.0, horizons);
  CHECK(again.pi == r.pi);
  NewcomerData b = a;
  b.id = "other-id";
  b.measurements.pop_back();  // only the ignored point differs
  CHECK(pred.predict(b, 3.0, horizons).pi == r.pi);
  CHECK(pred.predict(b, 3.0, {5.0}).pi.col(0) == r.pi.col(3));
  opts.seed += 1;
  Predictor other(repeated_draws(theta, spec, 60), spec, opts);
  CHECK(other.predict(a, 3.0, horizons).pi != r.pi);
}

TEST_CASE("an extreme new measurement moves the prediction more than a typical one") {
  ModelSpec spec;
  const ParameterState theta = truth_for(spec);
  PredictionOptions opts;
  opts.thin = 1;
  opts.latent_warmup = 30;
  Predictor pred(repeated_draws(theta, spec, 300), spec, opts);
  const NewcomerData base = newcomer({{0.0, 0.1}, {1.0, 0.15}, {2.0, 0.2}});
  const auto median = [&](const NewcomerData& d) { return pred.predict(d, 3.0, {5.0}).summary(0).p50; };
  const double m0 = median(base);
  NewcomerData typical = base, extreme = base;
  typical.measurements.push_back({3.0, 0.25});
  extreme.measurements.push_back({3.0, 2.5});
  CHECK(std::abs(median(typical) - m0) < std::abs(median(extreme) - m0));
  CHECK(median(extreme) > m0);
}

TEST_CASE("trajectory bands") {
  ModelSpec spec;
  spec.log_scale_marker = true;
  const ParameterState theta = truth_for(spec);
  PredictionOptions opts;
  opts.thin = 1;
  opts.latent_warmup = 30;
  Predictor pred(repeated_draws(theta, spec, 400), spec, opts);
  const NewcomerData subject = newcomer({{0.0, 0.1}, {1.0, 0.2}, {2.0, 0.25}});
  const PredictionResult r = pred.predict(subject, 2.0, {3.0});
  const std::vector<double> times{2.0, 4.0, 6.0, 8.0};
  const TrajectoryBands bands = pred.marker_bands(r, subject, times);
  const Eigen::MatrixXd y = pred.marker_trajectories(r, subject, times);
  double prev = 0.0;
  for (std::size_t j = 0; j < times.size(); ++j) {
    std::vector<double> col(y.col(j).data(), y.col(j).data() + y.rows());
    CHECK(bands.p50[j] == std::exp(quantile(col, 0.5)));
    CHECK(bands.p025[j] <= bands.p50[j]);
    CHECK(bands.p50[j] <= bands.p975[j]);
    const double width = quantile(col, 0.975) - quantile(col, 0.025);
    CHECK(width > prev);
    prev = width;
  }
}

TEST_CASE("t-t with large df matches N-N predictions") {
  ModelSpec nn;
  nn.regime = Regime::NN;
  ModelSpec tt;
  tt.regime = Regime::TT;
  ParameterState a = truth_for(nn);
  ParameterState b = truth_for(tt);
  b.phi = b.delta = 100.0;
  PredictionOptions opts;
  opts.thin = 1;
  opts.latent_warmup = 30;
  const NewcomerData subject = newcomer({{0.0, 0.1}, {1.0, 0.4}, {2.0, 0.5}});
  const PredictionResult ra = Predictor(repeated_draws(a, nn, 800), nn, opts).predict(subject, 2.0, {5.0});
  const PredictionResult rb = Predictor(repeated_draws(b, tt, 800), tt, opts).predict(subject, 2.0, {5.0});
  const TraceSummary sa = ra.summary(0), sb = rb.summary(0);
  // Monte Carlo standard error of a median with autocorrelated draws, generously.
  const double mcse = 4.0 * std::max(sa.sd, sb.sd) / std::sqrt(800.0 / 4.0);
  CHECK(std::abs(sa.p50 - sb.p50) < mcse);
}

TEST_CASE("latent predictions agree with fitting-time latents") {
  // For a censored subject predicted at its censoring time, the newcomer
  // posterior of B_i given theta uses the same information as the fit.
  SimulationSpec sim = SimulationSpec::defaults(Regime::NN);
  sim.n = 60;
  const SimulatedCohort cohort = simulate_cohort(sim, 21);
  FitOptions fo;
  fo.sampler.chains = 2;
  fo.sampler.iterations = 1000;
  fo.sampler.seed = 5;
  fo.sampler.threads = 1;
  fo.keep_latents = true;
  const FitResult fit = fit_model(cohort.records, sim.model, fo);
  PredictionOptions po;
  po.thin = 2;
  po.latent_warmup = 30;
  Predictor pred(fit.draws, sim.model, po);
  int checked = 0;
  for (std::size_t i = 0; i < cohort.records.size() && checked < 5; ++i) {
    const SubjectRecord& r = cohort.records[i];
    if (r.event != 0) continue;
    ++checked;
    const PredictionResult res = pred.predict(NewcomerData::from_record(r), r.event_time, {1.0});
    for (int k = 0; k < 2; ++k) {
      std::vector<double> predicted;
      for (const auto& b : res.effects) predicted.push_back(b[k]);
      const auto fitted = fit.draws.get("B[" + std::to_string(i + 1) + "," + std::to_string(k + 1) + "]");
      const TraceSummary a = trace_summary(predicted), b = trace_summary(fitted);
      CHECK(a.p50 >= b.p025);
      CHECK(a.p50 <= b.p975);
      CHECK(b.p50 >= a.p025);
      CHECK(b.p50 <= a.p975);
      CHECK(std::abs(a.p975 - a.p025) < 2.0 * std::abs(b.p975 - b.p025));
      CHECK(std::abs(b.p975 - b.p025) < 2.0 * std::abs(a.p975 - a.p025));
    }
  }
  CHECK(checked == 5);
}
