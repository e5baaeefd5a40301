#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>

#include "rjm/design.hpp"
#include "rjm/distributions.hpp"
#include "rjm/error.hpp"
#include "rjm/hazard.hpp"
#include "rjm/random.hpp"
#include "rjm/types.hpp"

using namespace rjm;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

ParameterState hazard_params(double lambda, double nu) {
  ModelSpec spec;
  spec.regime = Regime::NN;
  ParameterState p = ParameterState::zeros(spec);
  p.log_lambda = std::log(lambda);
  p.log_nu = std::log(nu);
  return p;
}

HazardContext flat_context(double intercept = 0.0, double slope = 0.0) {
  HazardContext ctx;
  ctx.value_intercept = intercept;
  ctx.value_slope = slope;
  return ctx;
}

}  // namespace

TEST_CASE("design rows follow the term grammar") {
  ModelSpec spec;
  SubjectRecord r;
  r.id = "a";
  r.measurements = {{2.5, 1.0}};
  r.baseline["age"] = 3.0;
  r.event_time = 4.0;
  auto rows = build_design(r, spec);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].x[0] == 1.0);
  CHECK(rows[0].x[1] == 2.5);
  CHECK(rows[0].d[0] == 1.0);
  CHECK(rows[0].d[1] == 2.5);

  spec.random_terms = {"1"};
  r.measurements = {{0.0, 1.0}, {7.0, 2.0}};
  rows = build_design(r, spec);
  for (const auto& row : rows) {
    REQUIRE(row.d.size() == 1);
    CHECK(row.d[0] == 1.0);
  }

  spec.fixed_terms = {"1", "time", "age", "time:age"};
  rows = build_design(r, spec);
  CHECK(rows[1].x[2] == 3.0);
  CHECK(rows[1].x[3] == 21.0);

  spec.survival_covariates = {"creatinine"};
  try {
    build_design(r, spec);
    FAIL("expected a missing covariate error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("creatinine") != std::string::npos);
  }
  spec.survival_covariates.clear();
  r.measurements.clear();
  CHECK_THROWS_AS(build_design(r, spec), ValidationError);
}

TEST_CASE("survival covariates are constant across rows") {
  ModelSpec spec;
  spec.survival_covariates = {"age"};
  SubjectRecord r{"a", {{0.0, 1.0}, {1.0, 2.0}, {2.0, 3.0}}, {{"age", 0.7}}, 3.0, 1};
  for (const auto& row : build_design(r, spec)) CHECK(row.c[0] == 0.7);
}

TEST_CASE("scaled normal log density") {
  CHECK(log_density_scaled_normal(0.0, 0.0, 1.0) == doctest::Approx(-0.9189385332046727).epsilon(1e-15));
  for (double m : {-3.0, 0.0, 2.5}) {
    for (double s : {0.1, 1.0, 7.0}) {
      CHECK(log_density_scaled_normal(m, m, s) == doctest::Approx(-std::log(s) - 0.5 * kLog2Pi).epsilon(1e-14));
      CHECK(log_density_scaled_normal(m + 0.3, m, s) == log_density_scaled_normal(m - 0.3, m, s));
    }
  }
  CHECK_THROWS_AS(log_density_scaled_normal(0.0, 0.0, 0.0), DomainError);
  CHECK_THROWS_AS(log_density_scaled_normal(0.0, 0.0, -1.0), DomainError);
}

TEST_CASE("inverse gamma log density") {
  CHECK(log_density_inverse_gamma(1.0, 1.0, 1.0) == doctest::Approx(-1.0).epsilon(1e-15));
  for (double shape : {0.7, 2.0, 5.0}) {
    for (double rate : {0.5, 2.0}) {
      const double mode = rate / (shape + 1.0);
      const double at = log_density_inverse_gamma(mode, shape, rate);
      CHECK(at > log_density_inverse_gamma(mode * 1.01, shape, rate));
      CHECK(at > log_density_inverse_gamma(mode * 0.99, shape, rate));
      boost::math::quadrature::tanh_sinh<double> ts;
      const double mass = ts.integrate(
          [&](double v) { return std::exp(log_density_inverse_gamma(v, shape, rate)); }, 0.0,
          std::numeric_limits<double>::infinity());
      CHECK(std::abs(mass - 1.0) < 1e-8);
    }
  }
  CHECK_THROWS_AS(log_density_inverse_gamma(0.0, 1.0, 1.0), DomainError);
  CHECK_THROWS_AS(log_density_inverse_gamma(1.0, -1.0, 1.0), DomainError);
  CHECK_THROWS_AS(log_density_inverse_gamma(1.0, 1.0, 0.0), DomainError);
}

TEST_CASE("t marginal equals the Normal x inverse-gamma mixture") {
  boost::math::quadrature::tanh_sinh<double> ts;
  for (double df : {2.5, 4.0, 10.0, 30.0}) {
    for (double y : {-4.0, -0.7, 0.0, 1.3, 6.0}) {
      const double loc = 0.4, scale = 1.7;
      const double mix = ts.integrate(
          [&](double w) {
            return std::exp(log_density_scaled_normal(y, loc, scale * std::sqrt(w)) +
                            log_density_inverse_gamma(w, 0.5 * df, 0.5 * df));
          },
          0.0, std::numeric_limits<double>::infinity());
      CHECK(std::abs(log_density_t_marginal(y, loc, scale, df) - std::log(mix)) < 1e-6);
    }
  }
}

TEST_CASE("t marginal approaches the Normal and is symmetric") {
  // log t_nu(z) - log phi(z) = (z^4 - 2 z^2 - 1) / (4 nu) + O(nu^-2).
  for (double z = -3.0; z <= 3.0; z += 0.25) {
    for (double df : {100.0, 1000.0, 1e5}) {
      const double gap = log_density_t_marginal(1.0 + 2.0 * z, 1.0, 2.0, df) -
                         log_density_scaled_normal(1.0 + 2.0 * z, 1.0, 2.0);
      const double leading = (z * z * z * z - 2.0 * z * z - 1.0) / (4.0 * df);
      CHECK(std::abs(gap - leading) < (1.0 + z * z * z * z * z * z / 6.0) / (df * df));
    }
    CHECK(std::abs(log_density_t_marginal(1.0 + 2.0 * z, 1.0, 2.0, 1e6) -
                   log_density_scaled_normal(1.0 + 2.0 * z, 1.0, 2.0)) < 5e-5);
    CHECK(log_density_t_marginal(1.0 + z, 1.0, 2.0, 4.0) == log_density_t_marginal(1.0 - z, 1.0, 2.0, 4.0));
  }
  CHECK_THROWS_AS(log_density_t_marginal(0.0, 0.0, 1.0, 2.0), DomainError);
  CHECK_THROWS_AS(log_density_t_marginal(0.0, 0.0, 0.0, 5.0), DomainError);
}

TEST_CASE("prior densities") {
  CHECK(log_density_cauchy(0.0, 0.0, 20.0) == doctest::Approx(-std::log(20.0 * M_PI)).epsilon(1e-14));
  CHECK(log_density_half_cauchy(0.0, 5.0) == doctest::Approx(std::log(2.0 / (5.0 * M_PI))).epsilon(1e-14));
  CHECK(log_density_uniform(1.0, 2.0, 100.0) == -std::numeric_limits<double>::infinity());
  CHECK(log_density_uniform(101.0, 2.0, 100.0) == -std::numeric_limits<double>::infinity());
  CHECK(log_density_uniform(50.0, 2.0, 100.0) == doctest::Approx(-std::log(98.0)));
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(2, 2);
  CHECK(log_density_lkj_corr_cholesky(eye, 2.0) == doctest::Approx(-lkj_log_normalizer(2, 2.0)).epsilon(1e-14));
  // q = 2: p(r) = (1 - r^2)^(eta - 1) / B(eta, eta) / 2^(2 eta - 1), so c = 4/3 at eta = 2.
  CHECK(lkj_log_normalizer(2, 2.0) == doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-13));
}

TEST_CASE("multivariate normal log density matches the closed form") {
  Eigen::MatrixXd cov(2, 2);
  cov << 2.0, 0.6, 0.6, 1.0;
  Eigen::VectorXd x(2);
  x << 0.3, -1.2;
  const double expect = -kLog2Pi - 0.5 * std::log(cov.determinant()) - 0.5 * x.dot(cov.inverse() * x);
  CHECK(log_density_mvnormal(x, cov) == doctest::Approx(expect).epsilon(1e-14));
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(log_density_mvnormal(x, bad), DomainError);
}

TEST_CASE("log hazard examples") {
  for (double t : {0.1, 1.0, 7.0}) CHECK(log_hazard(t, flat_context(), hazard_params(1.0, 1.0)) == doctest::Approx(0.0));
  CHECK(log_hazard(5.0, flat_context(), hazard_params(2.0, 1.0)) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  ParameterState p = hazard_params(0.3, 1.7);
  p.eta_value = 1.0;
  const double alpha1 = 0.8;
  const double t = 2.2;
  CHECK(log_hazard(t, flat_context(alpha1), p) ==
        doctest::Approx(0.7 * std::log(t) + std::log(0.3) + std::log(1.7) + alpha1).epsilon(1e-14));
  CHECK_THROWS_AS(log_hazard(0.0, flat_context(), p), DomainError);
}

TEST_CASE("cumulative hazard equals the Weibull closed form on the 27-point grid") {
  for (double lambda : {0.1, 1.0, 10.0}) {
    for (double nu : {0.5, 1.0, 2.0}) {
      for (double T : {0.1, 1.0, 10.0}) {
        const double h = cumulative_hazard(T, flat_context(0.3, 0.2), hazard_params(lambda, nu));
        const double exact = lambda * std::pow(T, nu);
        CHECK(std::abs(h - exact) <= 1e-10 * exact);
      }
    }
  }
}

TEST_CASE("cumulative hazard with a linked trajectory matches adaptive quadrature") {
  ParameterState p = hazard_params(0.05, 1.3);
  p.eta_value = 1.0;
  p.eta_slope = 2.0;
  const HazardContext ctx = flat_context(0.2, 0.15);
  boost::math::quadrature::tanh_sinh<double> ts;
  auto h = [&](double t) { return t <= 0.0 ? 0.0 : std::exp(log_hazard(t, ctx, p)); };
  for (double T : {0.5, 3.0, 12.0}) {
    const double ref = ts.integrate(h, 0.0, T, 1e-15);
    // The w^(1/nu) endpoint behaviour limits the fixed rule to about 1e-6.
    CHECK(std::abs(cumulative_hazard(T, ctx, p) - ref) <= 2e-6 * ref);
    CHECK(std::abs(cumulative_hazard(T, ctx, p, 8) - ref) <= 5e-8 * ref);
    const double tail = ts.integrate(h, 0.5 * T, T, 1e-15);
    CHECK(std::abs(cumulative_hazard(T, ctx, p) - (cumulative_hazard(0.5 * T, ctx, p) + tail)) <= 2e-6 * ref);
  }
}

TEST_CASE("cumulative hazard is additive over split intervals") {
  // Flat trajectory with non-zero links and covariate effect: the rule is exact.
  ParameterState p = hazard_params(0.3, 1.7);
  p.eta_value = 0.8;
  p.eta_slope = 1.5;
  p.omega = Eigen::VectorXd::Constant(1, 0.4);
  HazardContext ctx = flat_context(0.5, 0.0);
  ctx.covariates = Eigen::VectorXd::Constant(1, 1.0);
  boost::math::quadrature::tanh_sinh<double> ts;
  auto h = [&](double t) { return std::exp(log_hazard(t, ctx, p)); };
  for (double T : {0.2, 2.0, 9.0}) {
    const double tail = ts.integrate(h, 0.5 * T, T, 1e-15);
    CHECK(std::abs(cumulative_hazard(T, ctx, p) - (cumulative_hazard(0.5 * T, ctx, p) + tail)) <= 1e-9);
  }
  CHECK(cumulative_hazard(1e-14, ctx, p) < 1e-14);
  CHECK_THROWS_AS(cumulative_hazard(0.0, ctx, p), DomainError);
}

TEST_CASE("interval hazard matches the reference integral and is non-negative") {
  ParameterState p = hazard_params(0.3, 1.7);
  p.eta_value = 0.8;
  p.eta_slope = -0.6;
  HazardContext ctx = flat_context(0.5, 0.35);
  boost::math::quadrature::tanh_sinh<double> ts;
  auto h = [&](double t) { return std::exp(log_hazard(t, ctx, p)); };
  for (double a : {0.1, 1.0, 4.0}) {
    for (double w : {0.01, 0.5, 3.0}) {
      const double ref = ts.integrate(h, a, a + w, 1e-15);
      CHECK(std::abs(interval_hazard(a, a + w, ctx, p) - ref) <= 1e-7 * ref);
      CHECK(std::abs(interval_hazard(a, a + w, ctx, p, 4) - ref) <= 1e-10 * ref);
    }
  }
  CHECK(interval_hazard(0.0, 2.0, ctx, p) == cumulative_hazard(2.0, ctx, p));
  CHECK(interval_hazard(3.0, 3.0, ctx, p) == 0.0);
  p.log_lambda = -40.0;
  CHECK(interval_hazard(5.0, 5.0 + 1e-6, ctx, p) >= 0.0);
  CHECK_THROWS_AS(interval_hazard(2.0, 1.0, ctx, p), DomainError);
}

TEST_CASE("log survival is a monotone probability") {
  CHECK(log_survival(1.0, flat_context(), hazard_params(1.0, 1.0)) == doctest::Approx(-1.0).epsilon(1e-14));
  ParameterState p = hazard_params(0.2, 1.4);
  p.eta_value = 0.5;
  p.eta_slope = -1.0;
  const HazardContext ctx = flat_context(1.0, 0.3);
  double prev = 0.0;
  for (double T = 0.05; T < 20.0; T *= 1.3) {
    const double ls = log_survival(T, ctx, p);
    CHECK(ls <= prev);
    CHECK(std::exp(ls) <= 1.0);
    CHECK(std::exp(ls) > 0.0);
    prev = ls;
  }
}

TEST_CASE("slope link equals alpha_2 + B_2 and Sigma reconstructs") {
  ModelSpec spec;
  SubjectRecord r{"a", {{0.0, 1.0}, {1.0, 2.0}}, {}, 3.0, 0};
  const SubjectDesign d = build_subject_design(r, spec);
  Rng rng = make_rng(7, 0);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd alpha(2), b(2);
    alpha << std_normal(rng), std_normal(rng);
    b << std_normal(rng), std_normal(rng);
    const HazardContext ctx = HazardContext::from_design(d, alpha, b);
    CHECK(ctx.slope(2.0) == alpha[1] + b[1]);
    CHECK(ctx.current_value(1.5) == doctest::Approx(alpha[0] + b[0] + 1.5 * (alpha[1] + b[1])).epsilon(1e-14));

    ParameterState s = ParameterState::zeros(spec);
    s.scales << std::exp(std_normal(rng)), std::exp(std_normal(rng));
    const double rho = std::tanh(std_normal(rng));
    s.corr_cholesky << 1.0, 0.0, rho, std::sqrt(1.0 - rho * rho);
    const Eigen::MatrixXd sigma = s.covariance();
    CHECK((sigma - sigma.transpose()).norm() == 0.0);
    CHECK(Eigen::LLT<Eigen::MatrixXd>(sigma).info() == Eigen::Success);
  }
}
