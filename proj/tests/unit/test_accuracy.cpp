#include <doctest.h>

#include <cmath>
#include <random>

#include "rjm/accuracy.hpp"
#include "rjm/error.hpp"
#include "rjm/simulate.hpp"

using namespace rjm;

namespace {

struct Fixture {
  std::vector<double> pi;
  std::vector<Outcome> outcomes;
};

// Uncensored outcomes with noisy risk scores.
Fixture uncensored(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(0.15);
  std::normal_distribution<double> noise(0.0, 0.3);
  Fixture f;
  for (int i = 0; i < n; ++i) {
    const double t = 0.01 + expo(rng);
    f.outcomes.push_back({t, 1});
    // Discretised so ties occur.
    f.pi.push_back(std::round(10.0 * (1.0 / (1.0 + t) + noise(rng))) / 10.0);
  }
  return f;
}

Fixture censored(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(0.15), cens(0.08);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Fixture f;
  for (int i = 0; i < n; ++i) {
    const double t = 0.01 + expo(rng), c = 0.01 + cens(rng);
    f.outcomes.push_back({std::min(t, c), t <= c ? 1 : 0});
    f.pi.push_back(unif(rng) * 0.5 + 0.5 / (1.0 + t));
  }
  return f;
}

const CensoringEstimate kNoCensoring;

}  // namespace

TEST_CASE("censoring Kaplan-Meier") {
  SUBCASE("no censoring") {
    const auto g = censoring_km({{1.0, 1}, {2.0, 1}, {5.0, 1}});
    for (double t : {0.0, 1.0, 3.0, 100.0}) {
      CHECK(g.at(t) == 1.0);
      CHECK(g.left_limit(t) == 1.0);
    }
  }
  SUBCASE("single censored subject") {
    const auto g = censoring_km({{3.0, 0}});
    CHECK(g.at(2.9) == 1.0);
    CHECK(g.left_limit(3.0) == 1.0);
    CHECK(g.at(3.0) == 0.0);
  }
  SUBCASE("hand-computed six-subject table") {
    // Censorings at 1 (6 at risk), 3 (4 at risk, tied with an event), 4 (2 at risk).
    const auto g = censoring_km({{1.0, 0}, {2.0, 1}, {3.0, 0}, {3.0, 1}, {4.0, 0}, {5.0, 1}});
    CHECK(g.at(0.5) == 1.0);
    CHECK(g.at(1.0) == doctest::Approx(5.0 / 6.0));
    CHECK(g.at(2.5) == doctest::Approx(5.0 / 6.0));
    CHECK(g.left_limit(3.0) == doctest::Approx(5.0 / 6.0));
    CHECK(g.at(3.0) == doctest::Approx(5.0 / 6.0 * 3.0 / 4.0));
    CHECK(g.at(4.0) == doctest::Approx(5.0 / 6.0 * 3.0 / 4.0 * 0.5));
    CHECK(g.at(9.0) == doctest::Approx(0.3125));
  }
  SUBCASE("nonincreasing") {
    const Fixture f = censored(300, 3);
    const auto g = censoring_km(f.outcomes);
    double prev = 1.0;
    for (double t = 0.0; t < 60.0; t += 0.1) {
      CHECK(g.at(t) <= prev);
      CHECK(g.left_limit(t) >= g.at(t));
      prev = g.at(t);
    }
  }
}

TEST_CASE("AUC examples") {
  const double s = 1.0, u = 5.0;
  std::vector<Outcome> o{{2.0, 1}, {3.0, 1}, {7.0, 1}, {9.0, 1}, {0.5, 1}};
  CHECK(auc_ipcw({0.9, 0.8, 0.2, 0.1, 0.5}, o, s, u, kNoCensoring) == 1.0);
  CHECK(auc_ipcw({0.3, 0.3, 0.3, 0.3, 0.3}, o, s, u, kNoCensoring) == 0.5);
  CHECK(auc_ipcw({0.1, 0.2, 0.8, 0.9, 0.5}, o, s, u, kNoCensoring) == 0.0);
  CHECK_THROWS_AS(auc_ipcw({0.1, 0.2}, {{7.0, 1}, {9.0, 1}}, s, u, kNoCensoring), UndefinedMetricError);
  CHECK_THROWS_AS(auc_ipcw({0.1, 0.2}, {{2.0, 1}, {3.0, 1}}, s, u, kNoCensoring), UndefinedMetricError);
}

TEST_CASE("AUC equals brute-force pair enumeration on uncensored data") {
  for (unsigned seed = 1; seed <= 10; ++seed) {
    const Fixture f = uncensored(120, seed);
    for (double s : {0.0, 1.0, 3.0}) {
      const double u = 5.0;
      double pairs = 0.0, score = 0.0;
      for (std::size_t i = 0; i < f.pi.size(); ++i) {
        const double ti = f.outcomes[i].time;
        if (!(ti > s && ti <= s + u)) continue;
        for (std::size_t j = 0; j < f.pi.size(); ++j) {
          if (!(f.outcomes[j].time > s + u)) continue;
          pairs += 1.0;
          score += f.pi[i] > f.pi[j] ? 1.0 : f.pi[i] == f.pi[j] ? 0.5 : 0.0;
        }
      }
      CHECK(auc_ipcw(f.pi, f.outcomes, s, u, censoring_km(f.outcomes)) == score / pairs);
    }
  }
}

TEST_CASE("AUC is invariant under increasing transforms") {
  for (unsigned seed = 1; seed <= 20; ++seed) {
    const Fixture f = censored(150, seed);
    const auto g = censoring_km(f.outcomes);
    std::vector<double> a, b;
    for (double p : f.pi) {
      a.push_back(std::log(p / (1.0 - p)));
      b.push_back(std::pow(p, 3.0) + 2.0);
    }
    const double base = auc_ipcw(f.pi, f.outcomes, 1.0, 5.0, g);
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
    CHECK(auc_ipcw(a, f.outcomes, 1.0, 5.0, g) == base);
    CHECK(auc_ipcw(b, f.outcomes, 1.0, 5.0, g) == base);
  }
}

TEST_CASE("Brier score examples") {
  const double s = 1.0, u = 5.0;
  std::vector<Outcome> o{{2.0, 1}, {3.0, 1}, {7.0, 1}, {9.0, 1}};
  CHECK(brier_ipcw({1.0, 1.0, 0.0, 0.0}, o, s, u, kNoCensoring) == 0.0);
  CHECK(brier_ipcw({0.5, 0.5, 0.5, 0.5}, o, s, u, kNoCensoring) == 0.25);
  const Fixture f = uncensored(200, 9);
  std::vector<double> pi;
  for (double p : f.pi) pi.push_back(std::clamp(p, 0.0, 1.0));
  double mse = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    if (!(f.outcomes[i].time > s)) continue;
    const double y = f.outcomes[i].time <= s + u ? 1.0 : 0.0;
    mse += (y - pi[i]) * (y - pi[i]);
    ++n;
  }
  CHECK(brier_ipcw(pi, f.outcomes, s, u, censoring_km(f.outcomes)) == doctest::Approx(mse / n).epsilon(1e-14));
}

TEST_CASE("R2 criterion examples and Brier consistency") {
  const double s = 1.0, u = 5.0;
  std::vector<Outcome> o{{2.0, 1}, {3.0, 1}, {7.0, 1}, {9.0, 1}, {12.0, 1}};
  const double pi0 = reference_risk(o, s, u, kNoCensoring);
  CHECK(pi0 == doctest::Approx(0.4));
  CHECK(r2_criterion(std::vector<double>(5, pi0), o, s, u, kNoCensoring) == 0.0);
  CHECK(r2_criterion({1, 1, 0, 0, 0}, o, s, u, kNoCensoring) == 1.0);
  CHECK(r2_criterion({0, 0, 1, 1, 1}, o, s, u, kNoCensoring) < 0.0);
  for (unsigned seed = 1; seed <= 10; ++seed) {
    const Fixture f = censored(200, seed);
    const auto g = censoring_km(f.outcomes);
    const double p0 = reference_risk(f.outcomes, s, u, g);
    const double expect =
        1.0 - brier_ipcw(f.pi, f.outcomes, s, u, g) / brier_ipcw(std::vector<double>(f.pi.size(), p0), f.outcomes, s, u, g);
    CHECK(r2_criterion(f.pi, f.outcomes, s, u, g) == expect);
    CHECK(r2_criterion(std::vector<double>(f.pi.size(), p0), f.outcomes, s, u, g) == 0.0);
  }
}

TEST_CASE("least-squares slope matches the closed form") {
  const std::vector<double> x{0.05, 0.1, 0.15, 0.2, 0.3, 0.35, 0.5, 0.6, 0.7, 0.9};
  const std::vector<double> y{0.02, 0.12, 0.1, 0.25, 0.28, 0.4, 0.45, 0.66, 0.69, 0.95};
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < 10; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double closed = (10 * sxy - sx * sy) / (10 * sxx - sx * sx);
  CHECK(least_squares_slope(x, y) == doctest::Approx(closed).epsilon(1e-12));
  CHECK(std::isnan(least_squares_slope({1, 1, 1}, {0, 1, 2})));
}

TEST_CASE("calibration deciles") {
  SUBCASE("ties are flagged") {
    std::vector<Outcome> o;
    for (int i = 0; i < 50; ++i) o.push_back({2.0 + i * 0.2, i % 3 == 0 ? 1 : 0});
    const auto t = calibration_deciles(std::vector<double>(50, 0.3), o, 1.0, 5.0);
    CHECK(t.ties);
    CHECK(std::isnan(t.slope));
    CHECK(t.predicted.size() == 10);
  }
  SUBCASE("bins without events have observed risk 0") {
    std::vector<Outcome> o;
    std::vector<double> pi;
    for (int i = 0; i < 40; ++i) {
      o.push_back({10.0 + i, 0});
      pi.push_back(0.01 * i);
    }
    const auto t = calibration_deciles(pi, o, 1.0, 5.0);
    for (double v : t.observed) CHECK(v == 0.0);
    CHECK_FALSE(t.ties);
  }
  SUBCASE("true risks give slope near 1") {
    SimulationSpec spec = SimulationSpec::defaults(Regime::TT, 4.0);
    spec.n = 2000;
    const SimulatedCohort cohort = simulate_cohort(spec, 11);
    const double s = 1.0, u = 5.0;
    std::vector<double> pi;
    std::vector<Outcome> o = outcomes_of(cohort.records);
    for (int i = 0; i < spec.n; ++i) {
      pi.push_back(cohort.records[i].event_time > s ? true_conditional_risk(cohort, spec, i, s, u) : 0.0);
    }
    const auto t = calibration_deciles(pi, o, s, u);
    CHECK(std::abs(t.slope - 1.0) < 0.1);
  }
}

TEST_CASE("marginal residual QQ") {
  auto deviation = [](const std::vector<QQPoint>& qq) {
    const std::size_t n = qq.size(), lo = n / 100, hi = n - n / 100;
    double worst = 0.0;
    for (std::size_t i = lo; i < hi; ++i) worst = std::max(worst, std::abs(qq[i].empirical - qq[i].theoretical));
    return worst;
  };
  auto tail = [](const std::vector<QQPoint>& qq) {
    double worst = 0.0;
    for (const auto& p : qq) worst = std::max(worst, std::abs(p.empirical - p.theoretical));
    return worst;
  };
  SimulationSpec nn = SimulationSpec::defaults(Regime::NN, 4.0);
  nn.n = 1200;
  // Non-informative dropout keeps the observed residuals marginally Normal.
  nn.truth.eta_value = nn.truth.eta_slope = 0.0;
  const SimulatedCohort a = simulate_cohort(nn, 5);
  const auto qa = marginal_residual_qq(nn.truth, a.records, nn.model);
  CHECK(qa.size() >= 5000);
  CHECK(deviation(qa) < 0.15);
  for (std::size_t i = 1; i < qa.size(); ++i) {
    CHECK(qa[i].theoretical > qa[i - 1].theoretical);
    CHECK(qa[i].empirical >= qa[i - 1].empirical);
  }
  SimulationSpec tt = SimulationSpec::defaults(Regime::TT, 3.0);
  tt.n = 1200;
  tt.truth.eta_value = tt.truth.eta_slope = 0.0;
  const SimulatedCohort b = simulate_cohort(tt, 5);
  ModelSpec as_nn = tt.model;
  as_nn.regime = Regime::NN;
  const auto qb = marginal_residual_qq(tt.truth, b.records, as_nn);
  CHECK(tail(qb) > tail(qa));
}
