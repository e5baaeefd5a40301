#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "rjm/cohort_io.hpp"
#include "rjm/config.hpp"
#include "rjm/error.hpp"
#include "rjm/fit.hpp"
#include "rjm/simulate.hpp"
#include "test_support.hpp"

using namespace rjm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rjm_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

bool same_records(const std::vector<SubjectRecord>& a, const std::vector<SubjectRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id || a[i].event_time != b[i].event_time || a[i].event != b[i].event ||
        a[i].baseline != b[i].baseline || a[i].measurements.size() != b[i].measurements.size()) {
      return false;
    }
    for (std::size_t j = 0; j < a[i].measurements.size(); ++j) {
      if (a[i].measurements[j].time != b[i].measurements[j].time ||
          a[i].measurements[j].value != b[i].measurements[j].value) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

TEST_CASE("simulated event times are unit exponential under the null hazard") {
  SimulationSpec spec = SimulationSpec::defaults(Regime::NN, 4.0);
  spec.n = 5000;
  spec.truth.log_lambda = 0.0;
  spec.truth.log_nu = 0.0;
  spec.truth.eta_value = spec.truth.eta_slope = 0.0;
  spec.truth.omega.setZero();
  spec.admin_censoring = 60.0;
  const SimulatedCohort c = simulate_cohort(spec, 3);
  std::vector<double> t = c.true_event_times;
  std::sort(t.begin(), t.end());
  double ks = 0.0;
  const double n = static_cast<double>(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double f = 1.0 - std::exp(-t[i]);
    ks = std::max({ks, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  CHECK(ks < 0.03);
  CHECK(c.administratively_censored == 0);
}

TEST_CASE("simulated baseline measurements have the marginal moments") {
  SimulationSpec spec = SimulationSpec::defaults(Regime::NN, 4.0);
  spec.n = 5000;
  spec.truth.alpha.setZero();
  const SimulatedCohort c = simulate_cohort(spec, 4);
  std::vector<double> y;
  for (const auto& r : c.records) {
    if (!r.measurements.empty() && r.measurements.front().time == 0.0) y.push_back(r.measurements.front().value);
  }
  REQUIRE(y.size() > 4000);
  double mean = 0.0, var = 0.0;
  for (double v : y) mean += v;
  mean /= y.size();
  for (double v : y) var += (v - mean) * (v - mean);
  var /= (y.size() - 1);
  const double expect = spec.truth.covariance()(0, 0) + spec.truth.sigma * spec.truth.sigma;
  CHECK(std::abs(mean) < 3.0 * std::sqrt(expect / y.size()));
  CHECK(std::abs(var / expect - 1.0) < 0.05);
}

TEST_CASE("simulation is reproducible and respects the schedule") {
  SimulationSpec spec = SimulationSpec::defaults(Regime::TT, 4.0);
  spec.n = 200;
  const SimulatedCohort a = simulate_cohort(spec, 9), b = simulate_cohort(spec, 9), c = simulate_cohort(spec, 10);
  CHECK(same_records(a.records, b.records));
  CHECK_FALSE(same_records(a.records, c.records));
  for (const auto& r : a.records) {
    CHECK(r.event_time <= spec.admin_censoring);
    for (const auto& m : r.measurements) CHECK(m.time <= r.event_time);
    CHECK(r.baseline.count("group") == 1);
  }
  spec.schedule = SimulationSpec::Schedule::Poisson;
  spec.visit_rate = 2.0;
  const SimulatedCohort p = simulate_cohort(spec, 9);
  double visits = 0.0, years = 0.0;
  for (const auto& r : p.records) {
    visits += r.measurements.size() - 1;  // first visit at time 0
    years += r.event_time;
  }
  CHECK(std::abs(visits / years - 2.0) < 0.2);
  spec.truth.phi = 1.5;
  CHECK_THROWS_AS(simulate_cohort(spec, 1), ValidationError);
}

TEST_CASE("cohort CSV round trip and validation") {
  SimulationSpec spec = SimulationSpec::defaults(Regime::TT, 4.0);
  spec.n = 60;
  const SimulatedCohort c = simulate_cohort(spec, 2);
  const fs::path dir = scratch("io");
  write_cohort(c.records, (dir / "long.csv").string(), (dir / "surv.csv").string());
  CohortReport report;
  const auto back = read_cohort((dir / "long.csv").string(), (dir / "surv.csv").string(), &report);
  CHECK(same_records(back, c.records));
  CHECK(report.subjects == 60);

  write(dir / "l.csv", "id,time,value\na,0,1.0\na,-1,2.0\n");
  write(dir / "s.csv", "id,event_time,event\na,3,1\n");
  try {
    read_cohort((dir / "l.csv").string(), (dir / "s.csv").string());
    FAIL("negative time accepted");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);  // line number
  }
  write(dir / "l.csv", "id,time,value\na,0,1.0\nb,1,2.0\n");
  try {
    read_cohort((dir / "l.csv").string(), (dir / "s.csv").string());
    FAIL("unknown id accepted");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
  write(dir / "l.csv", "id,time,value\na,1,1.0\na,1,2.0\n");
  CHECK_THROWS_AS(read_cohort((dir / "l.csv").string(), (dir / "s.csv").string()), ValidationError);
  write(dir / "l.csv", "id,time,value\na,1,nan\n");
  CHECK_THROWS_AS(read_cohort((dir / "l.csv").string(), (dir / "s.csv").string()), ValidationError);
  write(dir / "l.csv", "value,id,time\n1.5,a,1\n");
  CHECK(read_cohort((dir / "l.csv").string(), (dir / "s.csv").string()).at(0).measurements.at(0).value == 1.5);
  write(dir / "l.csv", "1.5,a,1\n");
  CHECK_THROWS_AS(read_cohort((dir / "l.csv").string(), (dir / "s.csv").string()), ValidationError);
}

TEST_CASE("split is deterministic and partitions the cohort") {
  const auto records = rjm::testing::toy_records(101, 4);
  const auto [a, b] = split_cohort(records, 0.5, 3);
  const auto [c, d] = split_cohort(records, 0.5, 3);
  CHECK(a.size() + b.size() == records.size());
  CHECK(same_records(a, c));
  CHECK(same_records(b, d));
  std::vector<std::string> ids;
  for (const auto& r : a) ids.push_back(r.id);
  for (const auto& r : b) ids.push_back(r.id);
  std::sort(ids.begin(), ids.end());
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
}

TEST_CASE("outlier injection") {
  auto records = rjm::testing::toy_records(50, 8);
  const auto original = records;
  const int altered = inject_outliers(records, 0.2, 3.0, 1);
  int changed = 0, total = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t j = 0; j < records[i].measurements.size(); ++j) {
      ++total;
      const double diff = records[i].measurements[j].value - original[i].measurements[j].value;
      if (diff != 0.0) {
        ++changed;
        CHECK(std::abs(std::abs(diff) - 3.0) < 1e-12);
      }
    }
  }
  CHECK(changed == altered);
  CHECK(changed > 0);
  CHECK(changed < total);
}

TEST_CASE("fit persistence round trip and design audit") {
  const auto records = rjm::testing::toy_records(6, 3);
  ModelSpec spec;
  spec.regime = Regime::TT;
  spec.survival_covariates = {"age"};
  FitOptions fo;
  fo.sampler.chains = 2;
  fo.sampler.iterations = 200;
  fo.sampler.seed = 8;
  fo.sampler.threads = 1;
  fo.sampler.max_divergent_fraction = 1.0;
  const FitResult fit = fit_model(records, spec, fo);
  CHECK(fit.draws.rows() == 200);
  CHECK(fit.draws.num_chains() == 2);
  const fs::path dir = scratch("fit");
  save_fit(fit, dir.string());
  const FitResult back = load_fit(dir.string());
  CHECK(back.draws.values == fit.draws.values);
  CHECK(digest(back.draws) == digest(fit.draws));
  CHECK(back.spec.regime == Regime::TT);
  CHECK(back.spec.survival_covariates == spec.survival_covariates);
  for (const auto& name : global_columns(spec)) {
    CHECK(back.diagnostic(name).summary.p50 == fit.diagnostic(name).summary.p50);
    CHECK(fit.diagnostic(name).summary.p50 == trace_summary(fit.draws.get(name)).p50);
  }
  // Tampering with a draw file is detected.
  {
    std::ifstream in(dir / "draws_chain1.csv");
    std::string text((std::istreambuf_iterator<char>(in)), {});
    const auto pos = text.find('\n') + 1;
    text[pos] = text[pos] == '1' ? '2' : '1';
    std::ofstream(dir / "draws_chain1.csv") << text;
  }
  CHECK_THROWS_AS(load_fit(dir.string()), ValidationError);

  ModelSpec nt = spec;
  nt.regime = Regime::NT;
  CHECK(design_audit_csv(records, spec) == design_audit_csv(records, nt));

  // Same seed, same draws.
  const FitResult again = fit_model(records, spec, fo);
  CHECK(again.draws.values == fit.draws.values);
}

TEST_CASE("config files") {
  RunConfig c;
  apply_config_text("# comment\nmodel = nt\nchains = 3\nlandmarks = 1, 2.5\nhorizon = 5\nthin = 4 # trailing\n", c);
  CHECK(c.model.regime == Regime::NT);
  CHECK(c.sampler.chains == 3);
  CHECK(c.landmarks == std::vector<double>{1.0, 2.5});
  CHECK(c.prediction.thin == 4);
  RunConfig d;
  CHECK_THROWS_AS(apply_config_text("colour = blue\n", d), ValidationError);
  CHECK_THROWS_AS(apply_config_text("chains = 2\nchains = 3\n", d), ValidationError);
  CHECK_THROWS_AS(apply_config_text("chains = two\n", d), ValidationError);
  CHECK_THROWS_AS(apply_config_text("chains\n", d), ValidationError);
  try {
    RunConfig e;
    apply_config_text("model = tt\n\nbogus = 1\n", e, "run.cfg");
    FAIL("unknown key accepted");
  } catch (const ValidationError& err) {
    CHECK(std::string(err.what()).find("run.cfg:3") != std::string::npos);
  }
  for (const auto& key : config_keys()) CHECK_FALSE(key.empty());
}
