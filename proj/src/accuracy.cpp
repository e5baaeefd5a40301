#include "rjm/accuracy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include <boost/math/distributions/normal.hpp>

#include "rjm/design.hpp"
#include "rjm/error.hpp"

namespace rjm {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Weighted {
  std::vector<int> index;  // into outcomes, at-risk subjects only
  std::vector<double> weight;
  std::vector<int> status;  // 1 case, 0 control, -1 censored in window
};

Weighted weigh(const std::vector<Outcome>& outcomes, double s, double u, const CensoringEstimate& g) {
  if (!(s >= 0.0) || !(u > 0.0)) throw DomainError("landmark must be >= 0 and horizon > 0");
  Weighted w;
  const double gs = g.at(s);
  const double g_end = g.left_limit(s + u);
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    const Outcome& o = outcomes[k];
    if (!(o.time > s)) continue;
    w.index.push_back(static_cast<int>(k));
    if (o.time <= s + u && o.event == 1) {
      const double gt = g.left_limit(o.time);
      w.weight.push_back(gt > 0.0 ? gs / gt : 0.0);
      w.status.push_back(1);
    } else if (o.time > s + u) {
      w.weight.push_back(g_end > 0.0 ? gs / g_end : 0.0);
      w.status.push_back(0);
    } else {
      w.weight.push_back(0.0);
      w.status.push_back(-1);
    }
  }
  return w;
}

void check_sizes(const std::vector<double>& pi, const std::vector<Outcome>& outcomes) {
  if (pi.size() != outcomes.size()) throw ValidationError("predictions and outcomes differ in length");
}

double brier_with(const std::vector<double>& pi, double constant, bool use_constant, const Weighted& w) {
  if (w.index.empty()) throw UndefinedMetricError("no subjects at risk at the landmark");
  double sum = 0.0;
  for (std::size_t a = 0; a < w.index.size(); ++a) {
    if (w.status[a] < 0) continue;
    const double p = use_constant ? constant : pi[w.index[a]];
    const double r = (w.status[a] == 1 ? 1.0 : 0.0) - p;
    sum += w.weight[a] * r * r;
  }
  return sum / static_cast<double>(w.index.size());
}

double reference_with(const Weighted& w) {
  if (w.index.empty()) throw UndefinedMetricError("no subjects at risk at the landmark");
  double sum = 0.0;
  for (std::size_t a = 0; a < w.index.size(); ++a) {
    if (w.status[a] == 1) sum += w.weight[a];
  }
  return std::min(1.0, sum / static_cast<double>(w.index.size()));
}

// 1 - KM survival at `end` for a group of at-risk subjects.
double km_risk(const std::vector<Outcome>& group, double end) {
  std::vector<Outcome> sorted = group;
  std::sort(sorted.begin(), sorted.end(), [](const Outcome& a, const Outcome& b) { return a.time < b.time; });
  double surv = 1.0;
  std::size_t i = 0;
  const std::size_t n = sorted.size();
  while (i < n && sorted[i].time <= end) {
    const double t = sorted[i].time;
    int events = 0;
    std::size_t j = i;
    for (; j < n && sorted[j].time == t; ++j) events += sorted[j].event;
    const double at_risk = static_cast<double>(n - i);
    if (events > 0) surv *= 1.0 - events / at_risk;
    i = j;
  }
  return 1.0 - surv;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<double> finite(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v) {
    if (std::isfinite(x)) out.push_back(x);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Censoring estimate

CensoringEstimate::CensoringEstimate(std::vector<double> times, std::vector<double> survival)
    : times_(std::move(times)), survival_(std::move(survival)) {
  if (times_.size() != survival_.size()) throw ValidationError("censoring estimate sizes differ");
}

double CensoringEstimate::at(double t) const {
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return 1.0;
  return survival_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

double CensoringEstimate::left_limit(double t) const {
  const auto it = std::lower_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return 1.0;
  return survival_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

CensoringEstimate censoring_km(const std::vector<Outcome>& outcomes) {
  std::vector<Outcome> sorted = outcomes;
  std::sort(sorted.begin(), sorted.end(), [](const Outcome& a, const Outcome& b) { return a.time < b.time; });
  std::vector<double> times, values;
  double surv = 1.0;
  const std::size_t n = sorted.size();
  std::size_t i = 0;
  while (i < n) {
    const double t = sorted[i].time;
    int censored = 0;
    std::size_t j = i;
    for (; j < n && sorted[j].time == t; ++j) censored += sorted[j].event == 0 ? 1 : 0;
    if (censored > 0) {
      surv *= 1.0 - censored / static_cast<double>(n - i);
      times.push_back(t);
      values.push_back(surv);
    }
    i = j;
  }
  return CensoringEstimate(std::move(times), std::move(values));
}

// ---------------------------------------------------------------------------
// Metrics

double auc_ipcw(const std::vector<double>& pi, const std::vector<Outcome>& outcomes, double s, double u,
                const CensoringEstimate& g) {
  check_sizes(pi, outcomes);
  const Weighted w = weigh(outcomes, s, u, g);
  double num = 0.0, case_weight = 0.0, control_weight = 0.0;
  for (std::size_t a = 0; a < w.index.size(); ++a) {
    if (w.status[a] == 1) case_weight += w.weight[a];
    if (w.status[a] == 0) control_weight += w.weight[a];
  }
  if (!(case_weight > 0.0)) throw UndefinedMetricError("no cases in the prediction window");
  if (!(control_weight > 0.0)) throw UndefinedMetricError("no controls beyond the prediction window");
  for (std::size_t a = 0; a < w.index.size(); ++a) {
    if (w.status[a] != 1 || w.weight[a] == 0.0) continue;
    const double pa = pi[w.index[a]];
    double concordant = 0.0;
    for (std::size_t b = 0; b < w.index.size(); ++b) {
      if (w.status[b] != 0) continue;
      const double pb = pi[w.index[b]];
      if (pa > pb) {
        concordant += w.weight[b];
      } else if (pa == pb) {
        concordant += 0.5 * w.weight[b];
      }
    }
    num += w.weight[a] * concordant;
  }
  return num / (case_weight * control_weight);
}

double brier_ipcw(const std::vector<double>& pi, const std::vector<Outcome>& outcomes, double s, double u,
                  const CensoringEstimate& g) {
  check_sizes(pi, outcomes);
  return brier_with(pi, 0.0, false, weigh(outcomes, s, u, g));
}

double reference_risk(const std::vector<Outcome>& outcomes, double s, double u, const CensoringEstimate& g) {
  return reference_with(weigh(outcomes, s, u, g));
}

double r2_criterion(const std::vector<double>& pi, const std::vector<Outcome>& outcomes, double s, double u,
                    const CensoringEstimate& g) {
  check_sizes(pi, outcomes);
  const Weighted w = weigh(outcomes, s, u, g);
  const double bs0 = brier_with(pi, reference_with(w), true, w);
  if (!(bs0 > 0.0)) throw UndefinedMetricError("reference Brier score is zero");
  return 1.0 - brier_with(pi, 0.0, false, w) / bs0;
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return kNaN;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : kNaN;
}

CalibrationTable calibration_deciles(const std::vector<double>& pi, const std::vector<Outcome>& outcomes, double s,
                                     double u) {
  check_sizes(pi, outcomes);
  std::vector<int> idx;
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    if (outcomes[k].time > s) idx.push_back(static_cast<int>(k));
  }
  if (idx.size() < 10) throw UndefinedMetricError("fewer than 10 subjects at risk for decile calibration");
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return pi[a] < pi[b]; });
  CalibrationTable table;
  std::set<double> distinct;
  for (int k : idx) distinct.insert(pi[k]);
  table.ties = distinct.size() < 10;
  const std::size_t n = idx.size();
  for (int d = 0; d < 10; ++d) {
    const std::size_t lo = n * d / 10, hi = n * (d + 1) / 10;
    std::vector<Outcome> group;
    double sum = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      sum += pi[idx[i]];
      group.push_back(outcomes[idx[i]]);
    }
    table.predicted.push_back(sum / static_cast<double>(hi - lo));
    table.observed.push_back(km_risk(group, s + u));
  }
  // A single predicted value leaves the slope undefined; bin means of equal
  // values may still differ in the last bit.
  table.slope = distinct.size() > 1 ? least_squares_slope(table.predicted, table.observed)
                                    : std::numeric_limits<double>::quiet_NaN();
  return table;
}

// ---------------------------------------------------------------------------
// Residual diagnostics

std::vector<QQPoint> marginal_residual_qq(const ParameterState& estimate, const std::vector<SubjectRecord>& records,
                                          const ModelSpec& spec) {
  const Eigen::MatrixXd sigma_b = estimate.covariance();
  const double s2 = estimate.sigma * estimate.sigma;
  std::vector<double> res;
  for (const auto& r : records) {
    const SubjectDesign d = build_subject_design(r, spec, true);
    for (int j = 0; j < d.num_measurements(); ++j) {
      Eigen::Map<const Eigen::VectorXd> x(d.x.data() + j * d.p, d.p);
      Eigen::Map<const Eigen::VectorXd> z(d.d.data() + j * d.q, d.q);
      const double var = z.dot(sigma_b * z) + s2;
      res.push_back((d.values[j] - x.dot(estimate.alpha)) / std::sqrt(var));
    }
  }
  std::sort(res.begin(), res.end());
  const boost::math::normal_distribution<double> normal;
  std::vector<QQPoint> out(res.size());
  const double n = static_cast<double>(res.size());
  for (std::size_t i = 0; i < res.size(); ++i) {
    out[i].theoretical = boost::math::quantile(normal, (static_cast<double>(i) + 0.5) / n);
    out[i].empirical = res[i];
  }
  return out;
}

ParameterState posterior_median_state(const PosteriorDraws& draws, const ModelSpec& spec) {
  ParameterState s = ParameterState::zeros(spec);
  auto med = [&](const std::string& name) { return median_of(draws.get(name)); };
  for (int k = 0; k < spec.num_fixed(); ++k) s.alpha[k] = med("alpha[" + std::to_string(k + 1) + "]");
  for (int k = 0; k < spec.num_covariates(); ++k) s.omega[k] = med("omega[" + std::to_string(k + 1) + "]");
  s.sigma = med("sigma");
  s.log_lambda = med("log_lambda");
  s.log_nu = med("log_nu");
  if (draws.has("phi")) s.phi = med("phi");
  if (draws.has("delta")) s.delta = med("delta");
  if (draws.has("eta1")) s.eta_value = med("eta1");
  if (draws.has("eta2")) s.eta_slope = med("eta2");
  const int q = spec.num_random();
  Eigen::MatrixXd median(q, q);
  std::vector<double> entry(draws.rows());
  std::vector<Eigen::MatrixXd> cov(draws.rows());
  for (int row = 0; row < draws.rows(); ++row) cov[row] = draws.state(row, spec).covariance();
  for (int a = 0; a < q; ++a) {
    for (int b = 0; b < q; ++b) {
      for (int row = 0; row < draws.rows(); ++row) entry[row] = cov[row](a, b);
      median(a, b) = median_of(entry);
    }
  }
  const Eigen::VectorXd sd = median.diagonal().cwiseSqrt();
  const Eigen::MatrixXd corr = sd.cwiseInverse().asDiagonal() * median * sd.cwiseInverse().asDiagonal();
  Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() == Eigen::Success) {
    s.scales = sd;
    s.corr_cholesky = llt.matrixL();
  } else {
    for (int k = 0; k < q; ++k) s.scales[k] = med("R[" + std::to_string(k + 1) + "]");
  }
  return s;
}

// ---------------------------------------------------------------------------
// Landmark evaluation

double median_of(const std::vector<double>& v) {
  const auto f = finite(v);
  return f.empty() ? kNaN : quantile(f, 0.5);
}

std::vector<Outcome> outcomes_of(const std::vector<SubjectRecord>& records) {
  std::vector<Outcome> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.event_time, r.event});
  return out;
}

LandmarkMetrics evaluate_landmark(const std::vector<PredictionResult>& predictions,
                                  const std::vector<SubjectRecord>& records, double landmark, int horizon_index,
                                  const CensoringEstimate& g) {
  std::map<std::string, const SubjectRecord*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;
  std::vector<const PredictionResult*> used;
  std::vector<Outcome> outcomes;
  for (const auto& p : predictions) {
    if (p.landmark != landmark) continue;
    const auto it = by_id.find(p.id);
    if (it == by_id.end()) throw ValidationError("no outcome for predicted subject '" + p.id + "'");
    if (!(it->second->event_time > landmark)) continue;
    used.push_back(&p);
    outcomes.push_back({it->second->event_time, it->second->event});
  }
  LandmarkMetrics m;
  m.landmark = landmark;
  if (used.empty()) throw UndefinedMetricError("no predictions at landmark " + fmt(landmark));
  const double u = used.front()->horizons.at(horizon_index);
  m.horizon = u;
  m.at_risk = static_cast<int>(used.size());
  for (const auto& o : outcomes) {
    if (o.time <= landmark + u && o.event == 1) ++m.cases;
    if (o.time > landmark + u) ++m.controls;
  }
  const Eigen::Index draws = used.front()->pi.rows();
  for (const auto* p : used) {
    if (p->pi.rows() != draws) throw ValidationError("predictions use different numbers of draws");
  }
  std::vector<double> pi(used.size());
  bool auc_undefined = false, tie_warned = false;
  for (Eigen::Index k = 0; k < draws; ++k) {
    for (std::size_t i = 0; i < used.size(); ++i) pi[i] = used[i]->pi(k, horizon_index);
    try {
      m.auc.push_back(auc_ipcw(pi, outcomes, landmark, u, g));
    } catch (const UndefinedMetricError&) {
      auc_undefined = true;
    }
    m.brier.push_back(brier_ipcw(pi, outcomes, landmark, u, g));
    try {
      m.r2.push_back(r2_criterion(pi, outcomes, landmark, u, g));
    } catch (const UndefinedMetricError&) {
    }
    try {
      CalibrationTable t = calibration_deciles(pi, outcomes, landmark, u);
      if (t.ties) tie_warned = true;
      m.slope.push_back(t.slope);
      m.calibration.push_back(std::move(t));
    } catch (const UndefinedMetricError&) {
    }
  }
  if (auc_undefined) m.warnings.push_back("AUC undefined at s=" + fmt(landmark) + ": no cases or no controls");
  if (tie_warned) m.warnings.push_back("fewer than 10 distinct predictions: decile bins split ties");
  if (m.calibration.empty()) m.warnings.push_back("calibration skipped: fewer than 10 subjects at risk");
  return m;
}

void write_metric_summary(const std::vector<LandmarkMetrics>& metrics, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << "landmark,horizon,metric,p2.5,p50,p97.5\n";
  for (const auto& m : metrics) {
    const std::pair<const char*, const std::vector<double>*> rows[] = {
        {"auc", &m.auc}, {"brier", &m.brier}, {"r2", &m.r2}, {"calibration_slope", &m.slope}};
    for (const auto& [name, values] : rows) {
      const auto f = finite(*values);
      out << fmt(m.landmark) << ',' << fmt(m.horizon) << ',' << name;
      if (f.empty()) {
        out << ",NA,NA,NA\n";
      } else {
        out << ',' << fmt(quantile(f, 0.025)) << ',' << fmt(quantile(f, 0.5)) << ',' << fmt(quantile(f, 0.975))
            << '\n';
      }
    }
  }
}

void write_calibration_summary(const std::vector<LandmarkMetrics>& metrics, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << "landmark,horizon,decile,predicted_p2.5,predicted_p50,predicted_p97.5,observed_p2.5,observed_p50,"
         "observed_p97.5\n";
  for (const auto& m : metrics) {
    if (m.calibration.empty()) continue;
    for (int d = 0; d < 10; ++d) {
      std::vector<double> pred, obs;
      for (const auto& t : m.calibration) {
        pred.push_back(t.predicted[d]);
        obs.push_back(t.observed[d]);
      }
      out << fmt(m.landmark) << ',' << fmt(m.horizon) << ',' << d + 1 << ',' << fmt(quantile(pred, 0.025)) << ','
          << fmt(quantile(pred, 0.5)) << ',' << fmt(quantile(pred, 0.975)) << ',' << fmt(quantile(obs, 0.025)) << ','
          << fmt(quantile(obs, 0.5)) << ',' << fmt(quantile(obs, 0.975)) << '\n';
    }
  }
}

}  // namespace rjm
