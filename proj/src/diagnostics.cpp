#include "rjm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rjm/error.hpp"

namespace rjm {
namespace {

std::vector<std::vector<double>> split(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    if (half < 2) continue;
    out.emplace_back(c.begin(), c.begin() + half);
    out.emplace_back(c.end() - half, c.end());
  }
  if (out.size() < 2) throw DomainError("rhat: need at least two split segments of two or more draws");
  return out;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double variance_of(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / (v.size() - 1.0);
}

}  // namespace

double rhat(const std::vector<std::vector<double>>& chains) {
  const auto seg = split(chains);
  const double m = static_cast<double>(seg.size());
  std::size_t n_min = seg[0].size();
  for (const auto& s : seg) n_min = std::min(n_min, s.size());
  const double n = static_cast<double>(n_min);
  std::vector<double> means, vars;
  for (const auto& s : seg) {
    const double mu = mean_of(s);
    means.push_back(mu);
    vars.push_back(variance_of(s, mu));
  }
  const double grand = mean_of(means);
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= n / (m - 1.0);
  const double w = mean_of(vars);
  if (w == 0.0) return b == 0.0 ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  const auto seg = split(chains);
  const int m = static_cast<int>(seg.size());
  std::size_t n_min = seg[0].size();
  for (const auto& s : seg) n_min = std::min(n_min, s.size());
  const int n = static_cast<int>(n_min);

  std::vector<double> means(m), vars(m);
  std::vector<std::vector<double>> acov(m, std::vector<double>(n, 0.0));
  for (int c = 0; c < m; ++c) {
    means[c] = std::accumulate(seg[c].begin(), seg[c].begin() + n, 0.0) / n;
    for (int lag = 0; lag < n; ++lag) {
      double s = 0.0;
      for (int t = 0; t + lag < n; ++t) s += (seg[c][t] - means[c]) * (seg[c][t + lag] - means[c]);
      acov[c][lag] = s / n;
    }
    vars[c] = acov[c][0] * n / (n - 1.0);
  }
  const double w = mean_of(vars);
  const double grand = mean_of(means);
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b = b * n / (m - 1.0);
  const double var_plus = (n - 1.0) / n * w + b / n;
  if (!(var_plus > 0.0)) return std::numeric_limits<double>::quiet_NaN();

  auto rho = [&](int lag) {
    double s = 0.0;
    for (int c = 0; c < m; ++c) s += acov[c][lag];
    return 1.0 - (w - s / m) / var_plus;
  };
  // Geyer: sum consecutive pairs while positive, enforcing monotonicity.
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (int t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(m) * n));
  return m * n / tau;
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw DomainError("quantile: no values");
  if (!(prob >= 0.0 && prob <= 1.0)) throw DomainError("quantile: probability outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (values.size() - 1.0) * prob;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - lo) * (values[hi] - values[lo]);
}

TraceSummary trace_summary(const std::vector<double>& values) {
  if (values.empty()) throw DomainError("trace_summary: no draws");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  auto q = [&](double p) {
    const double h = (sorted.size() - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - lo) * (sorted[hi] - sorted[lo]);
  };
  TraceSummary s;
  s.p025 = q(0.025);
  s.p50 = q(0.5);
  s.p975 = q(0.975);
  s.mean = mean_of(values);
  s.sd = values.size() > 1 ? std::sqrt(variance_of(values, s.mean)) : 0.0;
  return s;
}

Convergence convergence_verdict(double r, double warn, double fail) {
  if (std::isnan(r) || r >= fail) return Convergence::Fail;
  if (r >= warn) return Convergence::Warn;
  return Convergence::Ok;
}

std::string to_string(Convergence c) {
  switch (c) {
    case Convergence::Ok: return "ok";
    case Convergence::Warn: return "warn";
    case Convergence::Fail: return "fail";
  }
  return "?";
}

}  // namespace rjm
