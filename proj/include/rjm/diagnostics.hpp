#pragma once

#include <string>
#include <vector>

namespace rjm {

// Split-chain potential scale reduction. Each chain is halved (the middle
// draw is dropped for odd lengths). Throws DomainError when fewer than two
// segments of at least two draws are available; returns NaN when every
// segment is constant with a common value, +inf when constant segments
// disagree.
double rhat(const std::vector<std::vector<double>>& chains);

// Effective sample size over split chains with Geyer's initial monotone
// sequence truncation.
double effective_sample_size(const std::vector<std::vector<double>>& chains);

// Type-7 (linear interpolation) quantile of unsorted data.
double quantile(std::vector<double> values, double prob);

struct TraceSummary {
  double p025 = 0.0, p50 = 0.0, p975 = 0.0;
  double mean = 0.0, sd = 0.0;
};

TraceSummary trace_summary(const std::vector<double>& values);

enum class Convergence { Ok, Warn, Fail };

// R-hat verdict: warn at or above `warn`, fail at or above `fail`; NaN fails.
Convergence convergence_verdict(double rhat_value, double warn = 1.05, double fail = 1.1);
std::string to_string(Convergence c);

}  // namespace rjm
