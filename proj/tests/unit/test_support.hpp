#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "rjm/posterior.hpp"
#include "rjm/types.hpp"

namespace rjm::testing {

// Small cohort with 1-4 visits per subject and mixed event status.
inline std::vector<SubjectRecord> toy_records(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<SubjectRecord> out;
  for (int i = 0; i < n; ++i) {
    SubjectRecord r;
    r.id = "s" + std::to_string(i + 1);
    r.baseline["age"] = normal(rng);
    const int m = 1 + static_cast<int>(unif(rng) * 4);
    double t = 0.0;
    for (int j = 0; j < m; ++j) {
      r.measurements.push_back({t, 0.5 + 0.1 * t + 0.3 * normal(rng)});
      t += 0.5 + unif(rng);
    }
    r.event_time = t + unif(rng);
    r.event = i % 2;
    out.push_back(r);
  }
  return out;
}

inline double central_difference(const JointPosterior& post, const Eigen::VectorXd& u, int k, double h) {
  Eigen::VectorXd a = u, b = u;
  a[k] += h;
  b[k] -= h;
  return (post.log_density(a) - post.log_density(b)) / (2.0 * h);
}

// Relative tolerance with an absolute floor for components near zero.
inline bool relative_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace rjm::testing

#include "rjm/draws.hpp"

namespace rjm::testing {

// `rows` identical draws of `state` in one chain.
inline PosteriorDraws repeated_draws(const ParameterState& state, const ModelSpec& spec, int rows) {
  PosteriorDraws d;
  d.columns = global_columns(spec);
  std::vector<double> row;
  append_globals(state, spec, row);
  d.values.resize(rows, static_cast<int>(row.size()));
  for (int r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < row.size(); ++k) d.values(r, static_cast<int>(k)) = row[k];
    d.chain.push_back(1);
    d.log_density.push_back(0.0);
    d.divergent.push_back(0);
    d.tree_depth.push_back(0);
    d.stepsize.push_back(0.0);
    d.energy_error.push_back(0.0);
  }
  return d;
}

}  // namespace rjm::testing
