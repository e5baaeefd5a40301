#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "rjm/types.hpp"

namespace rjm {

struct DesignRow {
  Eigen::VectorXd x;  // fixed effects, length p
  Eigen::VectorXd d;  // random effects, length q
  Eigen::VectorXd c;  // survival covariates, length r
};

// A subject's design flattened for the likelihood kernels. Every term is
// affine in time, so x(t) = x_const + t * x_time (likewise d), which gives
// Y*(t) and its time derivative without re-reading the formula.
struct SubjectDesign {
  std::string id;
  int p = 0, q = 0, r = 0;
  std::vector<double> times;
  std::vector<double> values;
  std::vector<double> x;  // m x p, row-major
  std::vector<double> d;  // m x q, row-major
  std::vector<double> x_const, x_time;
  std::vector<double> d_const, d_time;
  std::vector<double> c;
  double event_time = 0.0;
  int event = 0;

  int num_measurements() const { return static_cast<int>(times.size()); }
  std::vector<DesignRow> rows() const;
};

// One row per measurement. Throws ValidationError naming a missing covariate,
// or when the record has no measurements.
std::vector<DesignRow> build_design(const SubjectRecord& record, const ModelSpec& spec);

// As build_design; `allow_empty` admits m = 0 (prediction with prior-only
// latents).
SubjectDesign build_subject_design(const SubjectRecord& record, const ModelSpec& spec,
                                   bool allow_empty = false);

}  // namespace rjm
