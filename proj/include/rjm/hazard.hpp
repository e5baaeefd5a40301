#pragma once

#include <Eigen/Dense>
#include <vector>

#include "rjm/design.hpp"
#include "rjm/types.hpp"

namespace rjm {

// Gauss-Kronrod 15-point rule mapped onto (0, 1) and repeated over `panels`
// equal sub-intervals.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::vector<double> log_nodes;

  static QuadratureRule gauss_kronrod15(int panels = 1);
};

// Subject-level inputs of the hazard. The marker trajectory is affine in t
// for the supported design grammar: Y*(t) = intercept + slope * t.
struct HazardContext {
  Eigen::VectorXd covariates;
  double value_intercept = 0.0;
  double value_slope = 0.0;

  double current_value(double t) const { return value_intercept + value_slope * t; }
  double slope(double /*t*/) const { return value_slope; }

  static HazardContext from_design(const SubjectDesign& design, const Eigen::VectorXd& alpha,
                                   const Eigen::VectorXd& effects);
};

// log h(t) = log lambda + log nu + (nu - 1) log t + c'omega
//            + eta_1 Y*(t) + eta_2 dY*(t)/dt
double log_hazard(double t, const HazardContext& ctx, const ParameterState& params);

// Integral of h over (0, T). Substituting w = (t / T)^nu turns the Weibull
// factor into T^nu and leaves exp(eta_1 * slope * T w^(1/nu)) on (0, 1),
// integrated with the Gauss-Kronrod rule. Exact when eta_1 * slope = 0.
double cumulative_hazard(double T, const HazardContext& ctx, const ParameterState& params,
                         int panels = 1);

// Integral of h over (a, b] for 0 <= a <= b. Uses cumulative_hazard when
// a = 0; otherwise the integrand is smooth and the rule is applied on (a, b)
// directly, so the result is never negative. Overflow yields +inf.
double interval_hazard(double a, double b, const HazardContext& ctx, const ParameterState& params,
                       int panels = 1);

double log_survival(double T, const HazardContext& ctx, const ParameterState& params,
                    int panels = 1);

}  // namespace rjm
