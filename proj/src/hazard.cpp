#include "rjm/hazard.hpp"

#include <cmath>
#include <sstream>

#include "rjm/error.hpp"

namespace rjm {
namespace {

// QUADPACK qk15 abscissae and Kronrod weights on [-1, 1].
constexpr double kXgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr double kWgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};

double linear_predictor(const HazardContext& ctx, const ParameterState& params) {
  double lp = 0.0;
  if (ctx.covariates.size() != params.omega.size()) {
    throw DomainError("hazard: covariate and omega dimensions differ");
  }
  if (ctx.covariates.size() > 0) lp = ctx.covariates.dot(params.omega);
  return lp;
}

}  // namespace

QuadratureRule QuadratureRule::gauss_kronrod15(int panels) {
  if (panels < 1) throw DomainError("quadrature: panels must be >= 1");
  QuadratureRule rule;
  const double width = 1.0 / panels;
  for (int p = 0; p < panels; ++p) {
    const double mid = (p + 0.5) * width;
    const double half = 0.5 * width;
    for (int k = 0; k < 8; ++k) {
      const double w = kWgk[k] * half;
      if (k == 7) {
        rule.nodes.push_back(mid);
        rule.weights.push_back(w);
      } else {
        rule.nodes.push_back(mid - half * kXgk[k]);
        rule.weights.push_back(w);
        rule.nodes.push_back(mid + half * kXgk[k]);
        rule.weights.push_back(w);
      }
    }
  }
  for (double u : rule.nodes) rule.log_nodes.push_back(std::log(u));
  return rule;
}

HazardContext HazardContext::from_design(const SubjectDesign& design, const Eigen::VectorXd& alpha,
                                         const Eigen::VectorXd& effects) {
  if (alpha.size() != design.p || effects.size() != design.q) {
    throw DomainError("hazard context: parameter dimensions do not match the design");
  }
  HazardContext ctx;
  ctx.covariates = Eigen::Map<const Eigen::VectorXd>(design.c.data(), design.r);
  for (int k = 0; k < design.p; ++k) {
    ctx.value_intercept += design.x_const[k] * alpha[k];
    ctx.value_slope += design.x_time[k] * alpha[k];
  }
  for (int k = 0; k < design.q; ++k) {
    ctx.value_intercept += design.d_const[k] * effects[k];
    ctx.value_slope += design.d_time[k] * effects[k];
  }
  return ctx;
}

double log_hazard(double t, const HazardContext& ctx, const ParameterState& params) {
  if (!(t > 0.0)) throw DomainError("log_hazard: t must be positive");
  const double nu = params.nu();
  return params.log_lambda + params.log_nu + (nu - 1.0) * std::log(t) +
         linear_predictor(ctx, params) + params.eta_value * ctx.current_value(t) +
         params.eta_slope * ctx.slope(t);
}

double cumulative_hazard(double T, const HazardContext& ctx, const ParameterState& params,
                         int panels) {
  if (!(T > 0.0)) throw DomainError("cumulative_hazard: T must be positive");
  const QuadratureRule rule = QuadratureRule::gauss_kronrod15(panels);
  const double nu = params.nu();
  const double rate = params.eta_value * ctx.value_slope;
  double integral = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double tk = T * std::exp(rule.log_nodes[k] / nu);
    const double f = std::exp(rate * tk);
    if (!std::isfinite(f)) {
      std::ostringstream msg;
      msg << "cumulative_hazard: non-finite integrand at node t=" << tk << " (node " << k << ")";
      throw NumericalError(msg.str());
    }
    integral += rule.weights[k] * f;
  }
  const double log_scale = params.log_lambda + linear_predictor(ctx, params) +
                           params.eta_value * ctx.value_intercept +
                           params.eta_slope * ctx.value_slope + nu * std::log(T);
  const double h = std::exp(log_scale) * integral;
  if (!std::isfinite(h)) throw NumericalError("cumulative_hazard: non-finite result");
  return h;
}

double interval_hazard(double a, double b, const HazardContext& ctx, const ParameterState& params,
                       int panels) {
  if (!(a >= 0.0) || !(b >= a)) throw DomainError("interval_hazard: need 0 <= a <= b");
  if (b == a) return 0.0;
  if (a == 0.0) return cumulative_hazard(b, ctx, params, panels);
  const QuadratureRule rule = QuadratureRule::gauss_kronrod15(panels);
  const double nu = params.nu();
  const double rate = params.eta_value * ctx.value_slope;
  const double log_scale = params.log_lambda + params.log_nu + linear_predictor(ctx, params) +
                           params.eta_value * ctx.value_intercept + params.eta_slope * ctx.value_slope;
  const double width = b - a;
  double integral = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double tk = a + width * rule.nodes[k];
    integral += rule.weights[k] * std::exp(log_scale + (nu - 1.0) * std::log(tk) + rate * tk);
  }
  const double h = width * integral;
  if (std::isnan(h)) throw NumericalError("interval_hazard: undefined result");
  return h;
}

double log_survival(double T, const HazardContext& ctx, const ParameterState& params, int panels) {
  return -cumulative_hazard(T, ctx, params, panels);
}

}  // namespace rjm
