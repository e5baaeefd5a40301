#include "rjm/posterior.hpp"

#include <array>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "rjm/autodiff.hpp"
#include "rjm/distributions.hpp"
#include "rjm/error.hpp"

namespace rjm {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kMaxEffects = 6;

inline double square(double x) { return x * x; }

// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Cauchy(0, scale) log density and its derivative.
inline double cauchy_lp(double x, double scale, double* d) {
  const double s2 = scale * scale;
  *d += -2.0 * x / (s2 + x * x);
  return -std::log(std::numbers::pi * scale) - std::log1p(x * x / s2);
}

// Half-Cauchy(0, scale) on exp(log_x), plus the log-Jacobian log_x.
inline double log_half_cauchy_lp(double log_x, double scale, double* d) {
  const double x2 = std::exp(2.0 * log_x);
  const double s2 = scale * scale;
  *d += 1.0 - 2.0 * x2 / (s2 + x2);
  return std::log(2.0 / (std::numbers::pi * scale)) - std::log1p(x2 / s2) + log_x;
}

// Degrees of freedom mapped to (lower, upper) by a scaled logistic. Returns
// the uniform prior plus log-Jacobian; `dlp` receives its derivative and
// `dvalue` the derivative of the constrained value.
inline double bounded_df(double y, const PriorSettings& pr, double* value, double* dlp, double* dvalue) {
  const double width = pr.df_upper - pr.df_lower;
  const double s = logistic(y);
  *value = pr.df_lower + width * s;
  *dvalue = width * s * (1.0 - s);
  *dlp += 1.0 - 2.0 * s;
  // -log(width) from the prior cancels log(width) from the Jacobian.
  return -softplus(-y) - softplus(y);
}

// Cholesky factor of a correlation matrix from unconstrained partial
// correlations (tanh), row by row. Returns the log-Jacobian of the map from
// `y` to the free elements of Omega; adds the LKJ log density when
// `lkj_shape` > 0. `constant` lifts doubles into T.
template <class T, class MakeConst>
T corr_block(const T* y, int q, double lkj_shape, std::vector<T>& chol, MakeConst constant) {
  using std::log;
  using std::log1p;
  using std::sqrt;
  using std::tanh;
  chol.assign(static_cast<std::size_t>(q) * q, constant(0.0));
  chol[0] = constant(1.0);
  T lp = constant(0.0);
  int k = 0;
  for (int i = 1; i < q; ++i) {
    T z = tanh(y[k++]);
    lp = lp + log1p(-square(z));
    chol[i * q] = z;
    T sum_sq = square(z);
    for (int j = 1; j < i; ++j) {
      z = tanh(y[k++]);
      lp = lp + log1p(-square(z));
      lp = lp + 0.5 * log1p(-sum_sq);
      T lij = z * sqrt(1.0 - sum_sq);
      chol[i * q + j] = lij;
      sum_sq = sum_sq + square(lij);
    }
    T lii = sqrt(1.0 - sum_sq);
    chol[i * q + i] = lii;
    T log_lii = log(lii);
    // Jacobian from L to Omega.
    lp = lp + static_cast<double>(q - i - 1) * log_lii;
    if (lkj_shape > 0.0) lp = lp + (2.0 * (lkj_shape - 1.0)) * log_lii;
  }
  if (lkj_shape > 0.0) lp = lp - lkj_log_normalizer(q, lkj_shape);
  return lp;
}

double ig_const(double a) { return a * std::log(a) - std::lgamma(a); }
double ig_dconst(double a) { return 0.5 * (std::log(a) + 1.0 - boost::math::digamma(a)); }

// Everything derived from the global block of one evaluation.
struct GlobalEval {
  GlobalValues values;
  double log_density = 0.0;  // priors and Jacobians of the globals
  double dphi = 0.0, ddelta = 0.0;
  ad::Tape tape;
  std::vector<ad::Var> corr_inputs;
  std::vector<ad::Var> corr_chol;
  ad::Var corr_lp;
};

// Fills `eval` from the global coordinates of `u`, adding the gradient of the
// global priors and Jacobians into `grad` (when non-null).
void evaluate_globals(const ModelSpec& spec, const ParameterLayout& layout, const QuadratureRule& rule,
                      const double* u, GlobalEval& eval, double* grad) {
  const PriorSettings& pr = spec.priors;
  const int p = layout.p, q = layout.q, r = layout.r;
  GlobalValues& g = eval.values;
  g.p = p;
  g.q = q;
  g.r = r;
  g.effect_mixing = layout.effect_mixing;
  g.error_mixing = layout.error_mixing;
  g.rule = &rule;
  std::vector<double> scratch(layout.num_globals(), 0.0);
  double* d = grad ? grad : scratch.data();
  double lp = 0.0;

  g.alpha.resize(p);
  for (int k = 0; k < p; ++k) {
    const int at = layout.alpha + k;
    g.alpha[k] = u[at];
    lp += cauchy_lp(u[at], k == 0 ? pr.intercept_scale : pr.coef_scale, d + at);
  }
  g.scales.resize(q);
  for (int k = 0; k < q; ++k) {
    const int at = layout.log_scales + k;
    g.scales[k] = std::exp(u[at]);
    lp += log_half_cauchy_lp(u[at], pr.scale_scale, d + at);
  }

  g.corr_cholesky = Eigen::MatrixXd::Identity(q, q);
  if (q > 1) {
    eval.tape.clear();
    eval.corr_inputs.clear();
    for (int k = 0; k < layout.num_corr; ++k) eval.corr_inputs.push_back(eval.tape.variable(u[layout.corr + k]));
    auto make_const = [&](double v) { return eval.tape.constant(v); };
    eval.corr_lp = corr_block(eval.corr_inputs.data(), q, pr.lkj_shape, eval.corr_chol, make_const);
    for (int a = 0; a < q; ++a) {
      for (int b = 0; b <= a; ++b) g.corr_cholesky(a, b) = eval.corr_chol[a * q + b].value();
    }
    lp += eval.corr_lp.value();
  }

  g.log_sigma = u[layout.log_sigma];
  g.sigma = std::exp(g.log_sigma);
  lp += log_half_cauchy_lp(g.log_sigma, pr.scale_scale, d + layout.log_sigma);

  if (layout.phi >= 0) lp += bounded_df(u[layout.phi], pr, &g.phi, d + layout.phi, &eval.dphi);
  if (layout.delta >= 0) lp += bounded_df(u[layout.delta], pr, &g.delta, d + layout.delta, &eval.ddelta);

  g.log_lambda = u[layout.log_lambda];
  lp += cauchy_lp(g.log_lambda, pr.hazard_scale, d + layout.log_lambda);
  g.log_nu = u[layout.log_nu];
  lp += cauchy_lp(g.log_nu, pr.hazard_scale, d + layout.log_nu);
  g.omega.resize(r);
  for (int k = 0; k < r; ++k) {
    const int at = layout.omega + k;
    g.omega[k] = u[at];
    lp += cauchy_lp(u[at], pr.hazard_scale, d + at);
  }
  g.eta_value = 0.0;
  g.eta_slope = 0.0;
  if (layout.eta_value >= 0) {
    g.eta_value = u[layout.eta_value];
    lp += cauchy_lp(g.eta_value, pr.hazard_scale, d + layout.eta_value);
  }
  if (layout.eta_slope >= 0) {
    g.eta_slope = u[layout.eta_slope];
    lp += cauchy_lp(g.eta_slope, pr.hazard_scale, d + layout.eta_slope);
  }
  g.refresh_derived();
  eval.log_density = lp;
}

void scatter_adjoint(const ParameterLayout& layout, GlobalEval& eval, const GlobalAdjoint& adj,
                     double* grad) {
  for (int k = 0; k < layout.p; ++k) grad[layout.alpha + k] += adj.alpha[k];
  for (int k = 0; k < layout.q; ++k) grad[layout.log_scales + k] += adj.log_scales[k];
  grad[layout.log_sigma] += adj.log_sigma;
  if (layout.phi >= 0) grad[layout.phi] += adj.phi * eval.dphi;
  if (layout.delta >= 0) grad[layout.delta] += adj.delta * eval.ddelta;
  grad[layout.log_lambda] += adj.log_lambda;
  grad[layout.log_nu] += adj.log_nu;
  for (int k = 0; k < layout.r; ++k) grad[layout.omega + k] += adj.omega[k];
  if (layout.eta_value >= 0) grad[layout.eta_value] += adj.eta_value;
  if (layout.eta_slope >= 0) grad[layout.eta_slope] += adj.eta_slope;

  if (layout.q > 1) {
    const int q = layout.q;
    std::vector<double> seeds(eval.tape.size(), 0.0);
    seeds[eval.corr_lp.index()] += 1.0;
    for (int a = 1; a < q; ++a) {
      for (int b = 0; b <= a; ++b) seeds[eval.corr_chol[a * q + b].index()] += adj.corr_cholesky(a, b);
    }
    eval.tape.backward(seeds);
    for (int k = 0; k < layout.num_corr; ++k) grad[layout.corr + k] += seeds[eval.corr_inputs[k].index()];
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Layout

int local_block_size(const ModelSpec& spec, int num_measurements) {
  return spec.num_random() + (has_effect_mixing(spec.regime) ? 1 : 0) +
         (has_error_mixing(spec.regime) ? num_measurements : 0);
}

ParameterLayout::ParameterLayout(const ModelSpec& spec, const std::vector<int>& measurements_per_subject) {
  p = spec.num_fixed();
  q = spec.num_random();
  r = spec.num_covariates();
  effect_mixing = has_effect_mixing(spec.regime);
  error_mixing = has_error_mixing(spec.regime);
  int at = 0;
  alpha = at;
  at += p;
  log_scales = at;
  at += q;
  num_corr = q * (q - 1) / 2;
  corr = num_corr > 0 ? at : -1;
  at += num_corr;
  log_sigma = at++;
  if (effect_mixing) phi = at++;
  if (error_mixing) delta = at++;
  log_lambda = at++;
  log_nu = at++;
  omega = at;
  at += r;
  if (spec.link.current_value) eta_value = at++;
  if (spec.link.slope) eta_slope = at++;
  num_globals_ = at;
  for (int m : measurements_per_subject) {
    subject_offsets_.push_back(at);
    const int size = local_block_size(spec, m);
    subject_sizes_.push_back(size);
    at += size;
  }
  dimension_ = at;
}

std::string ParameterLayout::name(int index) const {
  std::ostringstream out;
  auto in = [&](int start, int count) { return start >= 0 && index >= start && index < start + count; };
  if (in(alpha, p)) out << "alpha[" << index - alpha + 1 << "]";
  else if (in(log_scales, q)) out << "log_R[" << index - log_scales + 1 << "]";
  else if (in(corr, num_corr)) out << "corr_raw[" << index - corr + 1 << "]";
  else if (index == log_sigma) out << "log_sigma";
  else if (index == phi) out << "phi_raw";
  else if (index == delta) out << "delta_raw";
  else if (index == log_lambda) out << "log_lambda";
  else if (index == log_nu) out << "log_nu";
  else if (in(omega, r)) out << "omega[" << index - omega + 1 << "]";
  else if (index == eta_value) out << "eta1";
  else if (index == eta_slope) out << "eta2";
  else {
    for (int i = 0; i < num_subjects(); ++i) {
      const int off = subject_offsets_[i];
      if (index < off || index >= off + subject_sizes_[i]) continue;
      int k = index - off;
      if (k < q) {
        out << "z[" << i + 1 << "," << k + 1 << "]";
      } else if (effect_mixing && k == q) {
        out << "log_V[" << i + 1 << "]";
      } else {
        out << "log_W[" << i + 1 << "," << k - q - (effect_mixing ? 1 : 0) + 1 << "]";
      }
      return out.str();
    }
    out << "coordinate[" << index << "]";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Globals

void GlobalValues::refresh_derived() {
  inv_sigma2 = 1.0 / (sigma * sigma);
  log_sigma = std::log(sigma);
  nu = std::exp(log_nu);
  if (effect_mixing) {
    phi_const = ig_const(0.5 * phi);
    phi_dconst = ig_dconst(0.5 * phi);
  }
  if (error_mixing) {
    delta_const = ig_const(0.5 * delta);
    delta_dconst = ig_dconst(0.5 * delta);
  }
  if (rule) {
    node_power.resize(rule->nodes.size());
    for (std::size_t k = 0; k < rule->nodes.size(); ++k) node_power[k] = std::exp(rule->log_nodes[k] / nu);
  }
}

GlobalValues GlobalValues::from_state(const ParameterState& state, const ModelSpec& spec,
                                      const QuadratureRule& rule) {
  GlobalValues g;
  g.p = spec.num_fixed();
  g.q = spec.num_random();
  g.r = spec.num_covariates();
  g.alpha = state.alpha;
  g.scales = state.scales;
  g.corr_cholesky = state.corr_cholesky;
  g.omega = state.omega;
  g.sigma = state.sigma;
  g.effect_mixing = has_effect_mixing(spec.regime);
  g.error_mixing = has_error_mixing(spec.regime);
  g.phi = state.phi;
  g.delta = state.delta;
  g.log_lambda = state.log_lambda;
  g.log_nu = state.log_nu;
  g.eta_value = spec.link.current_value ? state.eta_value : 0.0;
  g.eta_slope = spec.link.slope ? state.eta_slope : 0.0;
  g.rule = &rule;
  g.refresh_derived();
  return g;
}

void GlobalAdjoint::reset(int p, int q, int r) {
  alpha.setZero(p);
  log_scales.setZero(q);
  omega.setZero(r);
  corr_cholesky.setZero(q, q);
  log_sigma = phi = delta = log_lambda = log_nu = eta_value = eta_slope = 0.0;
}

// ---------------------------------------------------------------------------
// Subject kernel

double subject_log_density(const SubjectDesign& design, const GlobalValues& g, const double* local,
                           double* local_grad, GlobalAdjoint* adj, double survival_time, int event) {
  const int p = g.p, q = g.q, m = design.num_measurements();
  const bool want_grad = local_grad != nullptr || adj != nullptr;

  const double* z = local;
  int at = q;
  double lv = 0.0, sv = 1.0;
  const int lv_at = g.effect_mixing ? at++ : -1;
  if (g.effect_mixing) {
    lv = local[lv_at];
    sv = std::exp(0.5 * lv);
  }
  const int lw_at = at;

  std::array<double, kMaxEffects> lz{}, effects{}, g_effects{};
  for (int a = 0; a < q; ++a) {
    double s = 0.0;
    for (int b = 0; b <= a; ++b) s += g.corr_cholesky(a, b) * z[b];
    lz[a] = s;
    effects[a] = sv * g.scales[a] * s;
  }

  double lp = -q * kHalfLog2Pi;
  for (int a = 0; a < q; ++a) lp -= 0.5 * z[a] * z[a];

  // Longitudinal measurements, with W_ij on the log scale when present.
  for (int j = 0; j < m; ++j) {
    const double* xj = design.x.data() + j * p;
    const double* dj = design.d.data() + j * q;
    double mu = 0.0;
    for (int k = 0; k < p; ++k) mu += xj[k] * g.alpha[k];
    for (int k = 0; k < q; ++k) mu += dj[k] * effects[k];
    const double resid = design.values[j] - mu;
    double precision = g.inv_sigma2;
    if (g.error_mixing) {
      const double lw = local[lw_at + j];
      const double w_inv = std::exp(-lw);
      const double a = 0.5 * g.delta;
      precision *= w_inv;
      const double quad = resid * resid * precision;
      lp += -kHalfLog2Pi - g.log_sigma - 0.5 * lw - 0.5 * quad;
      lp += g.delta_const - (a + 1.0) * lw - a * w_inv + lw;
      if (want_grad) {
        if (local_grad) local_grad[lw_at + j] += -0.5 + 0.5 * quad - a + a * w_inv;
        if (adj) adj->delta += g.delta_dconst - 0.5 * lw - 0.5 * w_inv;
      }
    } else {
      lp += -kHalfLog2Pi - g.log_sigma - 0.5 * resid * resid * precision;
    }
    if (want_grad) {
      const double e = resid * precision;
      for (int k = 0; k < q; ++k) g_effects[k] += e * dj[k];
      if (adj) {
        for (int k = 0; k < p; ++k) adj->alpha[k] += e * xj[k];
        adj->log_sigma += -1.0 + resid * e;
      }
    }
  }

  // Survival factor h(T)^E S(T).
  if (survival_time > 0.0) {
    double a = 0.0, b = 0.0;
    for (int k = 0; k < p; ++k) {
      a += design.x_const[k] * g.alpha[k];
      b += design.x_time[k] * g.alpha[k];
    }
    for (int k = 0; k < q; ++k) {
      a += design.d_const[k] * effects[k];
      b += design.d_time[k] * effects[k];
    }
    double lin = 0.0;
    for (int k = 0; k < g.r; ++k) lin += design.c[k] * g.omega[k];
    const double T = survival_time;
    const double log_t = std::log(T);
    const double rate = g.eta_value * b;
    const double A = std::exp(g.log_lambda + lin + g.eta_value * a + g.eta_slope * b + g.nu * log_t);
    const QuadratureRule& rule = *g.rule;
    double sum0 = 0.0, sum1 = 0.0, sum2 = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      const double tau = T * g.node_power[k];
      const double wk = rate == 0.0 ? rule.weights[k] : rule.weights[k] * std::exp(rate * tau);
      sum0 += wk;
      if (want_grad) {
        sum1 += wk * tau;
        sum2 += wk * tau * rule.log_nodes[k];
      }
    }
    const double H = A * sum0;
    const double E = event;
    if (event) {
      lp += g.log_lambda + g.log_nu + (g.nu - 1.0) * log_t + lin + g.eta_value * (a + b * T) + g.eta_slope * b;
    }
    lp -= H;
    if (want_grad) {
      const double m1 = A * sum1, m2 = A * sum2;
      const double da = g.eta_value * (E - H);
      const double db = E * (g.eta_value * T + g.eta_slope) - (g.eta_slope * H + g.eta_value * m1);
      for (int k = 0; k < q; ++k) g_effects[k] += da * design.d_const[k] + db * design.d_time[k];
      if (adj) {
        for (int k = 0; k < p; ++k) adj->alpha[k] += da * design.x_const[k] + db * design.x_time[k];
        adj->log_lambda += E - H;
        for (int k = 0; k < g.r; ++k) adj->omega[k] += (E - H) * design.c[k];
        adj->eta_value += E * (a + b * T) - (a * H + b * m1);
        adj->eta_slope += b * (E - H);
        adj->log_nu += E * (1.0 + g.nu * log_t) - g.nu * H * log_t + g.eta_value * b * m2 / g.nu;
      }
    }
  }

  // V_i ~ IG(phi/2, phi/2) on the log scale.
  if (g.effect_mixing) {
    const double a = 0.5 * g.phi;
    const double v_inv = std::exp(-lv);
    lp += g.phi_const - (a + 1.0) * lv - a * v_inv + lv;
    if (want_grad) {
      double dlv = -a + a * v_inv;
      for (int k = 0; k < q; ++k) dlv += 0.5 * g_effects[k] * effects[k];
      if (local_grad) local_grad[lv_at] += dlv;
      if (adj) adj->phi += g.phi_dconst - 0.5 * lv - 0.5 * v_inv;
    }
  }

  if (want_grad) {
    // B = sv * R (L z)
    std::array<double, kMaxEffects> scaled{};
    for (int a = 0; a < q; ++a) scaled[a] = sv * g.scales[a] * g_effects[a];
    if (local_grad) {
      for (int b = 0; b < q; ++b) {
        double s = -z[b];
        for (int a = b; a < q; ++a) s += g.corr_cholesky(a, b) * scaled[a];
        local_grad[b] += s;
      }
    }
    if (adj) {
      for (int a = 0; a < q; ++a) {
        adj->log_scales[a] += effects[a] * g_effects[a];
        for (int b = 0; b <= a; ++b) adj->corr_cholesky(a, b) += scaled[a] * z[b];
      }
    }
  }
  return std::isfinite(lp) ? lp : kNegInf;
}

// ---------------------------------------------------------------------------
// Reference components

double log_longitudinal(const ParameterState& state, const std::vector<SubjectDesign>& data) {
  double lp = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const SubjectDesign& s = data[i];
    const Eigen::VectorXd& b = state.effects.at(i);
    for (int j = 0; j < s.num_measurements(); ++j) {
      Eigen::Map<const Eigen::VectorXd> x(s.x.data() + j * s.p, s.p);
      Eigen::Map<const Eigen::VectorXd> d(s.d.data() + j * s.q, s.q);
      const double w = state.error_mixing.empty() ? 1.0 : state.error_mixing[i].at(j);
      lp += log_density_scaled_normal(s.values[j], x.dot(state.alpha) + d.dot(b), std::sqrt(w) * state.sigma);
    }
  }
  return lp;
}

double log_survival_likelihood(const ParameterState& state, const std::vector<SubjectDesign>& data,
                               int panels) {
  double lp = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const SubjectDesign& s = data[i];
    const HazardContext ctx = HazardContext::from_design(s, state.alpha, state.effects.at(i));
    if (s.event) lp += log_hazard(s.event_time, ctx, state);
    lp += log_survival(s.event_time, ctx, state, panels);
  }
  return lp;
}

double log_latent_prior(const ParameterState& state, const ModelSpec& spec) {
  const Eigen::MatrixXd cov = state.covariance();
  double lp = 0.0;
  const bool t_effects = has_effect_mixing(spec.regime);
  const bool t_errors = has_error_mixing(spec.regime);
  for (std::size_t i = 0; i < state.effects.size(); ++i) {
    const double v = t_effects ? state.effect_mixing.at(i) : 1.0;
    lp += log_density_mvnormal(state.effects[i], v * cov);
    if (t_effects) lp += log_density_inverse_gamma(v, 0.5 * state.phi, 0.5 * state.phi);
    if (t_errors) {
      for (double w : state.error_mixing.at(i)) lp += log_density_inverse_gamma(w, 0.5 * state.delta, 0.5 * state.delta);
    }
  }
  return lp;
}

double log_prior(const ParameterState& state, const ModelSpec& spec) {
  const PriorSettings& pr = spec.priors;
  double lp = 0.0;
  for (int k = 0; k < state.alpha.size(); ++k) {
    lp += log_density_cauchy(state.alpha[k], 0.0, k == 0 ? pr.intercept_scale : pr.coef_scale);
  }
  for (int k = 0; k < state.scales.size(); ++k) lp += log_density_half_cauchy(state.scales[k], pr.scale_scale);
  lp += log_density_lkj_corr_cholesky(state.corr_cholesky, pr.lkj_shape);
  lp += log_density_half_cauchy(state.sigma, pr.scale_scale);
  if (has_effect_mixing(spec.regime)) lp += log_density_uniform(state.phi, pr.df_lower, pr.df_upper);
  if (has_error_mixing(spec.regime)) lp += log_density_uniform(state.delta, pr.df_lower, pr.df_upper);
  lp += log_density_cauchy(state.log_lambda, 0.0, pr.hazard_scale);
  lp += log_density_cauchy(state.log_nu, 0.0, pr.hazard_scale);
  for (int k = 0; k < state.omega.size(); ++k) lp += log_density_cauchy(state.omega[k], 0.0, pr.hazard_scale);
  if (spec.link.current_value) lp += log_density_cauchy(state.eta_value, 0.0, pr.hazard_scale);
  if (spec.link.slope) lp += log_density_cauchy(state.eta_slope, 0.0, pr.hazard_scale);
  return lp;
}

Eigen::MatrixXd corr_cholesky_from_unconstrained(const Eigen::VectorXd& y, int dim) {
  if (y.size() != dim * (dim - 1) / 2) throw DomainError("corr transform: wrong number of coordinates");
  std::vector<double> chol;
  corr_block(y.data(), dim, 0.0, chol, [](double v) { return v; });
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim, dim);
  for (int a = 0; a < dim; ++a) {
    for (int b = 0; b <= a; ++b) out(a, b) = chol[a * dim + b];
  }
  return out;
}

Eigen::VectorXd corr_cholesky_to_unconstrained(const Eigen::MatrixXd& l) {
  const int dim = static_cast<int>(l.rows());
  Eigen::VectorXd y(dim * (dim - 1) / 2);
  int k = 0;
  for (int i = 1; i < dim; ++i) {
    double sum_sq = 0.0;
    for (int j = 0; j < i; ++j) {
      const double z = l(i, j) / std::sqrt(1.0 - sum_sq);
      if (!(std::abs(z) < 1.0)) throw DomainError("corr transform: not a valid correlation Cholesky factor");
      y[k++] = std::atanh(z);
      sum_sq += l(i, j) * l(i, j);
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// JointPosterior

namespace {

std::vector<int> measurement_counts(const std::vector<SubjectDesign>& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(s.num_measurements());
  return out;
}

std::vector<SubjectDesign> designs_for(const std::vector<SubjectRecord>& records, const ModelSpec& spec) {
  std::vector<SubjectDesign> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!(r.event_time > 0.0)) throw ValidationError("subject '" + r.id + "': event time must be positive");
    out.push_back(build_subject_design(r, spec));
  }
  return out;
}

}  // namespace

JointPosterior::JointPosterior(std::vector<SubjectDesign> data, ModelSpec spec)
    : data_(std::move(data)),
      spec_(std::move(spec)),
      layout_(spec_, measurement_counts(data_)),
      rule_(QuadratureRule::gauss_kronrod15(spec_.quadrature_panels)) {
  spec_.validate();
}

JointPosterior::JointPosterior(const std::vector<SubjectRecord>& records, ModelSpec spec)
    : JointPosterior(designs_for(records, spec), spec) {}

double JointPosterior::log_density_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const {
  grad.setZero(dimension());
  GlobalEval eval;
  evaluate_globals(spec_, layout_, rule_, u.data(), eval, grad.data());
  double lp = eval.log_density;
  if (!std::isfinite(lp)) return kNegInf;
  GlobalAdjoint adj;
  adj.reset(layout_.p, layout_.q, layout_.r);
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const int off = layout_.subject_offset(static_cast<int>(i));
    lp += subject_log_density(data_[i], eval.values, u.data() + off, grad.data() + off, &adj,
                              data_[i].event_time, data_[i].event);
  }
  if (!std::isfinite(lp)) return kNegInf;
  scatter_adjoint(layout_, eval, adj, grad.data());
  if (!grad.allFinite()) return kNegInf;
  return lp;
}

double JointPosterior::log_density(const Eigen::VectorXd& u) const {
  GlobalEval eval;
  evaluate_globals(spec_, layout_, rule_, u.data(), eval, nullptr);
  double lp = eval.log_density;
  if (!std::isfinite(lp)) return kNegInf;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const int off = layout_.subject_offset(static_cast<int>(i));
    lp += subject_log_density(data_[i], eval.values, u.data() + off, nullptr, nullptr, data_[i].event_time,
                              data_[i].event);
  }
  return std::isfinite(lp) ? lp : kNegInf;
}

Eigen::VectorXd JointPosterior::gradient(const Eigen::VectorXd& u) const {
  Eigen::VectorXd grad(dimension());
  GlobalEval eval;
  grad.setZero();
  evaluate_globals(spec_, layout_, rule_, u.data(), eval, grad.data());
  GlobalAdjoint adj;
  adj.reset(layout_.p, layout_.q, layout_.r);
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const int off = layout_.subject_offset(static_cast<int>(i));
    subject_log_density(data_[i], eval.values, u.data() + off, grad.data() + off, &adj, data_[i].event_time,
                        data_[i].event);
  }
  scatter_adjoint(layout_, eval, adj, grad.data());
  for (int k = 0; k < grad.size(); ++k) {
    if (!std::isfinite(grad[k])) {
      throw NumericalError("non-finite gradient component at " + layout_.name(k));
    }
  }
  return grad;
}

ParameterState JointPosterior::constrain(const Eigen::VectorXd& u) const {
  GlobalEval eval;
  evaluate_globals(spec_, layout_, rule_, u.data(), eval, nullptr);
  const GlobalValues& g = eval.values;
  ParameterState s;
  s.alpha = g.alpha;
  s.scales = g.scales;
  s.corr_cholesky = g.corr_cholesky;
  s.sigma = g.sigma;
  s.phi = g.phi;
  s.delta = g.delta;
  s.log_lambda = g.log_lambda;
  s.log_nu = g.log_nu;
  s.omega = g.omega;
  s.eta_value = g.eta_value;
  s.eta_slope = g.eta_slope;
  const int q = layout_.q;
  for (int i = 0; i < layout_.num_subjects(); ++i) {
    const double* local = u.data() + layout_.subject_offset(i);
    Eigen::Map<const Eigen::VectorXd> z(local, q);
    double v = 1.0;
    if (layout_.effect_mixing) {
      v = std::exp(local[q]);
      s.effect_mixing.push_back(v);
    }
    s.effects.push_back(std::sqrt(v) * g.scales.asDiagonal() * (g.corr_cholesky * z));
    if (layout_.error_mixing) {
      const double* lw = local + q + (layout_.effect_mixing ? 1 : 0);
      std::vector<double> w;
      for (int j = 0; j < data_[i].num_measurements(); ++j) w.push_back(std::exp(lw[j]));
      s.error_mixing.push_back(std::move(w));
    }
  }
  return s;
}

Eigen::VectorXd JointPosterior::unconstrain(const ParameterState& s) const {
  const PriorSettings& pr = spec_.priors;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(dimension());
  const int q = layout_.q;
  u.segment(layout_.alpha, layout_.p) = s.alpha;
  u.segment(layout_.log_scales, q) = s.scales.array().log().matrix();
  if (layout_.num_corr > 0) u.segment(layout_.corr, layout_.num_corr) = corr_cholesky_to_unconstrained(s.corr_cholesky);
  u[layout_.log_sigma] = std::log(s.sigma);
  auto logit_df = [&](double df) {
    const double x = (df - pr.df_lower) / (pr.df_upper - pr.df_lower);
    if (!(x > 0.0 && x < 1.0)) throw DomainError("degrees of freedom outside the prior support");
    return std::log(x) - std::log1p(-x);
  };
  if (layout_.phi >= 0) u[layout_.phi] = logit_df(s.phi);
  if (layout_.delta >= 0) u[layout_.delta] = logit_df(s.delta);
  u[layout_.log_lambda] = s.log_lambda;
  u[layout_.log_nu] = s.log_nu;
  if (layout_.r > 0) u.segment(layout_.omega, layout_.r) = s.omega;
  if (layout_.eta_value >= 0) u[layout_.eta_value] = s.eta_value;
  if (layout_.eta_slope >= 0) u[layout_.eta_slope] = s.eta_slope;
  const Eigen::MatrixXd rl = s.scales.asDiagonal() * s.corr_cholesky;
  for (int i = 0; i < layout_.num_subjects(); ++i) {
    double* local = u.data() + layout_.subject_offset(i);
    const double v = layout_.effect_mixing ? s.effect_mixing.at(i) : 1.0;
    Eigen::VectorXd z = rl.triangularView<Eigen::Lower>().solve(s.effects.at(i) / std::sqrt(v));
    for (int k = 0; k < q; ++k) local[k] = z[k];
    if (layout_.effect_mixing) local[q] = std::log(v);
    if (layout_.error_mixing) {
      double* lw = local + q + (layout_.effect_mixing ? 1 : 0);
      for (int j = 0; j < data_[i].num_measurements(); ++j) lw[j] = std::log(s.error_mixing.at(i).at(j));
    }
  }
  return u;
}

double JointPosterior::log_jacobian(const Eigen::VectorXd& u) const {
  const PriorSettings& pr = spec_.priors;
  const int q = layout_.q;
  double lj = 0.0;
  double log_det_rl = 0.0;
  for (int k = 0; k < q; ++k) {
    lj += u[layout_.log_scales + k];
    log_det_rl += u[layout_.log_scales + k];
  }
  if (q > 1) {
    std::vector<double> chol;
    lj += corr_block(u.data() + layout_.corr, q, 0.0, chol, [](double v) { return v; });
    for (int k = 0; k < q; ++k) log_det_rl += std::log(chol[k * q + k]);
  }
  lj += u[layout_.log_sigma];
  auto df_jac = [&](double y) {
    const double s = logistic(y);
    return std::log(pr.df_upper - pr.df_lower) + std::log(s) + std::log1p(-s);
  };
  if (layout_.phi >= 0) lj += df_jac(u[layout_.phi]);
  if (layout_.delta >= 0) lj += df_jac(u[layout_.delta]);
  for (int i = 0; i < layout_.num_subjects(); ++i) {
    const double* local = u.data() + layout_.subject_offset(i);
    // dB/dz = sqrt(V) R L
    lj += log_det_rl;
    if (layout_.effect_mixing) lj += 0.5 * q * local[q] + local[q];
    if (layout_.error_mixing) {
      const double* lw = local + q + (layout_.effect_mixing ? 1 : 0);
      for (int j = 0; j < data_[i].num_measurements(); ++j) lj += lw[j];
    }
  }
  return lj;
}

double JointPosterior::log_posterior(const Eigen::VectorXd& u) const {
  const ParameterState s = constrain(u);
  return log_longitudinal(s, data_) + log_survival_likelihood(s, data_, spec_.quadrature_panels) +
         log_latent_prior(s, spec_) + log_prior(s, spec_) + log_jacobian(u);
}

// ---------------------------------------------------------------------------
// LatentTarget

int LatentTarget::dimension() const {
  return globals_.q + (globals_.effect_mixing ? 1 : 0) + (globals_.error_mixing ? design_.num_measurements() : 0);
}

double LatentTarget::log_density_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const {
  grad.setZero(dimension());
  const double lp = subject_log_density(design_, globals_, u.data(), grad.data(), nullptr, landmark_, 0);
  if (!std::isfinite(lp) || !grad.allFinite()) return kNegInf;
  return lp;
}

}  // namespace rjm
