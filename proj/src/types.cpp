#include "rjm/types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "rjm/error.hpp"

namespace rjm {

Regime parse_regime(std::string_view text) {
  std::string key;
  for (char c : text) {
    if (c == '-' || c == '_' || c == ' ') continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (key == "nn") return Regime::NN;
  if (key == "nt") return Regime::NT;
  if (key == "tn") return Regime::TN;
  if (key == "tt") return Regime::TT;
  throw ValidationError("unknown model regime '" + std::string(text) + "' (expected nn, nt, tn or tt)");
}

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::NN: return "nn";
    case Regime::NT: return "nt";
    case Regime::TN: return "tn";
    case Regime::TT: return "tt";
  }
  return "?";
}

void PriorSettings::validate() const {
  for (double s : {intercept_scale, coef_scale, scale_scale, lkj_shape, hazard_scale}) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("prior scales and LKJ shape must be positive");
  }
  if (!(df_lower >= 2.0)) throw ValidationError("degrees-of-freedom lower bound must be >= 2");
  if (!(df_upper > df_lower) || !std::isfinite(df_upper)) {
    throw ValidationError("degrees-of-freedom upper bound must exceed the lower bound");
  }
}

void ModelSpec::validate() const {
  if (fixed_terms.empty()) throw ValidationError("fixed_terms must not be empty");
  if (random_terms.empty()) throw ValidationError("random_terms must not be empty");
  if (fixed_terms.size() > 16) throw ValidationError("at most 16 fixed-effect terms are supported");
  if (random_terms.size() > 6) throw ValidationError("at most 6 random-effect terms are supported");
  for (const auto& term : random_terms) {
    if (std::find(fixed_terms.begin(), fixed_terms.end(), term) == fixed_terms.end()) {
      throw ValidationError("random term '" + term + "' is not among the fixed terms");
    }
  }
  auto dup = [](std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return std::adjacent_find(v.begin(), v.end()) != v.end();
  };
  if (dup(fixed_terms) || dup(random_terms) || dup(survival_covariates)) {
    throw ValidationError("duplicate term or covariate name in model spec");
  }
  if (quadrature_panels < 1) throw ValidationError("quadrature_panels must be >= 1");
  priors.validate();
}

double ParameterState::lambda() const { return std::exp(log_lambda); }
double ParameterState::nu() const { return std::exp(log_nu); }

Eigen::MatrixXd ParameterState::correlation() const {
  return corr_cholesky * corr_cholesky.transpose();
}

Eigen::MatrixXd ParameterState::covariance() const {
  Eigen::MatrixXd rl = scales.asDiagonal() * corr_cholesky;
  return rl * rl.transpose();
}

ParameterState ParameterState::zeros(const ModelSpec& spec) {
  ParameterState s;
  s.alpha = Eigen::VectorXd::Zero(spec.num_fixed());
  s.scales = Eigen::VectorXd::Ones(spec.num_random());
  s.corr_cholesky = Eigen::MatrixXd::Identity(spec.num_random(), spec.num_random());
  s.omega = Eigen::VectorXd::Zero(spec.num_covariates());
  if (has_effect_mixing(spec.regime)) s.phi = 10.0;
  if (has_error_mixing(spec.regime)) s.delta = 10.0;
  return s;
}

}  // namespace rjm
