#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rjm {

// Distributional regime: first letter is the random-effects law, second the
// measurement-error law (N = Normal, t = Student-t via scale mixture).
enum class Regime { NN, NT, TN, TT };

Regime parse_regime(std::string_view text);  // accepts "nn", "N-t", "TT", ...
std::string to_string(Regime regime);         // "nn", "nt", "tn", "tt"

inline bool has_effect_mixing(Regime r) { return r == Regime::TN || r == Regime::TT; }
inline bool has_error_mixing(Regime r) { return r == Regime::NT || r == Regime::TT; }

struct Measurement {
  double time = 0.0;  // years since origin
  double value = 0.0;
};

struct SubjectRecord {
  std::string id;
  std::vector<Measurement> measurements;  // ordered by time
  std::map<std::string, double> baseline;
  double event_time = 0.0;
  int event = 0;  // 1 = event observed, 0 = censored
};

struct PriorSettings {
  double intercept_scale = 20.0;  // Cauchy, first fixed effect
  double coef_scale = 5.0;        // Cauchy, remaining fixed effects
  double scale_scale = 5.0;       // half-Cauchy, diag(R) and sigma
  double lkj_shape = 2.0;
  double df_lower = 2.0;
  double df_upper = 100.0;
  double hazard_scale = 5.0;  // Cauchy, log lambda, log nu, omega, eta

  void validate() const;
};

struct LinkTerms {
  bool current_value = true;  // eta_1 * Y*(t)
  bool slope = true;          // eta_2 * dY*(t)/dt
};

// Design terms use a small grammar: "1" (intercept), "time", a baseline
// covariate name, or "time:<covariate>".
struct ModelSpec {
  Regime regime = Regime::TT;
  std::vector<std::string> fixed_terms{"1", "time"};
  std::vector<std::string> random_terms{"1", "time"};
  std::vector<std::string> survival_covariates;
  LinkTerms link;
  PriorSettings priors;
  int quadrature_panels = 1;
  bool log_scale_marker = false;  // trajectories reported as exp(Y*)

  int num_fixed() const { return static_cast<int>(fixed_terms.size()); }
  int num_random() const { return static_cast<int>(random_terms.size()); }
  int num_covariates() const { return static_cast<int>(survival_covariates.size()); }
  int num_links() const { return int(link.current_value) + int(link.slope); }

  void validate() const;
};

// One point in parameter space plus per-subject latents.
struct ParameterState {
  Eigen::VectorXd alpha;
  Eigen::VectorXd scales;         // diag(R)
  Eigen::MatrixXd corr_cholesky;  // lower Cholesky factor of Omega
  double sigma = 1.0;
  double phi = 0.0;    // meaningful only with effect mixing
  double delta = 0.0;  // meaningful only with error mixing
  double log_lambda = 0.0;
  double log_nu = 0.0;
  Eigen::VectorXd omega;
  double eta_value = 0.0;  // eta_1 (0 when the link term is absent)
  double eta_slope = 0.0;  // eta_2

  std::vector<Eigen::VectorXd> effects;           // B_i
  std::vector<double> effect_mixing;              // V_i
  std::vector<std::vector<double>> error_mixing;  // W_ij

  double lambda() const;
  double nu() const;
  Eigen::MatrixXd correlation() const;  // L L'
  Eigen::MatrixXd covariance() const;   // R Omega R

  // Globals sized for `spec`, latents empty, Omega = I, scales = 1.
  static ParameterState zeros(const ModelSpec& spec);
};

}  // namespace rjm
