#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "rjm/density_model.hpp"
#include "rjm/design.hpp"
#include "rjm/hazard.hpp"
#include "rjm/types.hpp"

namespace rjm {

// Offsets of each block in the unconstrained vector. Global parameters come
// first; then, subject by subject, the standardized effects z_i, log V_i (t
// random effects only) and log W_ij (t errors only). Absent blocks have
// offset -1.
class ParameterLayout {
 public:
  ParameterLayout(const ModelSpec& spec, const std::vector<int>& measurements_per_subject);

  int dimension() const { return dimension_; }
  int num_globals() const { return num_globals_; }
  int num_subjects() const { return static_cast<int>(subject_offsets_.size()); }
  int subject_offset(int i) const { return subject_offsets_[i]; }
  int subject_size(int i) const { return subject_sizes_[i]; }

  std::string name(int index) const;

  int p = 0, q = 0, r = 0;
  int alpha = -1;
  int log_scales = -1;
  int corr = -1;  // q(q-1)/2 unconstrained partial-correlation coordinates
  int num_corr = 0;
  int log_sigma = -1;
  int phi = -1;
  int delta = -1;
  int log_lambda = -1;
  int log_nu = -1;
  int omega = -1;
  int eta_value = -1;
  int eta_slope = -1;
  bool effect_mixing = false;
  bool error_mixing = false;

 private:
  int num_globals_ = 0;
  int dimension_ = 0;
  std::vector<int> subject_offsets_;
  std::vector<int> subject_sizes_;
};

// Size of a subject's latent block.
int local_block_size(const ModelSpec& spec, int num_measurements);

// Constrained global parameters with the per-evaluation constants the
// subject kernel needs.
struct GlobalValues {
  int p = 0, q = 0, r = 0;
  Eigen::VectorXd alpha, scales, omega;
  Eigen::MatrixXd corr_cholesky;
  double sigma = 1.0, log_sigma = 0.0, inv_sigma2 = 1.0;
  bool effect_mixing = false, error_mixing = false;
  double phi = 0.0, delta = 0.0;
  double phi_const = 0.0, phi_dconst = 0.0;      // a log a - lgamma(a) and its d/dphi, a = phi/2
  double delta_const = 0.0, delta_dconst = 0.0;
  double log_lambda = 0.0, log_nu = 0.0, nu = 1.0;
  double eta_value = 0.0, eta_slope = 0.0;
  const QuadratureRule* rule = nullptr;
  std::vector<double> node_power;  // u_k^(1/nu)

  static GlobalValues from_state(const ParameterState& state, const ModelSpec& spec,
                                 const QuadratureRule& rule);
  void refresh_derived();  // recompute the constants after editing fields
};

// Adjoints of a subject's contribution with respect to the globals. Scales,
// sigma and nu are differentiated on the log scale.
struct GlobalAdjoint {
  Eigen::VectorXd alpha, log_scales, omega;
  Eigen::MatrixXd corr_cholesky;
  double log_sigma = 0.0, phi = 0.0, delta = 0.0, log_lambda = 0.0, log_nu = 0.0;
  double eta_value = 0.0, eta_slope = 0.0;

  void reset(int p, int q, int r);
};

// Joint log density of one subject's measurements, survival information and
// latent block (standardized effects, log-scale mixing variables, including
// their Jacobians), with the globals held fixed. `survival_time` <= 0 drops
// the survival factor. Gradients are accumulated (not overwritten) into
// `local_grad` and `adjoint` when non-null. Returns -inf when not finite.
double subject_log_density(const SubjectDesign& design, const GlobalValues& globals,
                           const double* local, double* local_grad, GlobalAdjoint* adjoint,
                           double survival_time, int event);

// Reference components evaluated on the constrained scale.
double log_longitudinal(const ParameterState& state, const std::vector<SubjectDesign>& data);
double log_survival_likelihood(const ParameterState& state, const std::vector<SubjectDesign>& data,
                               int panels = 1);
double log_latent_prior(const ParameterState& state, const ModelSpec& spec);
double log_prior(const ParameterState& state, const ModelSpec& spec);

// Unconstrained <-> constrained maps for the correlation Cholesky factor.
Eigen::MatrixXd corr_cholesky_from_unconstrained(const Eigen::VectorXd& y, int dim);
Eigen::VectorXd corr_cholesky_to_unconstrained(const Eigen::MatrixXd& corr_cholesky);

// The joint posterior over the unconstrained vector.
class JointPosterior : public DensityModel {
 public:
  JointPosterior(std::vector<SubjectDesign> data, ModelSpec spec);
  JointPosterior(const std::vector<SubjectRecord>& records, ModelSpec spec);

  int dimension() const override { return layout_.dimension(); }
  double log_density_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const override;

  double log_density(const Eigen::VectorXd& u) const;

  // Exact gradient; throws NumericalError naming the first non-finite
  // coordinate.
  Eigen::VectorXd gradient(const Eigen::VectorXd& u) const;

  // Sum of the reference components at constrain(u) plus log_jacobian(u).
  double log_posterior(const Eigen::VectorXd& u) const;
  double log_jacobian(const Eigen::VectorXd& u) const;

  ParameterState constrain(const Eigen::VectorXd& u) const;
  Eigen::VectorXd unconstrain(const ParameterState& state) const;

  const ParameterLayout& layout() const { return layout_; }
  const ModelSpec& spec() const { return spec_; }
  const std::vector<SubjectDesign>& data() const { return data_; }
  const QuadratureRule& rule() const { return rule_; }

 private:
  std::vector<SubjectDesign> data_;
  ModelSpec spec_;
  ParameterLayout layout_;
  QuadratureRule rule_;
};

// Density of one subject's latent block with the globals fixed; the target
// for newcomer latent sampling.
class LatentTarget : public DensityModel {
 public:
  LatentTarget(const SubjectDesign& design, const GlobalValues& globals, double landmark)
      : design_(design), globals_(globals), landmark_(landmark) {}

  int dimension() const override;
  double log_density_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const override;

 private:
  const SubjectDesign& design_;
  const GlobalValues& globals_;
  double landmark_;
};

}  // namespace rjm
