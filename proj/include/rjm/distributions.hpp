#pragma once

#include <Eigen/Dense>

namespace rjm {

// Log densities. All throw DomainError outside their parameter domain.

double log_density_scaled_normal(double y, double mean, double sd);

// Zero-mean multivariate Normal with covariance `cov` (must be SPD).
double log_density_mvnormal(const Eigen::VectorXd& x, const Eigen::MatrixXd& cov);

// IG(shape, rate): rate^shape / Gamma(shape) v^(-shape-1) exp(-rate / v).
double log_density_inverse_gamma(double v, double shape, double rate);

// Location-scale Student-t; df must exceed 2 so the variance is finite.
double log_density_t_marginal(double y, double loc, double scale, double df);

double log_density_cauchy(double x, double loc, double scale);
double log_density_half_cauchy(double x, double scale);  // support x >= 0
double log_density_uniform(double x, double lower, double upper);  // -inf outside

// log of the LKJ normalising constant c_K(eta), so that
// p(Omega) = det(Omega)^(eta-1) / c_K(eta).
double lkj_log_normalizer(int dim, double shape);

// LKJ(shape) density of the correlation matrix L L' given its Cholesky factor.
double log_density_lkj_corr_cholesky(const Eigen::MatrixXd& corr_cholesky, double shape);

}  // namespace rjm
