#include "rjm/distributions.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "rjm/error.hpp"

namespace rjm {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

void require(bool ok, const char* what) {
  if (!ok) throw DomainError(what);
}

}  // namespace

double log_density_scaled_normal(double y, double mean, double sd) {
  require(sd > 0.0 && std::isfinite(sd), "normal: sd must be positive");
  const double z = (y - mean) / sd;
  return -kHalfLog2Pi - std::log(sd) - 0.5 * z * z;
}

double log_density_mvnormal(const Eigen::VectorXd& x, const Eigen::MatrixXd& cov) {
  require(cov.rows() == x.size() && cov.cols() == x.size(), "mvnormal: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  require(llt.info() == Eigen::Success, "mvnormal: covariance is not positive definite");
  const Eigen::MatrixXd& l = llt.matrixL();
  Eigen::VectorXd z = llt.matrixL().solve(x);
  double log_det_half = l.diagonal().array().log().sum();
  return -static_cast<double>(x.size()) * kHalfLog2Pi - log_det_half - 0.5 * z.squaredNorm();
}

double log_density_inverse_gamma(double v, double shape, double rate) {
  require(v > 0.0, "inverse-gamma: v must be positive");
  require(shape > 0.0 && rate > 0.0, "inverse-gamma: shape and rate must be positive");
  return shape * std::log(rate) - std::lgamma(shape) - (shape + 1.0) * std::log(v) - rate / v;
}

double log_density_t_marginal(double y, double loc, double scale, double df) {
  require(scale > 0.0, "student-t: scale must be positive");
  require(df > 2.0 && std::isfinite(df), "student-t: df must exceed 2");
  const double z = (y - loc) / scale;
  return std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
         0.5 * std::log(df * std::numbers::pi) - std::log(scale) -
         0.5 * (df + 1.0) * std::log1p(z * z / df);
}

double log_density_cauchy(double x, double loc, double scale) {
  require(scale > 0.0, "cauchy: scale must be positive");
  const double z = (x - loc) / scale;
  return -std::log(std::numbers::pi * scale) - std::log1p(z * z);
}

double log_density_half_cauchy(double x, double scale) {
  require(scale > 0.0, "half-cauchy: scale must be positive");
  if (x < 0.0) return -std::numeric_limits<double>::infinity();
  const double z = x / scale;
  return std::log(2.0 / (std::numbers::pi * scale)) - std::log1p(z * z);
}

double log_density_uniform(double x, double lower, double upper) {
  require(upper > lower, "uniform: upper must exceed lower");
  if (!(x > lower && x < upper)) return -std::numeric_limits<double>::infinity();
  return -std::log(upper - lower);
}

double lkj_log_normalizer(int dim, double shape) {
  require(dim >= 1, "lkj: dimension must be positive");
  require(shape > 0.0, "lkj: shape must be positive");
  // c_K = prod_{k=1}^{K-1} 2^{(2 eta - 2 + K - k)(K - k)} B(b_k, b_k)^{K - k},
  // b_k = eta + (K - k - 1) / 2.
  double log_c = 0.0;
  for (int k = 1; k < dim; ++k) {
    const double km = dim - k;
    const double b = shape + 0.5 * (km - 1.0);
    const double log_beta = 2.0 * std::lgamma(b) - std::lgamma(2.0 * b);
    log_c += (2.0 * shape - 2.0 + km) * km * std::numbers::ln2 + km * log_beta;
  }
  return log_c;
}

double log_density_lkj_corr_cholesky(const Eigen::MatrixXd& corr_cholesky, double shape) {
  const int dim = static_cast<int>(corr_cholesky.rows());
  require(corr_cholesky.cols() == dim, "lkj: Cholesky factor must be square");
  double log_det = 0.0;
  for (int k = 0; k < dim; ++k) {
    require(corr_cholesky(k, k) > 0.0, "lkj: Cholesky diagonal must be positive");
    log_det += 2.0 * std::log(corr_cholesky(k, k));
  }
  return (shape - 1.0) * log_det - lkj_log_normalizer(dim, shape);
}

}  // namespace rjm
