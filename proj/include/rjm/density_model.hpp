#pragma once

#include <Eigen/Dense>

namespace rjm {

// A differentiable log density on R^n, the interface consumed by the sampler.
class DensityModel {
 public:
  virtual ~DensityModel() = default;

  virtual int dimension() const = 0;

  // Writes the gradient into `grad` (resized by the caller to dimension()).
  // Returns -infinity instead of throwing when the density is not finite.
  virtual double log_density_gradient(const Eigen::VectorXd& u, Eigen::VectorXd& grad) const = 0;
};

}  // namespace rjm
