#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "rjm/density_model.hpp"
#include "rjm/random.hpp"

namespace rjm {

struct SamplerConfig {
  int chains = 4;
  int iterations = 2000;  // per chain, warmup included
  int warmup = -1;        // -1: half of the iterations
  double target_accept = 0.8;
  int max_depth = 10;
  std::uint64_t seed = 1;
  double init_radius = 2.0;
  int init_retries = 100;
  double max_divergent_fraction = 0.25;
  bool gradient_self_test = true;
  int threads = 0;  // 0: one per chain up to the hardware concurrency

  int num_warmup() const { return warmup >= 0 ? warmup : iterations / 2; }
  void validate() const;
};

// One NUTS transition's diagnostics.
struct Transition {
  double log_density = 0.0;
  double accept_stat = 0.0;
  double energy = 0.0;
  double energy_error = 0.0;  // H(end) - H(start) for the selected point
  int tree_depth = 0;
  int leapfrogs = 0;
  bool divergent = false;
};

// Multinomial NUTS with a diagonal metric, following the
// transition of Betancourt (2017) with the generalised U-turn check
// across subtree boundaries.
class NutsKernel {
 public:
  NutsKernel(const DensityModel& model, int max_depth = 10, double max_energy_error = 1000.0);

  // Returns false when the log density is not finite at q.
  bool set_position(const Eigen::VectorXd& q);
  const Eigen::VectorXd& position() const { return q_; }
  double log_density() const { return lp_; }

  Transition transition(Rng& rng);

  // Doubles or halves the step size until a one-step acceptance crosses 0.8.
  void init_stepsize(Rng& rng);

  double stepsize = 1.0;
  Eigen::VectorXd inv_metric;

 private:
  struct Point {
    Eigen::VectorXd q, p, grad;
    double lp = 0.0;
  };

  double hamiltonian(const Point& z) const;
  void leapfrog(Point& z, double eps) const;
  void sample_momentum(Point& z, Rng& rng) const;
  bool build_tree(int depth, Point& z, Point& z_propose, Eigen::VectorXd& p_sharp_beg,
                  Eigen::VectorXd& p_sharp_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg,
                  Eigen::VectorXd& p_end, double h0, double sign, int& n_leapfrog,
                  double& log_sum_weight, double& sum_metro_prob, bool& divergent, Rng& rng) const;

  // Per-depth scratch so tree building does not allocate.
  struct Level {
    Eigen::VectorXd p_init_end, p_sharp_init_end, rho_init;
    Eigen::VectorXd p_final_beg, p_sharp_final_beg, rho_final;
    Point z_propose_final;
  };
  void ensure_workspace();

  const DensityModel& model_;
  int max_depth_;
  mutable std::vector<Level> levels_;
  double max_energy_error_;
  Eigen::VectorXd q_, grad_;
  double lp_ = 0.0;
};

// Nesterov dual averaging of log(step size).
class StepsizeAdapter {
 public:
  explicit StepsizeAdapter(double target = 0.8) : delta_(target) {}
  void restart(double stepsize);
  double learn(double accept_stat);  // returns the next step size
  double final_stepsize() const;

 private:
  double delta_, mu_ = 0.0, s_bar_ = 0.0, x_bar_ = 0.0;
  double gamma_ = 0.05, kappa_ = 0.75, t0_ = 10.0;
  int counter_ = 0;
};

// Expanding-window estimate of the diagonal metric: an initial fast buffer,
// doubling slow windows, and a terminal fast buffer.
class MetricAdapter {
 public:
  MetricAdapter(int dimension, int num_warmup);
  // Feeds the post-transition position; returns true (and writes the new
  // inverse metric) at the end of a slow window.
  bool learn(const Eigen::VectorXd& q, Eigen::VectorXd& inv_metric);

 private:
  void next_window();
  int num_warmup_, init_buffer_ = 75, term_buffer_ = 50, base_window_ = 25;
  int counter_ = 0, window_size_ = 0, next_window_end_ = 0;
  bool active_ = true;
  long n_ = 0;
  Eigen::VectorXd mean_, m2_;
};

struct ChainResult {
  Eigen::MatrixXd draws;  // retained iterations x dimension (unconstrained)
  std::vector<double> log_density;
  std::vector<int> divergent;
  std::vector<int> tree_depth;
  std::vector<double> stepsize;
  std::vector<double> energy_error;
  std::vector<double> accept_stat;
  std::vector<int> leapfrogs;
  double final_stepsize = 0.0;
  Eigen::VectorXd inv_metric;
  int warmup_divergences = 0;

  int num_divergent() const;
};

// Uniform(-radius, radius) initial point with a finite log density and
// gradient; throws SamplerError after `retries` failures.
Eigen::VectorXd random_initial_point(const DensityModel& model, Rng& rng, double radius, int retries);

// Compares the gradient with central differences on up to `max_coordinates`
// coordinates; throws SamplerError naming the first disagreement.
void gradient_self_test(const DensityModel& model, const Eigen::VectorXd& u, int max_coordinates = 24,
                        double tol = 1e-3);

// Runs one chain with adaptation during warmup. `init` overrides the random
// initial point.
ChainResult run_chain(const DensityModel& model, const SamplerConfig& config, int chain,
                      const Eigen::VectorXd* init = nullptr);

// Runs config.chains chains (concurrently when threads allow). Throws
// SamplerError when the post-warmup divergent fraction of any chain exceeds
// the configured maximum.
std::vector<ChainResult> nuts_sample(const DensityModel& model, const SamplerConfig& config,
                                     const std::function<void(int chain, int iteration)>& progress = {});

}  // namespace rjm
