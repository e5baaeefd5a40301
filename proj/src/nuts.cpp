#include "rjm/nuts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "rjm/error.hpp"

namespace rjm {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

bool no_u_turn(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
               const Eigen::VectorXd& rho) {
  return p_sharp_plus.dot(rho) > 0.0 && p_sharp_minus.dot(rho) > 0.0;
}

// As no_u_turn with rho = rho_a + rho_b, without forming the sum.
bool no_u_turn(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
               const Eigen::VectorXd& rho_a, const Eigen::VectorXd& rho_b) {
  return p_sharp_plus.dot(rho_a) + p_sharp_plus.dot(rho_b) > 0.0 &&
         p_sharp_minus.dot(rho_a) + p_sharp_minus.dot(rho_b) > 0.0;
}

}  // namespace

void SamplerConfig::validate() const {
  if (chains < 1) throw ValidationError("sampler: chains must be >= 1");
  const int w = num_warmup();
  if (!(iterations > w && w > 0)) throw ValidationError("sampler: need iterations > warmup > 0");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ValidationError("sampler: target acceptance must be in (0, 1)");
  if (max_depth < 1 || max_depth > 20) throw ValidationError("sampler: max tree depth must be in [1, 20]");
  if (init_retries < 1) throw ValidationError("sampler: init retries must be >= 1");
}

// ---------------------------------------------------------------------------

NutsKernel::NutsKernel(const DensityModel& model, int max_depth, double max_energy_error)
    : model_(model), max_depth_(max_depth), max_energy_error_(max_energy_error) {
  inv_metric = Eigen::VectorXd::Ones(model.dimension());
}

bool NutsKernel::set_position(const Eigen::VectorXd& q) {
  q_ = q;
  grad_.resize(q.size());
  lp_ = model_.log_density_gradient(q_, grad_);
  return std::isfinite(lp_);
}

double NutsKernel::hamiltonian(const Point& z) const {
  if (!std::isfinite(z.lp)) return kInf;
  return -z.lp + 0.5 * z.p.cwiseProduct(inv_metric).dot(z.p);
}

void NutsKernel::leapfrog(Point& z, double eps) const {
  z.p += 0.5 * eps * z.grad;
  z.q += eps * inv_metric.cwiseProduct(z.p);
  z.lp = model_.log_density_gradient(z.q, z.grad);
  if (!std::isfinite(z.lp)) {
    z.lp = -kInf;
    z.grad.setZero();
  }
  z.p += 0.5 * eps * z.grad;
}

void NutsKernel::sample_momentum(Point& z, Rng& rng) const {
  z.p.resize(z.q.size());
  for (int k = 0; k < z.q.size(); ++k) z.p[k] = std_normal(rng) / std::sqrt(inv_metric[k]);
}

void NutsKernel::init_stepsize(Rng& rng) {
  if (stepsize == 0.0 || stepsize > 1e7 || std::isnan(stepsize)) return;
  Point z0{q_, {}, grad_, lp_};
  auto trial = [&]() {
    Point z = z0;
    sample_momentum(z, rng);
    const double h0 = hamiltonian(z);
    leapfrog(z, stepsize);
    double h = hamiltonian(z);
    if (std::isnan(h)) h = kInf;
    return h0 - h;
  };
  const double log_target = std::log(0.8);
  const int direction = trial() > log_target ? 1 : -1;
  while (true) {
    const double delta_h = trial();
    if (direction == 1 && !(delta_h > log_target)) break;
    if (direction == -1 && !(delta_h < log_target)) break;
    stepsize = direction == 1 ? 2.0 * stepsize : 0.5 * stepsize;
    if (stepsize > 1e7) throw SamplerError("step size diverged upward; the target looks improper");
    if (stepsize == 0.0) throw SamplerError("step size collapsed to zero; the gradient or density is unstable");
  }
}

bool NutsKernel::build_tree(int depth, Point& z, Point& z_propose, Eigen::VectorXd& p_sharp_beg,
                            Eigen::VectorXd& p_sharp_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg,
                            Eigen::VectorXd& p_end, double h0, double sign, int& n_leapfrog,
                            double& log_sum_weight, double& sum_metro_prob, bool& divergent,
                            Rng& rng) const {
  if (depth == 0) {
    leapfrog(z, sign * stepsize);
    ++n_leapfrog;
    double h = hamiltonian(z);
    if (std::isnan(h)) h = kInf;
    if (h - h0 > max_energy_error_) divergent = true;
    log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
    sum_metro_prob += h0 - h > 0.0 ? 1.0 : std::exp(h0 - h);
    z_propose = z;
    p_sharp_beg = inv_metric.cwiseProduct(z.p);
    p_sharp_end = p_sharp_beg;
    rho += z.p;
    p_beg = z.p;
    p_end = p_beg;
    return !divergent;
  }

  Level& w = levels_[depth];
  double log_sum_weight_init = -kInf;
  w.rho_init.setZero();
  if (!build_tree(depth - 1, z, z_propose, p_sharp_beg, w.p_sharp_init_end, w.rho_init, p_beg, w.p_init_end, h0,
                  sign, n_leapfrog, log_sum_weight_init, sum_metro_prob, divergent, rng)) {
    return false;
  }

  w.z_propose_final = z;
  double log_sum_weight_final = -kInf;
  w.rho_final.setZero();
  if (!build_tree(depth - 1, z, w.z_propose_final, w.p_sharp_final_beg, p_sharp_end, w.rho_final, w.p_final_beg,
                  p_end, h0, sign, n_leapfrog, log_sum_weight_final, sum_metro_prob, divergent, rng)) {
    return false;
  }

  const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
  log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
  if (log_sum_weight_final > log_sum_weight_subtree) {
    z_propose = w.z_propose_final;
  } else if (uniform01(rng) < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
    z_propose = w.z_propose_final;
  }

  rho += w.rho_init;
  rho += w.rho_final;
  bool persist = no_u_turn(p_sharp_beg, p_sharp_end, w.rho_init, w.rho_final);
  persist = persist && no_u_turn(p_sharp_beg, w.p_sharp_final_beg, w.rho_init, w.p_final_beg);
  persist = persist && no_u_turn(w.p_sharp_init_end, p_sharp_end, w.rho_final, w.p_init_end);
  return persist;
}

void NutsKernel::ensure_workspace() {
  const int dim = static_cast<int>(q_.size());
  if (static_cast<int>(levels_.size()) == max_depth_ + 1 && levels_[0].rho_init.size() == dim) return;
  levels_.assign(max_depth_ + 1, Level{});
  for (Level& w : levels_) {
    for (Eigen::VectorXd* v : {&w.p_init_end, &w.p_sharp_init_end, &w.rho_init, &w.p_final_beg,
                               &w.p_sharp_final_beg, &w.rho_final}) {
      v->setZero(dim);
    }
    w.z_propose_final = Point{q_, q_, grad_, lp_};
  }
}

Transition NutsKernel::transition(Rng& rng) {
  const int dim = static_cast<int>(q_.size());
  Point z{q_, {}, grad_, lp_};
  sample_momentum(z, rng);
  Point z_fwd = z, z_bck = z, z_sample = z, z_propose = z;

  const Eigen::VectorXd p_sharp0 = inv_metric.cwiseProduct(z.p);
  Eigen::VectorXd p_fwd_fwd = z.p, p_sharp_fwd_fwd = p_sharp0;
  Eigen::VectorXd p_fwd_bck = z.p, p_sharp_fwd_bck = p_sharp0;
  Eigen::VectorXd p_bck_fwd = z.p, p_sharp_bck_fwd = p_sharp0;
  Eigen::VectorXd p_bck_bck = z.p, p_sharp_bck_bck = p_sharp0;
  Eigen::VectorXd rho = z.p;

  double log_sum_weight = 0.0;
  const double h0 = hamiltonian(z);
  int n_leapfrog = 0;
  double sum_metro_prob = 0.0;
  int depth = 0;
  bool divergent = false;

  ensure_workspace();
  Eigen::VectorXd rho_fwd(dim), rho_bck(dim);
  Point walker = z;
  while (depth < max_depth_) {
    rho_fwd.setZero();
    rho_bck.setZero();
    bool valid = false;
    double log_sum_weight_subtree = -kInf;
    if (uniform01(rng) > 0.5) {
      walker = z_fwd;
      rho_bck = rho;
      p_bck_fwd = p_fwd_bck;
      p_sharp_bck_fwd = p_sharp_fwd_bck;
      valid = build_tree(depth, walker, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd,
                         h0, 1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob, divergent, rng);
      z_fwd = walker;
    } else {
      walker = z_bck;
      rho_fwd = rho;
      p_fwd_bck = p_bck_fwd;
      p_sharp_fwd_bck = p_sharp_bck_fwd;
      valid = build_tree(depth, walker, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd, p_bck_bck,
                         h0, -1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob, divergent, rng);
      z_bck = walker;
    }
    if (!valid) break;
    ++depth;

    if (log_sum_weight_subtree > log_sum_weight) {
      z_sample = z_propose;
    } else if (uniform01(rng) < std::exp(log_sum_weight_subtree - log_sum_weight)) {
      z_sample = z_propose;
    }
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

    rho = rho_bck + rho_fwd;
    bool persist = no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
    persist = persist && no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, rho_bck, p_fwd_bck);
    persist = persist && no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_fwd, p_bck_fwd);
    if (!persist) break;
  }

  q_ = z_sample.q;
  grad_ = z_sample.grad;
  lp_ = z_sample.lp;

  Transition t;
  t.log_density = lp_;
  t.accept_stat = n_leapfrog > 0 ? sum_metro_prob / n_leapfrog : 0.0;
  t.energy = hamiltonian(z_sample);
  t.energy_error = t.energy - h0;
  t.tree_depth = depth;
  t.leapfrogs = n_leapfrog;
  t.divergent = divergent;
  return t;
}

// ---------------------------------------------------------------------------

void StepsizeAdapter::restart(double stepsize) {
  mu_ = std::log(10.0 * stepsize);
  counter_ = 0;
  s_bar_ = 0.0;
  x_bar_ = 0.0;
}

double StepsizeAdapter::learn(double accept_stat) {
  ++counter_;
  accept_stat = std::min(accept_stat, 1.0);
  const double eta = 1.0 / (counter_ + t0_);
  s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
  const double x = mu_ - s_bar_ * std::sqrt(static_cast<double>(counter_)) / gamma_;
  const double x_eta = std::pow(static_cast<double>(counter_), -kappa_);
  x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
  return std::exp(x);
}

double StepsizeAdapter::final_stepsize() const { return std::exp(x_bar_); }

MetricAdapter::MetricAdapter(int dimension, int num_warmup) : num_warmup_(num_warmup) {
  if (num_warmup < 20) {
    active_ = false;
  } else if (init_buffer_ + base_window_ + term_buffer_ > num_warmup) {
    init_buffer_ = static_cast<int>(0.15 * num_warmup);
    term_buffer_ = static_cast<int>(0.1 * num_warmup);
    base_window_ = num_warmup - (init_buffer_ + term_buffer_);
  }
  window_size_ = base_window_;
  next_window_end_ = init_buffer_ + window_size_ - 1;
  mean_ = Eigen::VectorXd::Zero(dimension);
  m2_ = Eigen::VectorXd::Zero(dimension);
}

void MetricAdapter::next_window() {
  if (next_window_end_ == num_warmup_ - term_buffer_ - 1) return;
  window_size_ *= 2;
  next_window_end_ = counter_ + window_size_;
  if (next_window_end_ != num_warmup_ - term_buffer_ - 1) {
    const int boundary = next_window_end_ + 2 * window_size_;
    if (boundary >= num_warmup_ - term_buffer_) next_window_end_ = num_warmup_ - term_buffer_ - 1;
  }
}

bool MetricAdapter::learn(const Eigen::VectorXd& q, Eigen::VectorXd& inv_metric) {
  if (!active_) return false;
  const bool in_window = counter_ >= init_buffer_ && counter_ < num_warmup_ - term_buffer_ && counter_ != num_warmup_;
  if (in_window) {
    ++n_;
    const Eigen::VectorXd delta = q - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta.cwiseProduct(q - mean_);
  }
  const bool window_end = counter_ == next_window_end_ && counter_ != num_warmup_;
  if (window_end) {
    next_window();
    const double n = static_cast<double>(n_);
    const Eigen::VectorXd var = m2_ / (n - 1.0);
    inv_metric = (n / (n + 5.0)) * var + Eigen::VectorXd::Constant(var.size(), 1e-3 * (5.0 / (n + 5.0)));
    n_ = 0;
    mean_.setZero();
    m2_.setZero();
    ++counter_;
    return true;
  }
  ++counter_;
  return false;
}

// ---------------------------------------------------------------------------

int ChainResult::num_divergent() const {
  return static_cast<int>(std::count(divergent.begin(), divergent.end(), 1));
}

Eigen::VectorXd random_initial_point(const DensityModel& model, Rng& rng, double radius, int retries) {
  const int dim = model.dimension();
  Eigen::VectorXd u(dim), grad(dim);
  for (int attempt = 0; attempt < retries; ++attempt) {
    for (int k = 0; k < dim; ++k) u[k] = radius * (2.0 * uniform01(rng) - 1.0);
    const double lp = model.log_density_gradient(u, grad);
    if (std::isfinite(lp) && grad.allFinite()) return u;
  }
  std::ostringstream msg;
  msg << "could not find an initial point with finite log density after " << retries << " attempts";
  throw SamplerError(msg.str());
}

void gradient_self_test(const DensityModel& model, const Eigen::VectorXd& u, int max_coordinates, double tol) {
  const int dim = model.dimension();
  Eigen::VectorXd grad(dim), scratch(dim);
  model.log_density_gradient(u, grad);
  std::vector<int> coords;
  if (dim <= max_coordinates) {
    for (int k = 0; k < dim; ++k) coords.push_back(k);
  } else {
    const int head = max_coordinates / 2;
    for (int k = 0; k < head; ++k) coords.push_back(k);
    const int rest = max_coordinates - head;
    for (int j = 0; j < rest; ++j) coords.push_back(head + static_cast<int>((dim - head - 1) * (j + 0.5) / rest));
  }
  const double f0 = std::abs(model.log_density_gradient(u, scratch));
  for (int k : coords) {
    // Accept agreement at any of three steps; the allowance covers the
    // cancellation error of differencing a large log density.
    double fd = 0.0;
    bool ok = false;
    for (double h : {1e-5, 1e-6, 1e-4}) {
      Eigen::VectorXd a = u, b = u;
      a[k] += h;
      b[k] -= h;
      fd = (model.log_density_gradient(a, scratch) - model.log_density_gradient(b, scratch)) / (2.0 * h);
      const double scale = std::max({1.0, std::abs(fd), std::abs(grad[k])});
      const double noise = 1e-13 * f0 / h;
      if (std::abs(fd - grad[k]) <= tol * scale + noise) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      std::ostringstream msg;
      msg << "gradient self-test failed at coordinate " << k << ": analytic " << grad[k] << ", finite difference "
          << fd;
      throw SamplerError(msg.str());
    }
  }
}

ChainResult run_chain(const DensityModel& model, const SamplerConfig& config, int chain,
                      const Eigen::VectorXd* init) {
  config.validate();
  Rng rng = make_rng(config.seed, static_cast<std::uint64_t>(chain));
  const Eigen::VectorXd u0 = init ? *init : random_initial_point(model, rng, config.init_radius, config.init_retries);
  if (config.gradient_self_test) gradient_self_test(model, u0);

  NutsKernel kernel(model, config.max_depth);
  if (!kernel.set_position(u0)) throw SamplerError("initial point has a non-finite log density");
  kernel.init_stepsize(rng);

  const int num_warmup = config.num_warmup();
  const int num_keep = config.iterations - num_warmup;
  StepsizeAdapter step(config.target_accept);
  step.restart(kernel.stepsize);
  MetricAdapter metric(model.dimension(), num_warmup);

  ChainResult out;
  out.draws.resize(num_keep, model.dimension());
  for (int it = 0; it < config.iterations; ++it) {
    const Transition t = kernel.transition(rng);
    if (it < num_warmup) {
      if (t.divergent) ++out.warmup_divergences;
      kernel.stepsize = step.learn(t.accept_stat);
      if (metric.learn(kernel.position(), kernel.inv_metric)) {
        kernel.init_stepsize(rng);
        step.restart(kernel.stepsize);
      }
      if (it == num_warmup - 1) kernel.stepsize = step.final_stepsize();
      continue;
    }
    const int row = it - num_warmup;
    out.draws.row(row) = kernel.position().transpose();
    out.log_density.push_back(t.log_density);
    out.divergent.push_back(t.divergent ? 1 : 0);
    out.tree_depth.push_back(t.tree_depth);
    out.stepsize.push_back(kernel.stepsize);
    out.energy_error.push_back(t.energy_error);
    out.accept_stat.push_back(t.accept_stat);
    out.leapfrogs.push_back(t.leapfrogs);
  }
  out.final_stepsize = kernel.stepsize;
  out.inv_metric = kernel.inv_metric;
  return out;
}

std::vector<ChainResult> nuts_sample(const DensityModel& model, const SamplerConfig& config,
                                     const std::function<void(int, int)>& progress) {
  config.validate();
  std::vector<ChainResult> results(config.chains);
  std::vector<std::exception_ptr> errors(config.chains);
  int threads = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, config.chains);

  auto work = [&](int chain) {
    try {
      results[chain] = run_chain(model, config, chain);
      if (progress) progress(chain, config.iterations);
    } catch (...) {
      errors[chain] = std::current_exception();
    }
  };
  if (threads == 1) {
    for (int c = 0; c < config.chains; ++c) work(c);
  } else {
    for (int start = 0; start < config.chains; start += threads) {
      std::vector<std::thread> pool;
      for (int c = start; c < std::min(config.chains, start + threads); ++c) pool.emplace_back(work, c);
      for (auto& t : pool) t.join();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (int c = 0; c < config.chains; ++c) {
    const auto& r = results[c];
    const double frac = r.divergent.empty() ? 0.0 : static_cast<double>(r.num_divergent()) / r.divergent.size();
    if (frac > config.max_divergent_fraction) {
      std::ostringstream msg;
      msg << "chain " << c + 1 << ": " << r.num_divergent() << " of " << r.divergent.size()
          << " post-warmup transitions diverged; raise the target acceptance (smaller steps) or reparameterise";
      throw SamplerError(msg.str());
    }
  }
  return results;
}

}  // namespace rjm
