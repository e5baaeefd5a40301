#include "rjm/dynpred.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <thread>

#include <boost/random/gamma_distribution.hpp>

#include "rjm/design.hpp"
#include "rjm/error.hpp"
#include "rjm/nuts.hpp"
#include "rjm/posterior.hpp"
#include "rjm/random.hpp"

namespace rjm {
namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

void fnv_double(std::uint64_t& h, double v) {
  if (v == 0.0) v = 0.0;  // fold -0
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  fnv_bytes(h, &bits, sizeof bits);
}

std::vector<Measurement> up_to(const std::vector<Measurement>& ms, double s) {
  std::vector<Measurement> out;
  for (const auto& m : ms) {
    if (m.time <= s) out.push_back(m);
  }
  return out;
}

Eigen::VectorXd effects_from_local(const GlobalValues& g, const Eigen::VectorXd& u, double* v_out) {
  const int q = g.q;
  double v = 1.0;
  if (g.effect_mixing) v = std::exp(u[q]);
  if (v_out) *v_out = v;
  return std::sqrt(v) * g.scales.asDiagonal() * (g.corr_cholesky * u.head(q));
}

// Latent block from its prior: z ~ N(0, I), V ~ IG(phi/2, phi/2).
Eigen::VectorXd prior_local(const GlobalValues& g, int dim, Rng& rng) {
  Eigen::VectorXd u(dim);
  for (int k = 0; k < g.q; ++k) u[k] = std_normal(rng);
  int at = g.q;
  auto inv_gamma_log = [&](double df) {
    boost::random::gamma_distribution<double> gamma(0.5 * df, 2.0 / df);
    return -std::log(gamma(rng));
  };
  if (g.effect_mixing) u[at++] = inv_gamma_log(g.phi);
  while (at < dim) u[at++] = inv_gamma_log(g.delta);
  return u;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

NewcomerData NewcomerData::from_record(const SubjectRecord& record) {
  return NewcomerData{record.id, record.baseline, record.measurements};
}

void PredictionOptions::validate() const {
  if (thin < 1) throw ValidationError("prediction thin must be >= 1");
  if (max_draws < 0) throw ValidationError("prediction max_draws must be >= 0");
  if (latent_warmup < 0) throw ValidationError("latent warmup must be >= 0");
  if (max_depth < 1 || max_depth > 15) throw ValidationError("latent max_depth must be in [1, 15]");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ValidationError("latent target_accept must be in (0, 1)");
}

TraceSummary PredictionResult::summary(int horizon_index) const {
  std::vector<double> v(pi.rows());
  for (int k = 0; k < pi.rows(); ++k) v[k] = pi(k, horizon_index);
  return trace_summary(v);
}

double conditional_failure_probability(const HazardContext& ctx, const ParameterState& theta, double s, double u,
                                       int panels) {
  if (!(s >= 0.0) || !(u >= 0.0)) throw DomainError("landmark and horizon must be non-negative");
  if (u == 0.0) return 0.0;
  return -std::expm1(-interval_hazard(s, s + u, ctx, theta, panels));
}

std::uint64_t prediction_stream(const NewcomerData& subject, double landmark) {
  std::uint64_t h = kFnvOffset;
  for (const auto& [name, value] : subject.baseline) {
    fnv_bytes(h, name.data(), name.size());
    fnv_bytes(h, "=", 1);
    fnv_double(h, value);
  }
  for (const auto& m : up_to(subject.measurements, landmark)) {
    fnv_double(h, m.time);
    fnv_double(h, m.value);
  }
  fnv_bytes(h, "@", 1);
  fnv_double(h, landmark);
  return h;
}

Predictor::Predictor(PosteriorDraws draws, ModelSpec spec, PredictionOptions options)
    : draws_(std::move(draws)),
      spec_(std::move(spec)),
      options_(options),
      rule_(QuadratureRule::gauss_kronrod15(spec_.quadrature_panels)) {
  spec_.validate();
  options_.validate();
  if (draws_.rows() == 0) throw ValidationError("no posterior draws to predict from");
  for (int row = 0; row < draws_.rows(); row += options_.thin) {
    if (options_.max_draws > 0 && static_cast<int>(rows_.size()) >= options_.max_draws) break;
    rows_.push_back(row);
    states_.push_back(draws_.state(row, spec_));
  }
}

PredictionResult Predictor::predict(const NewcomerData& subject, double landmark,
                                    const std::vector<double>& horizons) const {
  if (!(landmark >= 0.0) || !std::isfinite(landmark)) throw DomainError("landmark must be finite and >= 0");
  for (double u : horizons) {
    if (!(u >= 0.0) || !std::isfinite(u)) throw DomainError("horizons must be finite and >= 0");
  }
  PredictionResult res;
  res.id = subject.id;
  res.landmark = landmark;
  res.horizons = horizons;
  res.draw_rows = rows_;

  SubjectRecord record;
  record.id = subject.id;
  record.baseline = subject.baseline;
  record.measurements = up_to(subject.measurements, landmark);
  std::sort(record.measurements.begin(), record.measurements.end(),
            [](const Measurement& a, const Measurement& b) { return a.time < b.time; });
  const int dropped = static_cast<int>(subject.measurements.size() - record.measurements.size());
  if (dropped > 0) {
    res.warnings.push_back(std::to_string(dropped) + " measurement(s) after the landmark ignored");
  }
  res.measurements_used = static_cast<int>(record.measurements.size());
  const SubjectDesign design = build_subject_design(record, spec_, true);
  res.prior_only = design.num_measurements() == 0 && landmark <= 0.0;
  if (res.prior_only) res.warnings.push_back("no measurements and landmark 0: latents drawn from the prior");

  Rng rng = make_rng(options_.seed, prediction_stream(subject, landmark));
  const int n = static_cast<int>(rows_.size());
  res.pi.resize(n, static_cast<Eigen::Index>(horizons.size()));
  res.effects.reserve(n);

  Eigen::VectorXd local;
  double stepsize = 0.0;
  int divergent = 0;
  for (int k = 0; k < n; ++k) {
    const ParameterState& theta = states_[k];
    const GlobalValues g = GlobalValues::from_state(theta, spec_, rule_);
    LatentTarget target(design, g, landmark);
    const int dim = target.dimension();
    if (res.prior_only) {
      local = prior_local(g, dim, rng);
    } else {
      NutsKernel kernel(target, options_.max_depth);
      kernel.inv_metric = Eigen::VectorXd::Ones(dim);
      bool ok = local.size() == dim && kernel.set_position(local);
      if (!ok) {
        local = Eigen::VectorXd::Zero(dim);
        ok = kernel.set_position(local);
        if (!ok) local = random_initial_point(target, rng, 2.0, 100), kernel.set_position(local);
      }
      // The first draw searches for a step size; later draws start from the
      // previous adapted value and re-adapt briefly.
      if (stepsize > 0.0) {
        kernel.stepsize = stepsize;
      } else {
        kernel.init_stepsize(rng);
      }
      const int warmup = k == 0 ? std::max(2 * options_.latent_warmup, 1) : options_.latent_warmup;
      StepsizeAdapter adapter(options_.target_accept);
      adapter.restart(kernel.stepsize);
      for (int it = 0; it < warmup; ++it) {
        const Transition t = kernel.transition(rng);
        kernel.stepsize = adapter.learn(t.accept_stat);
      }
      if (warmup > 0) kernel.stepsize = adapter.final_stepsize();
      stepsize = kernel.stepsize;
      const Transition t = kernel.transition(rng);
      divergent += t.divergent ? 1 : 0;
      local = kernel.position();
    }
    double v = 1.0;
    Eigen::VectorXd b = effects_from_local(g, local, &v);
    const HazardContext ctx = HazardContext::from_design(design, theta.alpha, b);
    for (std::size_t h = 0; h < horizons.size(); ++h) {
      res.pi(k, static_cast<Eigen::Index>(h)) =
          conditional_failure_probability(ctx, theta, landmark, horizons[h], spec_.quadrature_panels);
    }
    res.effects.push_back(std::move(b));
    if (g.effect_mixing) res.effect_mixing.push_back(v);
  }
  if (divergent > 0) {
    res.warnings.push_back(std::to_string(divergent) + " divergent latent transition(s)");
  }
  return res;
}

Eigen::MatrixXd Predictor::marker_trajectories(const PredictionResult& result, const NewcomerData& subject,
                                               const std::vector<double>& times) const {
  SubjectRecord record;
  record.id = subject.id;
  record.baseline = subject.baseline;
  const SubjectDesign design = build_subject_design(record, spec_, true);
  const int n = static_cast<int>(result.effects.size());
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(times.size()));
  for (int k = 0; k < n; ++k) {
    const ParameterState& theta = states_.at(k);
    const HazardContext ctx = HazardContext::from_design(design, theta.alpha, result.effects[k]);
    for (std::size_t j = 0; j < times.size(); ++j) out(k, static_cast<Eigen::Index>(j)) = ctx.current_value(times[j]);
  }
  return out;
}

TrajectoryBands Predictor::marker_bands(const PredictionResult& result, const NewcomerData& subject,
                                        const std::vector<double>& times) const {
  const Eigen::MatrixXd y = marker_trajectories(result, subject, times);
  TrajectoryBands bands;
  bands.times = times;
  auto back = [&](double v) { return spec_.log_scale_marker ? std::exp(v) : v; };
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    std::vector<double> col(y.col(j).data(), y.col(j).data() + y.rows());
    bands.p025.push_back(back(quantile(col, 0.025)));
    bands.p50.push_back(back(quantile(col, 0.5)));
    bands.p975.push_back(back(quantile(col, 0.975)));
  }
  return bands;
}

std::vector<PredictionResult> predict_cohort(const Predictor& predictor, const std::vector<SubjectRecord>& records,
                                             const std::vector<double>& landmarks, const std::vector<double>& horizons,
                                             std::vector<std::string>* excluded, int threads) {
  struct Job {
    const SubjectRecord* record;
    double s;
  };
  std::vector<Job> jobs;
  for (double s : landmarks) {
    for (const auto& r : records) {
      if (r.event_time > s) {
        jobs.push_back({&r, s});
      } else if (excluded) {
        excluded->push_back(r.id + "@" + fmt(s));
      }
    }
  }
  std::vector<PredictionResult> out(jobs.size());
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](int w) {
    try {
      for (std::size_t i = w; i < jobs.size(); i += workers) {
        out[i] = predictor.predict(NewcomerData::from_record(*jobs[i].record), jobs[i].s, horizons);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

void write_prediction_draws(const std::vector<PredictionResult>& results, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << "subject,s,u,draw,pi\n";
  for (const auto& r : results) {
    for (Eigen::Index h = 0; h < r.pi.cols(); ++h) {
      for (Eigen::Index k = 0; k < r.pi.rows(); ++k) {
        out << r.id << ',' << fmt(r.landmark) << ',' << fmt(r.horizons[h]) << ',' << r.draw_rows[k] + 1 << ','
            << fmt(r.pi(k, h)) << '\n';
      }
    }
  }
}

void write_prediction_summary(const std::vector<PredictionResult>& results, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << "subject,s,u,p2.5,p50,p97.5,mean\n";
  for (const auto& r : results) {
    for (Eigen::Index h = 0; h < r.pi.cols(); ++h) {
      const TraceSummary t = r.summary(static_cast<int>(h));
      out << r.id << ',' << fmt(r.landmark) << ',' << fmt(r.horizons[h]) << ',' << fmt(t.p025) << ',' << fmt(t.p50)
          << ',' << fmt(t.p975) << ',' << fmt(t.mean) << '\n';
    }
  }
}

}  // namespace rjm
