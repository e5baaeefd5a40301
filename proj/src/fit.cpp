#include "rjm/fit.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "rjm/cohort_io.hpp"
#include "rjm/design.hpp"
#include "rjm/error.hpp"
#include "rjm/posterior.hpp"
#include "rjm/serialize.hpp"

namespace rjm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> latent_columns(const JointPosterior& post) {
  std::vector<std::string> out;
  const auto& layout = post.layout();
  for (int i = 0; i < layout.num_subjects(); ++i) {
    const std::string si = std::to_string(i + 1);
    for (int k = 0; k < layout.q; ++k) out.push_back("B[" + si + "," + std::to_string(k + 1) + "]");
    if (layout.effect_mixing) out.push_back("V[" + si + "]");
    if (layout.error_mixing) {
      for (int j = 0; j < post.data()[i].num_measurements(); ++j) {
        out.push_back("W[" + si + "," + std::to_string(j + 1) + "]");
      }
    }
  }
  return out;
}

void append_latents(const ParameterState& s, std::vector<double>& row) {
  for (std::size_t i = 0; i < s.effects.size(); ++i) {
    for (int k = 0; k < s.effects[i].size(); ++k) row.push_back(s.effects[i][k]);
    if (!s.effect_mixing.empty()) row.push_back(s.effect_mixing[i]);
    if (!s.error_mixing.empty()) {
      for (double w : s.error_mixing[i]) row.push_back(w);
    }
  }
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_nan(const json& j) {
  return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const ParameterDiagnostics& FitResult::diagnostic(const std::string& name) const {
  for (const auto& d : diagnostics) {
    if (d.name == name) return d;
  }
  throw ValidationError("no diagnostics for '" + name + "'");
}

double FitResult::max_rhat() const {
  double m = 1.0;
  for (const auto& d : diagnostics) {
    if (std::isnan(d.rhat)) continue;
    m = std::max(m, d.rhat);
  }
  return m;
}

void summarise(FitResult& fit, double rhat_warn, double rhat_fail) {
  fit.diagnostics.clear();
  fit.verdict = Convergence::Ok;
  fit.divergences = 0;
  for (int d : fit.draws.divergent) fit.divergences += d;
  const bool multi = fit.draws.num_chains() >= 1 && fit.draws.rows() >= 4;
  for (const auto& name : global_columns(fit.spec)) {
    ParameterDiagnostics d;
    d.name = name;
    const auto values = fit.draws.get(name);
    d.summary = trace_summary(values);
    const bool constant = d.summary.sd == 0.0;
    d.rhat = std::numeric_limits<double>::quiet_NaN();
    d.ess = std::numeric_limits<double>::quiet_NaN();
    if (multi && !constant) {
      const auto chains = fit.draws.by_chain(name);
      d.rhat = rhat(chains);
      d.ess = effective_sample_size(chains);
    }
    // Structurally fixed entries (the unit corner of L_Omega) carry no
    // convergence information.
    if (!constant) {
      const Convergence c = convergence_verdict(d.rhat, rhat_warn, rhat_fail);
      if (static_cast<int>(c) > static_cast<int>(fit.verdict)) fit.verdict = c;
    }
    fit.diagnostics.push_back(d);
  }
}

FitResult fit_model(const std::vector<SubjectRecord>& records, const ModelSpec& spec, const FitOptions& options,
                    const std::function<void(int, int)>& progress) {
  const auto start = std::chrono::steady_clock::now();
  spec.validate();
  validate_cohort(records, true);
  JointPosterior post(records, spec);
  const auto chains = nuts_sample(post, options.sampler, progress);

  FitResult fit;
  fit.spec = spec;
  fit.sampler = options.sampler;
  for (const auto& r : records) fit.subject_ids.push_back(r.id);
  PosteriorDraws& draws = fit.draws;
  draws.columns = global_columns(spec);
  if (options.keep_latents) {
    const auto extra = latent_columns(post);
    draws.columns.insert(draws.columns.end(), extra.begin(), extra.end());
  }
  int total = 0;
  for (const auto& c : chains) total += static_cast<int>(c.draws.rows());
  draws.values.resize(total, static_cast<int>(draws.columns.size()));
  int row = 0;
  std::vector<double> buffer;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const ChainResult& ch = chains[c];
    fit.warmup_divergences += ch.warmup_divergences;
    for (int i = 0; i < ch.draws.rows(); ++i, ++row) {
      const ParameterState s = post.constrain(ch.draws.row(i).transpose());
      buffer.clear();
      append_globals(s, spec, buffer);
      if (options.keep_latents) append_latents(s, buffer);
      for (std::size_t k = 0; k < buffer.size(); ++k) draws.values(row, static_cast<int>(k)) = buffer[k];
      draws.chain.push_back(static_cast<int>(c) + 1);
      draws.log_density.push_back(ch.log_density[i]);
      draws.divergent.push_back(ch.divergent[i]);
      draws.tree_depth.push_back(ch.tree_depth[i]);
      draws.stepsize.push_back(ch.stepsize[i]);
      draws.energy_error.push_back(ch.energy_error[i]);
    }
  }
  summarise(fit, options.rhat_warn, options.rhat_fail);
  fit.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return fit;
}

void save_fit(const FitResult& fit, const std::string& dir) {
  fs::create_directories(dir);
  const int chains = fit.draws.num_chains();
  for (int c = 1; c <= chains; ++c) {
    write_chain_csv(fit.draws, c, (fs::path(dir) / ("draws_chain" + std::to_string(c) + ".csv")).string());
  }
  json params = json::array();
  for (const auto& d : fit.diagnostics) {
    params.push_back({{"name", d.name},
                      {"p2.5", d.summary.p025},
                      {"p50", d.summary.p50},
                      {"p97.5", d.summary.p975},
                      {"mean", d.summary.mean},
                      {"sd", d.summary.sd},
                      {"rhat", number_or_null(d.rhat)},
                      {"ess", number_or_null(d.ess)}});
  }
  json j{{"schema_version", kSchemaVersion},
         {"model", to_json(fit.spec)},
         {"sampler", to_json(fit.sampler)},
         {"seed", fit.sampler.seed},
         {"chains", chains},
         {"retained_draws", fit.draws.rows()},
         {"subject_ids", fit.subject_ids},
         {"divergences", fit.divergences},
         {"warmup_divergences", fit.warmup_divergences},
         {"verdict", to_string(fit.verdict)},
         {"max_rhat", fit.max_rhat()},
         {"seconds", fit.seconds},
         {"draws_digest", digest(fit.draws)},
         {"parameters", params}};
  std::ofstream out(fs::path(dir) / "fit.json");
  if (!out) throw ValidationError("cannot write fit.json in '" + dir + "'");
  out << j.dump(2) << '\n';
}

FitResult load_fit(const std::string& dir) {
  const fs::path meta = fs::path(dir) / "fit.json";
  std::ifstream in(meta);
  if (!in) throw ValidationError("no fit.json in '" + dir + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(meta.string() + ": " + e.what());
  }
  FitResult fit;
  fit.spec = model_spec_from_json(j.at("model"));
  fit.sampler = sampler_config_from_json(j.at("sampler"));
  fit.subject_ids = j.value("subject_ids", std::vector<std::string>{});
  fit.warmup_divergences = j.value("warmup_divergences", 0);
  fit.seconds = j.value("seconds", 0.0);
  const int chains = j.at("chains").get<int>();
  for (int c = 1; c <= chains; ++c) {
    read_chain_csv((fs::path(dir) / ("draws_chain" + std::to_string(c) + ".csv")).string(), c, fit.draws);
  }
  const auto expected = global_columns(fit.spec);
  for (const auto& name : expected) {
    if (!fit.draws.has(name)) throw ValidationError("draws lack column '" + name + "' required by the model");
  }
  if (j.contains("draws_digest") && j["draws_digest"].get<std::string>() != digest(fit.draws)) {
    throw ValidationError("draw files do not match the digest recorded in fit.json");
  }
  // Summaries are restored from the sidecar rather than recomputed so the
  // reported numbers are exactly those written at fit time.
  for (const auto& p : j.at("parameters")) {
    ParameterDiagnostics d;
    d.name = p.at("name").get<std::string>();
    d.summary.p025 = p.at("p2.5").get<double>();
    d.summary.p50 = p.at("p50").get<double>();
    d.summary.p975 = p.at("p97.5").get<double>();
    d.summary.mean = p.at("mean").get<double>();
    d.summary.sd = p.at("sd").get<double>();
    d.rhat = number_or_nan(p.at("rhat"));
    d.ess = number_or_nan(p.at("ess"));
    fit.diagnostics.push_back(d);
  }
  fit.divergences = j.value("divergences", 0);
  const std::string verdict = j.value("verdict", "ok");
  fit.verdict = verdict == "fail" ? Convergence::Fail : verdict == "warn" ? Convergence::Warn : Convergence::Ok;
  return fit;
}

std::string design_audit_csv(const std::vector<SubjectRecord>& records, const ModelSpec& spec) {
  std::ostringstream out;
  out << "id,time";
  for (const auto& t : spec.fixed_terms) out << ",x:" << t;
  for (const auto& t : spec.random_terms) out << ",d:" << t;
  for (const auto& c : spec.survival_covariates) out << ",c:" << c;
  out << '\n';
  for (const auto& r : records) {
    const SubjectDesign d = build_subject_design(r, spec);
    for (int j = 0; j < d.num_measurements(); ++j) {
      out << d.id << ',' << fmt(d.times[j]);
      for (int k = 0; k < d.p; ++k) out << ',' << fmt(d.x[j * d.p + k]);
      for (int k = 0; k < d.q; ++k) out << ',' << fmt(d.d[j * d.q + k]);
      for (int k = 0; k < d.r; ++k) out << ',' << fmt(d.c[k]);
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace rjm
