#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rjm/diagnostics.hpp"
#include "rjm/draws.hpp"
#include "rjm/nuts.hpp"
#include "rjm/types.hpp"

namespace rjm {

struct FitOptions {
  SamplerConfig sampler;
  bool keep_latents = false;
  double rhat_warn = 1.05;
  double rhat_fail = 1.1;
};

struct ParameterDiagnostics {
  std::string name;
  TraceSummary summary;
  double rhat = 0.0;
  double ess = 0.0;
};

struct FitResult {
  ModelSpec spec;
  SamplerConfig sampler;
  PosteriorDraws draws;
  std::vector<std::string> subject_ids;
  std::vector<ParameterDiagnostics> diagnostics;  // global columns only
  int divergences = 0;
  int warmup_divergences = 0;
  Convergence verdict = Convergence::Ok;
  double seconds = 0.0;

  const ParameterDiagnostics& diagnostic(const std::string& name) const;
  double max_rhat() const;
};

// Validates the records, samples the joint posterior and summarises it.
FitResult fit_model(const std::vector<SubjectRecord>& records, const ModelSpec& spec, const FitOptions& options,
                    const std::function<void(int chain, int iteration)>& progress = {});

// Recomputes the summaries, R-hat and ESS of the global columns.
void summarise(FitResult& fit, double rhat_warn = 1.05, double rhat_fail = 1.1);

// Writes draws_chain<k>.csv and fit.json into `dir` (created if missing).
void save_fit(const FitResult& fit, const std::string& dir);
FitResult load_fit(const std::string& dir);

// One row per measurement: id, time, x..., d..., c... at full precision.
std::string design_audit_csv(const std::vector<SubjectRecord>& records, const ModelSpec& spec);

inline constexpr const char* kSchemaVersion = "1.0";

}  // namespace rjm
