#include "rjm/design.hpp"

#include "rjm/error.hpp"

namespace rjm {
namespace {

struct AffineTerm {
  double constant = 0.0;
  double per_time = 0.0;
};

double covariate(const SubjectRecord& record, const std::string& name) {
  auto it = record.baseline.find(name);
  if (it == record.baseline.end()) {
    throw ValidationError("subject '" + record.id + "': missing baseline covariate '" + name + "'");
  }
  return it->second;
}

AffineTerm resolve(const SubjectRecord& record, const std::string& term) {
  if (term == "1") return {1.0, 0.0};
  if (term == "time") return {0.0, 1.0};
  constexpr std::string_view prefix = "time:";
  if (term.rfind(prefix, 0) == 0) {
    return {0.0, covariate(record, term.substr(prefix.size()))};
  }
  return {covariate(record, term), 0.0};
}

}  // namespace

std::vector<DesignRow> SubjectDesign::rows() const {
  std::vector<DesignRow> out;
  out.reserve(times.size());
  Eigen::VectorXd cvec = Eigen::Map<const Eigen::VectorXd>(c.data(), r);
  for (int j = 0; j < num_measurements(); ++j) {
    DesignRow row;
    row.x = Eigen::Map<const Eigen::VectorXd>(x.data() + j * p, p);
    row.d = Eigen::Map<const Eigen::VectorXd>(d.data() + j * q, q);
    row.c = cvec;
    out.push_back(std::move(row));
  }
  return out;
}

SubjectDesign build_subject_design(const SubjectRecord& record, const ModelSpec& spec,
                                   bool allow_empty) {
  if (record.measurements.empty() && !allow_empty) {
    throw ValidationError("subject '" + record.id + "' has no measurements");
  }
  SubjectDesign out;
  out.id = record.id;
  out.p = spec.num_fixed();
  out.q = spec.num_random();
  out.r = spec.num_covariates();
  out.event_time = record.event_time;
  out.event = record.event;

  for (const auto& term : spec.fixed_terms) {
    AffineTerm a = resolve(record, term);
    out.x_const.push_back(a.constant);
    out.x_time.push_back(a.per_time);
  }
  for (const auto& term : spec.random_terms) {
    AffineTerm a = resolve(record, term);
    out.d_const.push_back(a.constant);
    out.d_time.push_back(a.per_time);
  }
  for (const auto& name : spec.survival_covariates) out.c.push_back(covariate(record, name));

  const std::size_t m = record.measurements.size();
  out.times.reserve(m);
  out.values.reserve(m);
  out.x.reserve(m * out.p);
  out.d.reserve(m * out.q);
  for (const auto& meas : record.measurements) {
    out.times.push_back(meas.time);
    out.values.push_back(meas.value);
    for (int k = 0; k < out.p; ++k) out.x.push_back(out.x_const[k] + meas.time * out.x_time[k]);
    for (int k = 0; k < out.q; ++k) out.d.push_back(out.d_const[k] + meas.time * out.d_time[k]);
  }
  return out;
}

std::vector<DesignRow> build_design(const SubjectRecord& record, const ModelSpec& spec) {
  return build_subject_design(record, spec).rows();
}

}  // namespace rjm
