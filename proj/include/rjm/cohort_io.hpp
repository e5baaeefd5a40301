#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rjm/types.hpp"

namespace rjm {

struct CohortReport {
  int subjects = 0;
  int longitudinal_rows = 0;
  int survival_rows = 0;
  int subjects_without_measurements = 0;
};

// Long-format longitudinal CSV (id,time,value) and survival CSV
// (id,event_time,event,<covariates...>). Headers are required; column order
// is free. Throws ValidationError listing offending lines.
std::vector<SubjectRecord> read_cohort(const std::string& longitudinal_csv, const std::string& survival_csv,
                                       CohortReport* report = nullptr);

void write_cohort(const std::vector<SubjectRecord>& records, const std::string& longitudinal_csv,
                  const std::string& survival_csv);

// Structural checks: times finite, >= 0 and nondecreasing, event in {0,1},
// event time positive and not before the last measurement. `fitting`
// additionally requires at least one measurement.
void validate_record(const SubjectRecord& record, bool fitting);
void validate_cohort(const std::vector<SubjectRecord>& records, bool fitting);

// Deterministic random split into (learning, validation) halves.
std::pair<std::vector<SubjectRecord>, std::vector<SubjectRecord>> split_cohort(
    const std::vector<SubjectRecord>& records, double learning_fraction, std::uint64_t seed);

}  // namespace rjm
