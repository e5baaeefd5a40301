#pragma once

#include <stdexcept>
#include <string>

namespace rjm {

// Argument outside the support of a density or transform.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed or inconsistent input data (files, payloads, specs).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite intermediate result during a numerical computation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sampler could not initialise or produced an unusable run.
class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A metric is undefined on the supplied data (e.g. no cases).
class UndefinedMetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rjm
