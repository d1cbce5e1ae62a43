#pragma once

#include <stdexcept>
#include <string>

namespace branchlab {

// Malformed configuration or model input. CLI exit status 2.
struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

// A requested computation whose hypotheses the inputs do not satisfy
// (wrong criticality sign, infinite immigration intensity where a finite one
// is required, ...). CLI exit status 3.
struct ApplicabilityError : std::runtime_error {
  explicit ApplicabilityError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure: step-size underflow, ladder non-convergence, quadrature
// budget exhaustion, population-cap breach. CLI exit status 4.
struct NumericalFault : std::runtime_error {
  explicit NumericalFault(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace branchlab
