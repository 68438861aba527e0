// Copyright (c) 2026 crosspca contributors
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace crosspca {

// Invalid run configuration (bad flags, infeasible dimensions). CLI exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inadmissible input data (parse failures, schema violations,
// rejected matrices). CLI exit code 3.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure that is not a data-schema problem: indefinite inputs,
// ill-conditioned systems, rank deficiencies. CLI exit code 4.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// An iterative solver exhausted its budget or lost monotonicity.
// Carries the recorded objective traces for diagnosis.
struct ConvergenceError : NumericError {
  explicit ConvergenceError(const std::string& msg,
                            std::vector<std::vector<double>> traces = {})
      : NumericError(msg), traces(std::move(traces)) {}
  std::vector<std::vector<double>> traces;
};

}  // namespace crosspca
